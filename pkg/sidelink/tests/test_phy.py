import numpy as np
from django.test import SimpleTestCase, tag
from numpy.testing import assert_allclose, assert_array_equal

from sidelink.channel import FadingChannel, ImpairmentConfig, channel_profile
from sidelink.evaluator import measure_uncoded_ber
from sidelink.exceptions import ConfigError, ContractError
from sidelink.grid import Allocation, GridConfig, empty_grid, pool_dmrs, pscch_re_count, pssch_re_count
from sidelink.link import LinkConfig, LinkSimulator
from sidelink.phy_rx import (
    ReceiverConfig, SidelinkReceiver, blind_decode_pscch, correct_cfo, decode_pssch, equalize, estimate_cfo,
    estimate_channel, estimate_timing, ofdm_demodulate, receive_subframe, zero_forcing,
)
from sidelink.phy_tx import (
    SCI_BITS, LinkIds, OfdmConfig, Sci, build_tx_subframe, encode_pscch, encode_pssch, ofdm_modulate,
    random_payload, transmit_grid,
)

SMALL_GRID = GridConfig(n_subchannels=2)


def small_link(profile='ideal', **impairments):
    return LinkConfig(grid=SMALL_GRID, channel=channel_profile(profile),
                      impairments=ImpairmentConfig(**impairments), alloc=Allocation(0, 2))


class SciTest(SimpleTestCase):

    def test_round_trip(self):
        for sci in (Sci(0, 1), Sci(28, 6, 5, 7), Sci(13, 2, 2, 3)):
            bits = sci.to_bits()
            self.assertEqual(len(bits), SCI_BITS)
            self.assertEqual(Sci.from_bits(bits), sci)

    def test_field_overflow(self):
        with self.assertRaises(ContractError):
            Sci(32, 1)
        with self.assertRaises(ContractError):
            Sci(0, 1, rri_code=7)
        with self.assertRaises(ContractError):
            Sci(0, 0)

    def test_reserved_bits(self):
        bits = Sci(3, 1).to_bits()
        bits[-1] = 1
        with self.assertRaises(ContractError):
            Sci.from_bits(bits)

    def test_for_period(self):
        sci = Sci.for_period(5, 2, 100)
        self.assertEqual(sci.rri_code, 5)
        self.assertEqual(sci.reservation_ms, 100)


class OfdmTest(SimpleTestCase):

    def test_geometry(self):
        ofdm = OfdmConfig()
        self.assertEqual(ofdm.sample_rate, 7.68e6)
        self.assertEqual(ofdm.subframe_len(GridConfig()), 14 * 576)
        self.assertEqual(len(set(ofdm.bins(GridConfig()))), 288)

    def test_too_many_subcarriers(self):
        with self.assertRaises(ConfigError):
            OfdmConfig(fft_size=256).bins(GridConfig())
        with self.assertRaises(ConfigError):
            OfdmConfig(cp_len=512)

    def test_round_trip(self):
        cfg, ofdm = GridConfig(), OfdmConfig()
        rng = np.random.default_rng(2)
        grid = rng.standard_normal((14, 288)) + 1j * rng.standard_normal((14, 288))
        samples = ofdm_modulate(grid, cfg, ofdm)
        self.assertEqual(len(samples), ofdm.subframe_len(cfg))
        assert_allclose(ofdm_demodulate(samples, cfg, ofdm), grid, atol=1e-10)

    def test_wrong_length(self):
        with self.assertRaises(ContractError):
            ofdm_demodulate(np.zeros(100), GridConfig(), OfdmConfig())

    def test_tx_power(self):
        cfg, ofdm = SMALL_GRID, OfdmConfig()
        alloc = Allocation(0, 2)
        payload = random_payload(5, alloc, cfg, np.random.default_rng(0))
        tx = build_tx_subframe(payload, Sci(5, 2), alloc, LinkIds(1, 0), cfg, ofdm, tx_power_dbm=-10.0)
        self.assertAlmostEqual(np.mean(np.abs(tx.samples) ** 2), 0.1)

    def test_sci_width_mismatch(self):
        alloc = Allocation(0, 2)
        payload = random_payload(5, alloc, SMALL_GRID, np.random.default_rng(0))
        with self.assertRaises(ContractError):
            transmit_grid(payload, Sci(5, 1), alloc, LinkIds(1, 0), SMALL_GRID)


class ControlAndSharedChannelTest(SimpleTestCase):

    def test_symbol_counts(self):
        alloc = Allocation(0, 2)
        self.assertEqual(len(encode_pscch(Sci(5, 2), 1, 0, SMALL_GRID)), pscch_re_count(SMALL_GRID))
        payload = random_payload(5, alloc, SMALL_GRID, np.random.default_rng(0))
        symbols = encode_pssch(payload, 5, alloc, 1, 0, SMALL_GRID)
        self.assertEqual(len(symbols), pssch_re_count(SMALL_GRID, alloc))
        assert_allclose(np.abs(encode_pscch(Sci(5, 2), 1, 0, SMALL_GRID)), 1.0)

    def test_payload_length_checked(self):
        with self.assertRaises(ContractError):
            encode_pssch(np.zeros(10, dtype=np.uint8), 5, Allocation(0, 2), 1, 0, SMALL_GRID)

    def test_cfo_estimate_from_dmrs_phase(self):
        alloc, ids, ofdm = Allocation(0, 2), LinkIds(1, 4), OfdmConfig()
        payload = random_payload(3, alloc, SMALL_GRID, np.random.default_rng(1))
        grid = transmit_grid(payload, Sci(3, 2), alloc, ids, SMALL_GRID)
        dmrs = pool_dmrs(SMALL_GRID, ids.vehicle_id, ids.subframe_idx)
        self.assertAlmostEqual(estimate_cfo(grid, SMALL_GRID, dmrs, ofdm), 0.0)
        rotated = correct_cfo(grid, -250.0, SMALL_GRID, ofdm)
        self.assertAlmostEqual(estimate_cfo(rotated, SMALL_GRID, dmrs, ofdm), 250.0, places=6)


class LoopbackTest(SimpleTestCase):

    def test_ideal_channel(self):
        sim = LinkSimulator(small_link())
        rng = np.random.default_rng(4)
        for mcs in (0, 9, 16, 28):
            outcomes = sim.run_window(0.0, mcs, range(3), rng)
            self.assertTrue(all(o.payload_exact and o.sci_detected for o in outcomes), mcs)

    def test_awgn_with_cfo_and_timing(self):
        link = small_link('awgn', cfo_hz=300.0, timing_offset_samples=3)
        sim = LinkSimulator(link)
        rng = np.random.default_rng(8)
        outcomes = sim.run_window(0.0, 10, range(4), rng)
        self.assertTrue(all(o.crc_pass for o in outcomes))

        payload = random_payload(10, link.alloc, link.grid, rng)
        ids = LinkIds(link.vehicle_id, 5)
        tx = build_tx_subframe(payload, sim.sci_for(10), link.alloc, ids, link.grid, link.ofdm)
        result = receive_subframe(sim.propagate(tx.samples, 5, 0.0, rng), link.grid, link.ofdm, ids)
        self.assertLess(abs(result.cfo_estimate_hz - 300.0), 20.0)
        assert_array_equal(result.block_at(0).payload, payload)

    def test_wrong_vehicle_id_finds_nothing(self):
        link = small_link()
        rng = np.random.default_rng(1)
        payload = random_payload(3, link.alloc, link.grid, rng)
        grid = transmit_grid(payload, Sci(3, 2), link.alloc, LinkIds(1, 0), link.grid)
        self.assertEqual(blind_decode_pscch(grid, link.grid, 2, 0), [])


class ReceiverTest(SimpleTestCase):

    def setUp(self):
        self.cfg = GridConfig(n_subchannels=4)
        self.ids = LinkIds(3, 9)
        self.rng = np.random.default_rng(6)

    def test_two_transmissions_in_one_subframe(self):
        cfg, ids = self.cfg, self.ids
        wide, narrow = Allocation(0, 2), Allocation(2, 1)
        p1 = random_payload(5, wide, cfg, self.rng)
        p2 = random_payload(0, narrow, cfg, self.rng)
        grid = transmit_grid(p1, Sci(5, 2), wide, ids, cfg)
        transmit_grid(p2, Sci(0, 1), narrow, ids, cfg, grid=grid)

        result = SidelinkReceiver(cfg).receive_grids([(grid, ids)])[0]
        self.assertEqual(result.detected_scis, [(0, Sci(5, 2)), (2, Sci(0, 1))])
        assert_array_equal(result.block_at(0).payload, p1)
        assert_array_equal(result.block_at(2).payload, p2)
        self.assertTrue(result.block_at(2).crc_pass)
        self.assertIsNone(result.block_at(3))

    def test_decode_pssch_with_known_sci(self):
        alloc = Allocation(1, 2)
        payload = random_payload(9, alloc, self.cfg, self.rng)
        grid = transmit_grid(payload, Sci(9, 2), alloc, self.ids, self.cfg)
        decoded, crc_pass = decode_pssch(grid, self.cfg, Sci(9, 2), 1, self.ids)
        self.assertTrue(crc_pass)
        assert_array_equal(decoded, payload)

    def test_empty_grid(self):
        self.assertEqual(blind_decode_pscch(empty_grid(self.cfg), self.cfg, 3, 9), [])

    def test_flat_channel_estimate(self):
        cfg, ids = self.cfg, self.ids
        alloc = Allocation(0, 4)
        payload = random_payload(2, alloc, cfg, self.rng)
        gain = 0.5 - 0.2j
        grid = gain * transmit_grid(payload, Sci(2, 4), alloc, ids, cfg)
        estimate = estimate_channel(grid, cfg, alloc, pool_dmrs(cfg, ids.vehicle_id, ids.subframe_idx))
        assert_allclose(estimate.gains, gain)
        self.assertAlmostEqual(estimate.noise_var, 0.0)

    def test_zero_forcing(self):
        cells = self.rng.standard_normal(10) + 1j * self.rng.standard_normal(10)
        gains = self.rng.standard_normal(10) + 1j * self.rng.standard_normal(10)
        symbols, _ = equalize(cells, gains, 0.0).unbiased()
        assert_allclose(symbols, cells / gains)

    def test_mmse_shrinks(self):
        eq = equalize(np.ones(3), np.ones(3), 1.0)
        assert_allclose(eq.bias, 0.5)
        assert_allclose(eq.unbiased()[0], 1.0)

    def test_zero_forcing_variance_per_cell(self):
        cells = np.array([1 + 1j, 0.5, 2j])
        gains = np.array([2.0, 0.5j, 0.0])
        symbols, var = zero_forcing(cells, gains, 0.01)
        assert_allclose(symbols[:2], cells[:2] / gains[:2])
        assert_allclose(var[:2], [0.0025, 0.04])
        self.assertEqual(symbols[2], 0)
        self.assertGreater(var[2], 1e6)

    def test_zero_forcing_matches_unbiased_mmse(self):
        cells = self.rng.standard_normal(20) + 1j * self.rng.standard_normal(20)
        gains = self.rng.standard_normal(20) + 1j * self.rng.standard_normal(20)
        symbols, var = zero_forcing(cells, gains, 0.2)
        mmse_symbols, mmse_var = equalize(cells, gains, 0.2).unbiased()
        assert_allclose(symbols, mmse_symbols)
        assert_allclose(var, mmse_var)

    def test_noise_estimate_ignores_delay_ramp(self):
        cfg, ids, ofdm = GridConfig(), self.ids, OfdmConfig()
        dmrs = pool_dmrs(cfg, ids.vehicle_id, ids.subframe_idx)
        noise_var = 1e-3
        ramp = np.exp(-2j * np.pi * np.arange(cfg.n_subcarriers) * 40 / ofdm.fft_size)
        grid = empty_grid(cfg)
        grid[list(cfg.dmrs_symbols)] = dmrs * ramp
        grid += np.sqrt(noise_var / 2) * (self.rng.standard_normal(grid.shape)
                                          + 1j * self.rng.standard_normal(grid.shape))
        estimate = estimate_channel(grid, cfg, Allocation(0, 6), dmrs)
        self.assertAlmostEqual(estimate.noise_var / noise_var, 1.0, delta=0.2)
        self.assertAlmostEqual(estimate_timing(grid, cfg, dmrs, ofdm), 40.0, delta=0.5)

    def test_pure_noise_detects_nothing(self):
        receiver = SidelinkReceiver(self.cfg)
        grids = [(self.rng.standard_normal((14, self.cfg.n_subcarriers))
                  + 1j * self.rng.standard_normal((14, self.cfg.n_subcarriers)), LinkIds(3, i)) for i in range(100)]
        results = receiver.receive_grids(grids)
        self.assertEqual(sum(len(r.detected_scis) for r in results), 0)

    def test_agc_and_guard_symbols_carry_nothing(self):
        cfg, ids, ofdm = self.cfg, self.ids, OfdmConfig()
        alloc = Allocation(0, 4)
        payload = random_payload(12, alloc, cfg, self.rng)
        tx = build_tx_subframe(payload, Sci(12, 4), alloc, ids, cfg, ofdm)
        samples = tx.samples.copy()
        for symbol in (cfg.agc_symbol, cfg.guard_symbol):
            span = slice(symbol * ofdm.symbol_len, (symbol + 1) * ofdm.symbol_len)
            samples[span] = 5 * (self.rng.standard_normal(ofdm.symbol_len)
                                 + 1j * self.rng.standard_normal(ofdm.symbol_len))
        result = receive_subframe(samples, cfg, ofdm, ids)
        self.assertEqual(result.detected_scis, [(0, Sci(12, 4))])
        assert_array_equal(result.block_at(0).payload, payload)


class TimingTest(SimpleTestCase):

    def test_early_window_absorbs_small_offsets(self):
        cfg, ofdm = SMALL_GRID, OfdmConfig()
        rng = np.random.default_rng(12)
        grid = rng.standard_normal((14, cfg.n_subcarriers)) + 1j * rng.standard_normal((14, cfg.n_subcarriers))
        samples = ofdm_modulate(grid, cfg, ofdm)
        for offset in (-20, 20):
            assert_allclose(ofdm_demodulate(np.roll(samples, offset), cfg, ofdm)
                            * np.exp(2j * np.pi * ofdm.bins(cfg) * offset / ofdm.fft_size), grid, atol=1e-10)
        self.assertFalse(np.allclose(ofdm_demodulate(np.roll(samples, -20), cfg, ofdm, advance=0)
                                     * np.exp(-2j * np.pi * ofdm.bins(cfg) * 20 / ofdm.fft_size), grid))

    def test_bad_advance(self):
        cfg, ofdm = SMALL_GRID, OfdmConfig()
        with self.assertRaises(ContractError):
            ofdm_demodulate(np.zeros(ofdm.subframe_len(cfg)), cfg, ofdm, advance=65)

    def test_offsets_anywhere_inside_cp(self):
        rng = np.random.default_rng(13)
        for offset in (-63, -40, 40, 63):
            sim = LinkSimulator(small_link(timing_offset_samples=offset))
            for mcs in (0, 15, 28):
                outcomes = sim.run_window(0.0, mcs, range(3), rng)
                self.assertTrue(all(o.payload_exact and o.sci_detected for o in outcomes), (offset, mcs))

    def test_offset_is_reported(self):
        link = small_link(timing_offset_samples=-50)
        sim = LinkSimulator(link)
        rng = np.random.default_rng(14)
        payload = random_payload(20, link.alloc, link.grid, rng)
        ids = LinkIds(link.vehicle_id, 2)
        tx = build_tx_subframe(payload, sim.sci_for(20), link.alloc, ids, link.grid, link.ofdm)
        result = receive_subframe(sim.propagate(tx.samples, 2, 0.0, rng), link.grid, link.ofdm, ids)
        self.assertEqual(result.timing_offset_estimate, -50)
        assert_array_equal(result.block_at(0).payload, payload)

    def test_without_correction_early_arrival_breaks_high_mcs(self):
        link = LinkConfig(grid=SMALL_GRID, channel=channel_profile('ideal'),
                          impairments=ImpairmentConfig(timing_offset_samples=-63),
                          receiver=ReceiverConfig(timing_correction=False), alloc=Allocation(0, 2))
        outcomes = LinkSimulator(link).run_window(0.0, 28, range(3), np.random.default_rng(15))
        self.assertFalse(any(o.crc_pass for o in outcomes))


class ReceiverQualityTest(SimpleTestCase):

    def test_all_mcs_and_widths_on_ideal_channel(self):
        rng = np.random.default_rng(16)
        for width in (1, 2, 6):
            sim = LinkSimulator(LinkConfig(channel=channel_profile('ideal'), alloc=Allocation(0, width)))
            for mcs in range(29):
                outcomes = sim.run_window(0.0, mcs, range(2), rng)
                self.assertTrue(all(o.payload_exact and o.sci_detected for o in outcomes), (width, mcs))

    @tag('slow')
    def test_all_mcs_and_widths_many_subframes(self):
        rng = np.random.default_rng(17)
        for width in (1, 2, 6):
            sim = LinkSimulator(LinkConfig(channel=channel_profile('ideal'), alloc=Allocation(0, width)))
            for mcs in range(29):
                outcomes = sim.run_window(0.0, mcs, range(200), rng)
                self.assertTrue(all(o.payload_exact and o.sci_detected for o in outcomes), (width, mcs))

    def test_coded_beats_uncoded_at_equal_snr(self):
        cfg, alloc = SMALL_GRID, Allocation(0, 2)
        rng = np.random.default_rng(18)
        snr_db = 3.0
        noise_var = 10 ** (-snr_db / 10)
        grids, payloads = [], []
        for idx in range(20):
            ids = LinkIds(1, idx)
            payload = random_payload(0, alloc, cfg, rng)
            grid = transmit_grid(payload, Sci(0, 2), alloc, ids, cfg)
            grid += np.sqrt(noise_var / 2) * (rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape))
            grids.append((grid, ids))
            payloads.append(payload)
        results = SidelinkReceiver(cfg).receive_grids(grids)
        coded = np.mean([not (r.block_at(0) and r.block_at(0).crc_pass) for r in results])

        ber = measure_uncoded_ber(snr_db, 200_000, rng)
        uncoded = 1 - (1 - ber) ** len(payloads[0])
        self.assertLess(coded, uncoded)
        self.assertGreater(uncoded, 0.5)

    def test_cfo_correction_pays_off(self):
        rng = np.random.default_rng(19)
        errors = {}
        for enabled in (True, False):
            link = LinkConfig(grid=SMALL_GRID, channel=channel_profile('ideal'),
                              impairments=ImpairmentConfig(cfo_hz=1000.0),
                              receiver=ReceiverConfig(cfo_correction=enabled), alloc=Allocation(0, 2))
            outcomes = LinkSimulator(link).run_window(0.0, 16, range(4), rng)
            errors[enabled] = sum(not o.crc_pass for o in outcomes)
        self.assertEqual(errors[True], 0)
        self.assertGreater(errors[False], 0)

    def test_mmse_no_worse_than_zero_forcing(self):
        errors = {}
        for equalizer in ('mmse', 'zf'):
            link = LinkConfig(grid=SMALL_GRID, channel=channel_profile('rayleigh_flat'),
                              receiver=ReceiverConfig(equalizer=equalizer), alloc=Allocation(0, 2))
            outcomes = LinkSimulator(link, channel_seed=21).run_window(-12.0, 10, range(20),
                                                                        np.random.default_rng(20))
            errors[equalizer] = sum(not o.crc_pass for o in outcomes)
        self.assertLessEqual(errors['mmse'], errors['zf'])

    def test_estimate_error_tracks_noise(self):
        cfg, ofdm, ids = GridConfig(), OfdmConfig(), LinkIds(1, 0)
        alloc = Allocation(0, 6)
        receiver = SidelinkReceiver(cfg, ofdm, ReceiverConfig(cfo_correction=False))
        channel = FadingChannel(channel_profile('rayleigh_flat', seed=4), ofdm.sample_rate)
        rng = np.random.default_rng(22)
        payload = random_payload(5, alloc, cfg, rng)
        samples = ofdm_modulate(transmit_grid(payload, Sci(5, 6), alloc, ids, cfg), cfg, ofdm)
        for snr_db in (0.0, 10.0, 20.0):
            noise_var = 10 ** (-snr_db / 10)
            errors = []
            for k in range(10):
                faded, trace = channel.apply(samples, k * ofdm.subframe_len(cfg))
                noisy = faded + np.sqrt(noise_var / 2) * (rng.standard_normal(faded.shape)
                                                          + 1j * rng.standard_normal(faded.shape))
                gains = receiver.front_end(noisy, ids).estimate.gains
                truth = trace.frequency_response(cfg, ofdm)
                errors.append(np.mean(np.abs(gains - truth) ** 2))
            ratio = np.mean(errors) / noise_var
            self.assertTrue(0.5 <= ratio <= 2.0, (snr_db, ratio))
