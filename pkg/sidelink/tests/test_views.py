from django.contrib.auth.models import User
from django.test import TestCase
from django.urls import reverse

from sidelink.models import BackoffPoint, BlerCell, SweepRun


def run_manifest(kind='bler_sweep', scenario='highway', seed=2019):
    return {'subcommand': kind, 'scenario': scenario, 'master_seed': seed, 'code_version': '1.0.0',
            'config': {'sweep.trials': '100', 'channel.profile': 'indoor-v2v'}}


class RunViewsTest(TestCase):

    @classmethod
    def setUpTestData(cls):
        cls.bler = SweepRun.record(run_manifest(), 'results/bler_sweep', [
            dict(tx_power_dbm=-10.0, mcs=5, n_samples=100, bler_mean=0.01, bler_std=0.1, bler_q99=0.0,
                 low_confidence=False),
        ], BlerCell)
        cls.backoff = SweepRun.record(run_manifest('backoff', 'urban', 7), 'results/backoff', [
            dict(mcs=5, target_bler=0.01, crossing_mean_dbm=-12.0, crossing_q99_dbm=None, backoff_db=None),
        ], BackoffPoint)

    def test_home(self):
        response = self.client.get(reverse('home'))
        self.assertEqual(response.status_code, 200)
        self.assertEqual(list(response.context['latest']), [self.backoff, self.bler])

    def test_run_list(self):
        response = self.client.get(reverse('run_list'))
        self.assertEqual(response.status_code, 200)
        self.assertContains(response, 'highway')
        self.assertContains(response, 'urban')

    def test_run_list_filter(self):
        response = self.client.get(reverse('run_list'), {'kind': 'backoff'})
        self.assertContains(response, 'urban')
        self.assertNotContains(response, 'highway')

    def test_run_detail(self):
        response = self.client.get(reverse('run_detail', args=[self.bler.pk]))
        self.assertEqual(response.status_code, 200)
        self.assertEqual(response.context['run'], self.bler)
        self.assertIn(('channel.profile', 'indoor-v2v'), response.context['config'])
        self.assertEqual(len(response.context['table'].rows), 1)

    def test_detail_with_missing_crossings(self):
        response = self.client.get(reverse('run_detail', args=[self.backoff.pk]))
        self.assertEqual(response.status_code, 200)

    def test_missing_run(self):
        response = self.client.get(reverse('run_detail', args=[9999]))
        self.assertEqual(response.status_code, 404)


class RunAdminTest(TestCase):

    def setUp(self):
        self.client.force_login(User.objects.create_superuser('admin', 'admin@example.com', 'secret'))
        self.run = SweepRun.record(run_manifest(), 'results/bler_sweep', [
            dict(tx_power_dbm=p, mcs=0, n_samples=10, bler_mean=0.0, bler_std=0.0, bler_q99=0.0,
                 low_confidence=True) for p in (-10.0, -8.0)
        ], BlerCell)

    def test_delete_takes_the_rows_along(self):
        url = reverse('admin:sidelink_sweeprun_delete', args=[self.run.pk])
        self.assertEqual(self.client.get(url).status_code, 200)
        response = self.client.post(url, {'post': 'yes'})
        self.assertRedirects(response, reverse('admin:sidelink_sweeprun_changelist'))
        self.assertFalse(SweepRun.objects.exists())
        self.assertFalse(BlerCell.objects.exists())

    def test_delete_results_keeps_the_run(self):
        response = self.client.post(reverse('admin:sidelink_sweeprun_changelist'),
                                    {'action': 'delete_results', '_selected_action': [self.run.pk]})
        self.assertEqual(response.status_code, 302)
        self.assertTrue(SweepRun.objects.filter(pk=self.run.pk).exists())
        self.assertFalse(BlerCell.objects.exists())
