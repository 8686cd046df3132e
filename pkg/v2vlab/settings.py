"""
Django settings for v2vlab project.

For more information on this file, see
https://docs.djangoproject.com/en/5.0/topics/settings/

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.0/ref/settings/
"""
import os
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = os.environ.get('V2VLAB_SECRET_KEY', 'django-insecure-v2vlab-desk-simulation-only')

# SECURITY WARNING: don't run with debug turned on in production!
DEBUG = os.environ.get('V2VLAB_DEBUG', '1') == '1'

ALLOWED_HOSTS = ['localhost', '127.0.0.1']


# Application definition

INSTALLED_APPS = [
    'django.contrib.admin',
    'django.contrib.auth',
    'django.contrib.contenttypes',
    'django.contrib.sessions',
    'django.contrib.messages',
    'django.contrib.staticfiles',
    'django_tables2',
    'django_filters',
    'bootstrap3',
    'sidelink',
]

MIDDLEWARE = [
    'django.middleware.security.SecurityMiddleware',
    'django.contrib.sessions.middleware.SessionMiddleware',
    'django.middleware.common.CommonMiddleware',
    'django.middleware.csrf.CsrfViewMiddleware',
    'django.contrib.auth.middleware.AuthenticationMiddleware',
    'django.contrib.messages.middleware.MessageMiddleware',
    'django.middleware.clickjacking.XFrameOptionsMiddleware',
]

ROOT_URLCONF = 'v2vlab.urls'

TEMPLATES = [
    {
        'BACKEND': 'django.template.backends.django.DjangoTemplates',
        'DIRS': [],
        'APP_DIRS': True,
        'OPTIONS': {
            'context_processors': [
                'django.template.context_processors.debug',
                'django.template.context_processors.request',
                'django.contrib.auth.context_processors.auth',
                'django.contrib.messages.context_processors.messages',
            ],
        },
    },
]

WSGI_APPLICATION = 'v2vlab.wsgi.application'
DJANGO_TABLES2_TEMPLATE = 'django_tables2/bootstrap.html'

# Database
# https://docs.djangoproject.com/en/5.0/ref/settings/#databases

DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': BASE_DIR / 'v2vlab.sqlite3',
    }
}


# Password validation
# https://docs.djangoproject.com/en/5.0/ref/settings/#auth-password-validators

AUTH_PASSWORD_VALIDATORS = [
    {
        'NAME': 'django.contrib.auth.password_validation.UserAttributeSimilarityValidator',
    },
    {
        'NAME': 'django.contrib.auth.password_validation.MinimumLengthValidator',
        'OPTIONS': {
            'min_length': 8,
        }
    },
    {
        'NAME': 'django.contrib.auth.password_validation.CommonPasswordValidator',
    },
]


# Internationalization
# https://docs.djangoproject.com/en/5.0/topics/i18n/

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = True

USE_TZ = True

# Static files (CSS, JavaScript, Images)
# https://docs.djangoproject.com/en/5.0/howto/static-files/

STATIC_URL = '/static/'
STATIC_ROOT = Path.joinpath(BASE_DIR, 'static')

# Default primary key field type
# https://docs.djangoproject.com/en/5.0/ref/settings/#default-auto-field

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

# Logging
# https://docs.djangoproject.com/en/5.0/topics/logging/

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'simple': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
    },
    'loggers': {
        'sidelink': {
            'handlers': ['console'],
            'level': os.environ.get('SIDELINK_LOG_LEVEL', 'INFO'),
            'propagate': False,
        },
    },
}

# Simulator defaults; experiment files and --set overrides use the same keys.

SIDELINK_DEFAULTS = {
    'scenario.name': 'default',

    'grid.n_symbols': 14,
    'grid.sc_per_subchannel': 48,
    'grid.n_subchannels': 6,
    'grid.dmrs_symbols': [2, 5, 8, 11],
    'grid.agc_symbol': 0,
    'grid.guard_symbol': 13,
    'grid.pscch_width_sc': 12,

    'ofdm.fft_size': 512,
    'ofdm.cp_len': 64,
    'ofdm.subcarrier_spacing_hz': 15e3,

    'channel.profile': 'indoor-v2v',
    'channel.model': 'rayleigh_tdl',
    'channel.doppler_hz': 60.0,
    'channel.tap_delays': [0, 4, 9],
    'channel.tap_powers': [0.7, 0.2, 0.1],
    'channel.seed': 1,

    'impairments.cfo_hz': 300.0,
    'impairments.timing_offset_samples': 0,
    'impairments.cfo_enabled': True,
    'impairments.timing_enabled': True,

    'calibration.gain_offset_db': 30.0,

    'receiver.cfo_correction': True,
    'receiver.timing_correction': True,
    'receiver.equalizer': 'mmse',

    'pool.n_subchannels': 6,
    'pool.selection_period_ms': 100,
    'pool.sensing_window_ms': 100,
    'pool.keep_fraction': 0.2,
    'pool.rssi_threshold': '-inf',
    'pool.reselection_min': 5,
    'pool.reselection_max': 15,

    'sweep.tx_power_dbm': [-20.0, -18.0, -16.0, -14.0, -12.0, -10.0, -8.0, -6.0],
    'sweep.mcs': [0, 5, 10, 15],
    'sweep.trials': 100,
    'sweep.windows_per_trial': 1,
    'sweep.window_blocks': 1000,
    'sweep.master_seed': 2019,
    'sweep.start_subchannel': 0,
    'sweep.n_subchannels': 6,
    'sweep.vehicle_id': 1,
    'sweep.blocks_per_second': 1000.0,
    'sweep.target_bler': 0.01,
    'sweep.log_floor': 1e-6,
    'sweep.throughput_power_dbm': -14.0,
    'sweep.throughput_mcs': list(range(29)),

    'sps.vehicles': [20],
    'sps.policies': ['random', 'sensing'],
    'sps.duration_ms': 10000,
    'sps.width': 1,
    'sps.mcs': 5,
    'sps.link_snr_db': 20.0,
    'sps.mode': 'abstract',
    'sps.replicas': 5,
    'sps.calibration_blocks': 40,
    'sps.calibration_snr_db': [float(snr) for snr in range(-16, 17, 2)],
    'sps.tx_power_dbm': -10.0,

    'traffic.mcs': 0,
    'traffic.start_subchannel': 0,
    'traffic.n_subchannels': 1,
    'traffic.tx_power_dbm': -10.0,
    'traffic.background_vehicles': 0,
    'traffic.background_policy': 'sensing',
}
