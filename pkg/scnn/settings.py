"""Django settings for the systolic CNN accelerator simulator.

Settings in this file are acceptable for a development environment. They should
be replaced using environment variables in a production environment.

The following settings can be set from environment variables:
  DEBUG
  SECRET_KEY
  SECRET_KEY_FILE
  ALLOWED_HOSTS
  ERROR_LOG
  LOG_LEVEL
  SCNN_THREADS
  SCNN_FIXTURES_DIR
  SCNN_DEFAULT_FPGA
  SCNN_SEED
"""

from pathlib import Path

import environ


# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Setup environ
env = environ.Env(

    DEBUG=(bool, True),

    ERROR_LOG=(str, None),

    LOG_LEVEL=(str, 'WARNING'),

    SECRET_KEY=(
        str,
        'django-insecure-0v$k3r!m2z8c)q1w7t@4y9n&b5x(h6j-f+e%d^a_s#p*l=u'
    ),

    SECRET_KEY_FILE=(str, None),

    ALLOWED_HOSTS=(list, []),

    SCNN_THREADS=(int, 0),

    SCNN_FIXTURES_DIR=(str, str(BASE_DIR / 'fixtures')),

    SCNN_DEFAULT_FPGA=(str, 'arria10'),

    SCNN_SEED=(int, 0),

)


# Environment-dependent settings

if not env('SECRET_KEY_FILE'):
    SECRET_KEY = env('SECRET_KEY')
else:
    with open(env('SECRET_KEY_FILE'), 'rb') as secret_key_file:
        SECRET_KEY = secret_key_file.read()

DEBUG = env('DEBUG')
ALLOWED_HOSTS = env('ALLOWED_HOSTS')
ERROR_LOG = env('ERROR_LOG')
LOG_LEVEL = env('LOG_LEVEL').upper()


# Simulator settings

# Upper bound on concurrently evaluated DSE sweep points; 0 means serial.
SCNN_THREADS = env('SCNN_THREADS')

FIXTURES_DIR = Path(env('SCNN_FIXTURES_DIR'))
MODELS_DIR = FIXTURES_DIR / 'models'
FPGA_DIR = FIXTURES_DIR / 'fpga'

DEFAULT_FPGA = env('SCNN_DEFAULT_FPGA')
DEFAULT_SEED = env('SCNN_SEED')


# No database: every artifact is a file, every test a SimpleTestCase.
DATABASES = {}


# Logging

_PROJECT_APPS = [
    'arch_core',
    'oracle_ops',
    'memrd',
    'pe_array',
    'aux_kernels',
    'perf_model',
    'dse',
    'host_runtime',
    'api_lib',
]

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {
            "format": "%(levelname)s %(name)s: %(message)s",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "plain",
        },
    },
    "loggers": {
        app: {
            "handlers": ["console"],
            "level": LOG_LEVEL,
            "propagate": True,
        }
        for app in _PROJECT_APPS
    },
}

# Logging setup for production
if ERROR_LOG:
    LOGGING["handlers"]["file"] = {
        "level": "WARNING",
        "class": "logging.FileHandler",
        "filename": ERROR_LOG,
    }
    for logger_name in ['django', *_PROJECT_APPS]:
        LOGGING["loggers"].setdefault(logger_name, {
            "handlers": [],
            "level": "WARNING",
            "propagate": True,
        })
        LOGGING["loggers"][logger_name]["handlers"].append("file")


# (Here be dragons)
# Application definition

INSTALLED_APPS = [
    'arch_core.apps.ArchCoreConfig',
    'oracle_ops.apps.OracleOpsConfig',
    'memrd.apps.MemrdConfig',
    'pe_array.apps.PeArrayConfig',
    'aux_kernels.apps.AuxKernelsConfig',
    'perf_model.apps.PerfModelConfig',
    'dse.apps.DseConfig',
    'host_runtime.apps.HostRuntimeConfig',
    'api_lib.apps.ApiLibConfig',
]

MIDDLEWARE = [
    'django.middleware.security.SecurityMiddleware',
    'django.middleware.common.CommonMiddleware',
    'django.middleware.clickjacking.XFrameOptionsMiddleware',
]

ROOT_URLCONF = 'scnn.urls'

WSGI_APPLICATION = 'scnn.wsgi.application'


# Internationalization
# https://docs.djangoproject.com/en/5.0/topics/i18n/

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True
