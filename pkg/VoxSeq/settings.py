"""
Django settings for VoxSeq project.

The project hosts the ``voxseq`` app: voxel reordering schemes, the selective
SSM / Mamba numerics and the toy occupancy pipeline. Everything runs through
``manage.py`` management commands; the admin is only used to browse recorded
training runs and locality reports.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.0/ref/settings/
"""

import os
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = os.environ.get('VOXSEQ_SECRET_KEY', 'django-insecure-voxseq-local-only')

DEBUG = os.environ.get('VOXSEQ_DEBUG', '0') == '1'

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'voxseq',
    'django.contrib.admin',
    'django.contrib.auth',
    'django.contrib.contenttypes',
    'django.contrib.sessions',
    'django.contrib.messages',
    'django.contrib.staticfiles',
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

ROOT_URLCONF = 'VoxSeq.urls'

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


# Database
# Training runs and locality reports are recorded here when asked for.

DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': BASE_DIR / 'db.sqlite3',
    }
}


LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = True

USE_TZ = True

STATIC_URL = 'static/'

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Logging

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'loggers': {
        'voxseq': {
            'handlers': ['console'],
            'level': os.environ.get('VOXSEQ_LOG_LEVEL', 'INFO'),
            'propagate': False,
        },
    },
}


# VoxSeq settings

# Caps internal parallelism (scene evaluation); 0 means one worker per CPU.
VOXSEQ_THREADS = int(os.environ.get('VOXSEQ_THREADS', '0') or 0)

# "float64" is test mode (gradient checks, acceptance runs), "float32" is fast mode.
VOXSEQ_PRECISION = os.environ.get('VOXSEQ_PRECISION', 'float64')

VOXSEQ_IGNORE_LABEL = 255

# Default directory for training logs and parameter files.
VOXSEQ_OUTPUT_DIR = BASE_DIR / 'runs'

# Held-out evaluation scenes use seeds starting here; training scenes stay below.
VOXSEQ_EVAL_SEED_BASE = 1_000_000
