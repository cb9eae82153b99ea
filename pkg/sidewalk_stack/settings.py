"""
Django settings for sidewalk_stack project.

Generated by 'django-admin startproject' using Django 4.2.23.

For more information on this file, see
https://docs.djangoproject.com/en/4.2/topics/settings/

For the full list of settings and their values, see
https://docs.djangoproject.com/en/4.2/ref/settings/
"""

from pathlib import Path
import os

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# Quick-start development settings - unsuitable for production
# See https://docs.djangoproject.com/en/4.2/howto/deployment/checklist/

# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = os.environ.get('SIDEWALK_SECRET_KEY', 'django-insecure-sidewalk-stack-local-only')

DEBUG = os.environ.get('SIDEWALK_DEBUG', '0') == '1'

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'core',
]


# Database
# https://docs.djangoproject.com/en/4.2/ref/settings/#databases
# Nothing is stored; the engine only keeps `manage.py check` and the test runner happy.

DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': BASE_DIR / 'db.sqlite3',
    }
}


# Internationalization
# https://docs.djangoproject.com/en/4.2/topics/i18n/

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Logging
# https://docs.djangoproject.com/en/4.2/topics/logging/

LOG_LEVEL = os.environ.get('SIDEWALK_LOG_LEVEL', 'INFO').upper()

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
        'navigation': {
            'handlers': ['console'],
            'level': LOG_LEVEL,
            'propagate': False,
        },
        'core': {
            'handlers': ['console'],
            'level': LOG_LEVEL,
            'propagate': False,
        },
    },
}


# Navigation stack parameters
# Nested {section: {key: value}}; any field of navigation.config can be set here.
# Scenario files and `run_trials --override` take precedence over these values.

NAVIGATION = {
    'robot': {
        'radius': 0.4,
        'v_max': 0.8,
    },
    'curb': {
        'ransac_threshold': 0.05,
        'alpha': 5.0,
    },
}

SCENARIO_DIR = BASE_DIR / 'scenarios'
RUNS_DIR = BASE_DIR / 'runs'
