"""
Django settings for core project.

Generated by 'django-admin startproject' using Django 5.2.6.

Проект не обслуживает HTTP: Django даёт команды manage.py, тестовый
раннер и ORM для реестра прогонов.
"""

from pathlib import Path

from core import config

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = config.env.str("DJANGO_SECRET_KEY", "gridsyn-local-only")

DEBUG = config.env.bool("DJANGO_DEBUG", False)

ALLOWED_HOSTS: list[str] = []

# Application definition

INSTALLED_APPS = [
    'django.contrib.contenttypes',

    'plant',
    'netgraph',
    'decomp',
    'nlp',
    'empc',
    'scenario',
    'runner',
]

MIDDLEWARE: list[str] = []


# Database
# https://docs.djangoproject.com/en/5.2/ref/settings/#databases

DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': BASE_DIR / 'db.sqlite3',
    }
}


# Internationalization

LANGUAGE_CODE = 'ru'

TIME_ZONE = 'UTC'

USE_I18N = True

USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# ==============================
# Логирование
# ==============================

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {"format": "%(asctime)s %(levelname)s %(name)s: %(message)s"},
    },
    "handlers": {
        "console": {"class": "logging.StreamHandler", "formatter": "plain"},
    },
    "root": {"handlers": ["console"], "level": config.LOG_LEVEL},
}


# ==============================
# Параметры расчётов
# ==============================

GRIDSYN = {
    "PARAMS": config.PARAMS_PATH,
    "SCENARIO": config.SCENARIO_PATH,
    "OUT": config.OUT_DIR,
    "SEED": config.SEED,
    "WORKERS": config.WORKERS,
    "RECORD_RUNS": config.RECORD_RUNS,
}
