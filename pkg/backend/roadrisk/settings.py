"""
Django settings for the roadrisk project.

The project has no web surface: Django provides the configuration layer,
the management-command CLI and the run registry database.
"""

import os
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = os.environ.get("DJANGO_SECRET_KEY", "roadrisk-local-only")

DEBUG = os.environ.get("DJANGO_DEBUG", "0") == "1"

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    "severity",
]


# Database
# Run records are stored in PostgreSQL (see docker-compose.yml).
DATABASES = {
    "default": {
        "ENGINE": "django.db.backends.postgresql",
        "NAME": os.environ.get("POSTGRES_DB", "roadrisk"),
        "USER": os.environ.get("POSTGRES_USER", "postgres"),
        "PASSWORD": os.environ.get("POSTGRES_PASSWORD", "postgres"),
        "HOST": os.environ.get("POSTGRES_HOST", "localhost"),
        "PORT": os.environ.get("POSTGRES_PORT", "5432"),
        "OPTIONS": {
            "connect_timeout": 10,
        },
    }
}


# Internationalization

LANGUAGE_CODE = "en-us"

TIME_ZONE = "UTC"

USE_I18N = False

USE_TZ = True

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"


# Logging

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {
            "format": "{asctime} {levelname} {name}: {message}",
            "style": "{",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "plain",
        },
    },
    "loggers": {
        "severity": {
            "handlers": ["console"],
            "level": os.environ.get("ROADRISK_LOG_LEVEL", "INFO"),
            "propagate": False,
        },
    },
}


# Modeling defaults (see severity/conf.py for the full list)

ROADRISK = {
    "SEED": int(os.environ.get("ROADRISK_SEED", "20240101")),
    "OUT_DIR": os.environ.get("ROADRISK_OUT_DIR", "out"),
    "RECORD_RUNS": os.environ.get("ROADRISK_RECORD_RUNS", "1") == "1",
}
