"""
Django test settings for the roadrisk project.

This file extends the base settings with an in-memory SQLite database so the
test suite runs without PostgreSQL.
"""

from .settings import *

DATABASES = {
    "default": {
        "ENGINE": "django.db.backends.sqlite3",
        "NAME": ":memory:",
    }
}

# Tests assert on log records directly
LOGGING_CONFIG = None

DEBUG = False
SECRET_KEY = "test-secret-key-not-for-production"

ROADRISK = {
    "SEED": 20240101,
    "OUT_DIR": "out",
    "RECORD_RUNS": True,
}
