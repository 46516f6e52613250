"""
Base settings for running the ratiolab test-suite.

Overload anything in local.py.
"""

# Standard Library
import os

INSTALLED_APPS = [
    "django.contrib.contenttypes",
    "django.contrib.auth",
]

SECRET_KEY = "ratiolab test settings, not a secret"

# Build paths inside the project like this: os.path.join(BASE_DIR, ...)
PROJECT_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
BASE_DIR = os.path.dirname(PROJECT_DIR)

# the lab never touches a database; an in-memory one keeps the test runner happy
DATABASES = {
    "default": {
        "ENGINE": "django.db.backends.sqlite3",
        "NAME": ":memory:",
    }
}

USE_TZ = True
TIME_ZONE = "UTC"

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "verbose": {
            "format": "[%(asctime)s] %(levelname)s [%(name)s:%(lineno)s] %(message)s",
            "datefmt": "%d/%b/%Y %H:%M:%S",
        },
        "simple": {"format": "%(levelname)s %(message)s"},
    },
    "handlers": {
        "console": {
            "level": "WARNING",  # edit this line to change logging level to console
            "class": "logging.StreamHandler",
            "formatter": "simple",
        },
    },
    "loggers": {
        "ratiolab": {
            "handlers": ["console"],
            "level": "INFO",
        },
        "django": {
            "handlers": ["console"],
            "level": "ERROR",
        },
    },
}

DEFAULT_AUTO_FIELD = "django.db.models.AutoField"

# Library defaults (see ratiolab/app_settings.py)
RATIOLAB_ENUMERATION_BUDGET = 2_000_000
RATIOLAB_MC_REPLICATIONS = 100_000
RATIOLAB_MC_SHARDS = 16
RATIOLAB_WORKERS = 1
