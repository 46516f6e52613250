"""``python -m ratiolab --data pop.csv --n 4 ...`` runs the ratio_report command."""

import sys

import django
from django.conf import settings
from django.core.management import execute_from_command_line


def main(argv=None):
    if not settings.configured:
        settings.configure(
            INSTALLED_APPS=["ratiolab"],
            LOGGING={
                "version": 1,
                "disable_existing_loggers": False,
                "handlers": {"console": {"class": "logging.StreamHandler", "level": "WARNING"}},
                "loggers": {"ratiolab": {"handlers": ["console"], "level": "WARNING"}},
            },
        )
        django.setup()
    argv = sys.argv[1:] if argv is None else argv
    execute_from_command_line(["ratiolab", "ratio_report", *argv])


if __name__ == "__main__":
    main()
