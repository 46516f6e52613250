# pylint: skip-file
# Standard Library
import os
import sys

if __name__ == "__main__":
    os.environ.setdefault("DJANGO_SETTINGS_MODULE", "testlab.settings.local")
    try:
        # Django
        from django.core.management import execute_from_command_line
    except ImportError as e:
        raise ImportError(
            "Couldn't import Django. The lab runs its tests through Django's "
            "test runner; install the package with `pip install -e .` first."
        ) from e

    if not any(arg.startswith("ratiolab") for arg in sys.argv[1:]):
        # `python runtests.py -v 2` runs the whole suite
        sys.argv.insert(1, "ratiolab")
    sys.argv.insert(1, "test")
    execute_from_command_line(sys.argv)
