# pylint: skip-file
# Configure Django for pytest the same way runtests.py / tox.ini do.
# Standard Library
import os

# Django
import django

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "testlab.settings.local")
django.setup()
