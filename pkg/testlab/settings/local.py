"""
Test settings
"""

# flake8: noqa

########################################################
# local.py settings
# Every setting in base.py can be overloaded by redefining it here.

from .base import *

PACKAGE = "ratiolab"

DEBUG = False

# keep test output quiet; tests assert on warnings through assertLogs
LOGGING = False

# Add any additional apps to this list.
INSTALLED_APPS += [
    PACKAGE,
]

# smaller default run sizes for the test-suite
RATIOLAB_MC_REPLICATIONS = 20_000
RATIOLAB_WORKERS = 2
