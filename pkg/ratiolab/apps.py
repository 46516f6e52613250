"""App Configuration"""

# Django
from django.apps import AppConfig

from ratiolab import __version__


class RatioLabConfig(AppConfig):
    """App Config"""

    name = "ratiolab"
    label = "ratiolab"
    verbose_name = f"Ratio Lab v{__version__}"
