"""Initialize the app"""

__version__ = "0.1.0"
__title__ = "Ratio Lab"
__url__ = "https://github.com/BroodLK/ratio-lab"
