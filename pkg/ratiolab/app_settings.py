"""App Settings"""

# Django
from django.conf import settings

RATIOLAB_ENUMERATION_BUDGET = int(getattr(settings, "RATIOLAB_ENUMERATION_BUDGET", 2_000_000))
RATIOLAB_ENUMERATION_CHUNK = int(getattr(settings, "RATIOLAB_ENUMERATION_CHUNK", 65_536))
RATIOLAB_MC_REPLICATIONS = int(getattr(settings, "RATIOLAB_MC_REPLICATIONS", 100_000))
RATIOLAB_MC_SHARDS = int(getattr(settings, "RATIOLAB_MC_SHARDS", 16))
RATIOLAB_WORKERS = int(getattr(settings, "RATIOLAB_WORKERS", 1))
RATIOLAB_SEED = getattr(settings, "RATIOLAB_SEED", None)
RATIOLAB_FORMULA_MODE = getattr(settings, "RATIOLAB_FORMULA_MODE", "re-derived")
RATIOLAB_V_POLICY = getattr(settings, "RATIOLAB_V_POLICY", "closed-form-where-listed")
