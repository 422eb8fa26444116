from .__version__ import __title__, __description__, __version__
from .api import simulate, analyze, sweep_dcm, sweep_distance, compare_local
