"""Water network hydraulics and per-pipe roughness calibration."""
from ._backend import BACKEND

__version__ = "0.1.0"
