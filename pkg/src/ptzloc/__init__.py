"""Marker tracking and localisation with a pan-tilt-zoom camera."""

from ._kernels import BACKEND
from .errors import PtzLocError

__version__ = "0.1.0"
__all__ = ["BACKEND", "PtzLocError", "__version__"]
