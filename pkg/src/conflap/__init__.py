"""Spectral laboratory for Delta_g + c * Scal_g on model manifolds."""

from .errors import ConflapError

__version__ = "0.1.0"

__all__ = ["ConflapError", "__version__"]
