"""Fractional (nonlocal) perimeters: interaction integrals, curvature,
discrete minimizers, the extension monotonicity functional and fractal sets."""
from .kernel import FracParams, QuadratureSpec

__version__ = "0.1.0"
__all__ = ["FracParams", "QuadratureSpec", "__version__"]
