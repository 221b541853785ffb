"""Compute-and-forward rate analysis and signal-alignment simulation toolkit."""

from . import alignment, diophantine, fpcode, inversion, rates

__version__ = "0.1.0"

__all__ = ["alignment", "diophantine", "fpcode", "inversion", "rates", "__version__"]
