"""qgk: pseudo-spectral simulation and verification lab for a higher-order
viscous quasi-geostrophic equation on the periodic square."""

__version__ = "0.1.0"

from .grid import GridSpec, MultiplierTable, RealField, SpectralField  # noqa: F401
