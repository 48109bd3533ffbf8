"""Reduced-order modelling of nonlinear structural resonators.

Harmonic balance with continuation for polynomial full-order systems,
POD-Galerkin reduction, and a neural surrogate of the reduced periodic
response parameterised by load and phase.
"""

__version__ = "0.1.0"

from romforge.dynsys import PolySystem, make_duffing, make_vk_beam  # noqa: E402
from romforge.errors import RomforgeError  # noqa: E402
from romforge.kernels import BACKEND  # noqa: E402

__all__ = ["PolySystem", "make_duffing", "make_vk_beam", "RomforgeError", "BACKEND", "__version__"]
