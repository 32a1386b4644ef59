"""santalo-lab: a desk-scale workbench for Blaschke-Santalo functionals.

Modules: numgrid (grids and quadrature), legendre (discrete conjugates),
potentials (power-norm closed forms), functionals (the BS functionals and
margins), symmetrize (Steiner symmetrization), bodies (polytopes and set
versions), brascamp (strong Brascamp-Lieb and spectral constants),
maximizer (Euler-Lagrange and transport diagnostics), cli (batch front end).
"""

__version__ = "0.1.0"

from .numgrid import BoxGrid, GridFunction, Density, build_grid_fn  # noqa: F401
from .potentials import PowerNormPotential, Hyperplane, canonical  # noqa: F401
