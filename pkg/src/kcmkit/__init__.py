"""kcmkit: bootstrap percolation closures and kinetically constrained models.

Submodules
----------
lattice      geometries, configurations, regions, grid files
families     update families, constraints, rule tables
bootstrap    closures, spanning, critical-density and critical-length scans
kcm          continuous-time constrained dynamics and persistence times
spectral     exact generators, spectral gaps, Dirichlet forms
blocks       good/super-good block events, promotion maps and their costs
paths        legal canonical paths, builders, congestion constants
percolation  rectangle crossings, cluster surrogates, decay-rate fits
kernels      compiled-vs-pure kernel selection
"""

from .lattice import Box, Configuration, Geometry, Region
from .families import UpdateFamily, make_family
from .kernels import IMPLEMENTATION

__version__ = "0.1.0"

__all__ = [
    "Box", "Configuration", "Geometry", "Region",
    "UpdateFamily", "make_family",
    "IMPLEMENTATION", "__version__",
]
