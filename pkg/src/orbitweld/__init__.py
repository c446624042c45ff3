"""orbitweld: explicit area-preserving perturbations that close recurrent
orbits and weld epsilon-pseudo-orbits of torus maps into genuine orbits,
with verification of every geometric invariant the constructions rely on."""

from .geometry import torus_distance, wrap, displacement, chart_at
from .maps import (
    SurfaceMap,
    StandardMap,
    LinearAutomorphism,
    PendulumMap,
    cat_map,
    map_from_spec,
)

__version__ = "0.1.0"

__all__ = [
    "torus_distance",
    "wrap",
    "displacement",
    "chart_at",
    "SurfaceMap",
    "StandardMap",
    "LinearAutomorphism",
    "PendulumMap",
    "cat_map",
    "map_from_spec",
    "__version__",
]
