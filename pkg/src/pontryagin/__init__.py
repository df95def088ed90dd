"""Numerical Pontryagin-Thom construction for pointed sphere maps.

Maps are written in chart coordinates S^m = R^m ∪ {∞}. The package finds
regular values, extracts framed preimage manifolds, computes their
framed-cobordism descriptors, and runs the collapse construction back.
"""

__version__ = "0.1.0"

from .cobordism import CobordismDescriptor, descriptor, disjoint_union, frames_path_cobordant
from .collapse import (CollapseMap, ProductNeighborhood, ball_diffeo, build_product_neighborhood,
                       collapse_map, roundtrip)
from .errors import PontryaginError
from .mapdsl import ChartMap, SmoothMap, builtin, parse_map
from .preimage import PontryaginManifold, pontryagin_manifold, trace_cobordism
from .transversality import (LevelSetSubmanifold, check_transverse, find_regular_value,
                             is_regular_value, perturb_to_transverse)

__all__ = [
    "ChartMap", "CobordismDescriptor", "CollapseMap", "LevelSetSubmanifold", "PontryaginError",
    "PontryaginManifold", "ProductNeighborhood", "SmoothMap", "ball_diffeo",
    "build_product_neighborhood", "builtin", "check_transverse", "collapse_map", "descriptor",
    "disjoint_union", "find_regular_value", "frames_path_cobordant", "is_regular_value",
    "parse_map", "perturb_to_transverse", "pontryagin_manifold", "roundtrip", "trace_cobordism",
    "__version__",
]
