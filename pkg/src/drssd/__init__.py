"""Certified lower and upper bounds for optimization under distributionally
robust second-order stochastic dominance constraints with Wasserstein
ambiguity balls.
"""

__version__ = "0.1.0"

from .model import (
    EtaRange,
    Polyhedron,
    SampleGrids,
    SsdInstance,
    SupportPolytope,
    WassersteinBall,
    eta_range,
    generate_grids,
    validate_instance,
)

__all__ = [
    "SupportPolytope",
    "WassersteinBall",
    "SsdInstance",
    "EtaRange",
    "SampleGrids",
    "Polyhedron",
    "validate_instance",
    "eta_range",
    "generate_grids",
    "__version__",
]
