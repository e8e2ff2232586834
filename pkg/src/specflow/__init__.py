"""Special flows over irrational rotations: orbits, roofs, coding and slow entropy."""

__version__ = "0.1.0"

from .errors import SpecflowError  # noqa: E402
from .rotation import RotationNumber, parse_alpha, classify_diophantine  # noqa: E402
from .roof import RoofSpec, RoofKind  # noqa: E402
from .flow import SpecialFlow, FlowPoint, PartitionSpec, OrbitCode  # noqa: E402

__all__ = [
    "__version__", "SpecflowError", "RotationNumber", "parse_alpha", "classify_diophantine",
    "RoofSpec", "RoofKind", "SpecialFlow", "FlowPoint", "PartitionSpec", "OrbitCode",
]
