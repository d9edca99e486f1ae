"""Numerical toolkit for almost geodesic mappings of the second type between
spaces with non-symmetric affine connection."""

__version__ = "0.1.0"

from .agmap import MappingInstance, deform, generate_instance, invert_instance
from .audit import AuditOptions, run_audit, localize_failure
from .expr import parse
from .space import ConnectionField, covdiff, split
from .tensor import EXACT, TensorField, fd, make_grid

__all__ = [
    "ConnectionField", "MappingInstance", "TensorField", "AuditOptions", "EXACT",
    "covdiff", "deform", "fd", "generate_instance", "invert_instance", "localize_failure",
    "make_grid", "parse", "run_audit", "split", "__version__",
]
