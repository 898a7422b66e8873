"""Geometrically exact rods with SE(3) element interpolation."""
from rodsim import assembly, errors, liegroup, rodcore, solvers

__version__ = "0.1.0"
__all__ = ["assembly", "errors", "liegroup", "rodcore", "solvers"]
