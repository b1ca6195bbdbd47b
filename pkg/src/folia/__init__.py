"""Singular subalgebroids: exact pointwise invariants, flows and holonomy charts."""

from .dsl import DSLError, dump, load, parse
from .geometry import AmbientAlgebroid, SingularSubalgebroid, check_involutive, induced_foliation
from .polycore import FreeModuleElem, Poly, Submodule, normal_form, syzygies
from .pointwise import fiber_report, projectivity_scan

__all__ = [
    "AmbientAlgebroid",
    "DSLError",
    "FreeModuleElem",
    "Poly",
    "SingularSubalgebroid",
    "Submodule",
    "check_involutive",
    "dump",
    "fiber_report",
    "induced_foliation",
    "load",
    "normal_form",
    "parse",
    "projectivity_scan",
    "syzygies",
]
