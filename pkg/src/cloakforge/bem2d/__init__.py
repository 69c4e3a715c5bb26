"""2D TM Helmholtz boundary-element core.

Kernels, singular quadrature, transmission/conductor system assembly,
interior field evaluation, incident fields, and an analytic
circle-scattering oracle.
"""

from .media import Medium, vacuum
from .mesh import PEC, DIELECTRIC, BoundaryMesh, circle_mesh
from .kernels import green
from .system import (
    AssembledSystem,
    BoundarySolution,
    DofLayout,
    assemble_system,
    incident_rhs,
    solve_boundary,
)
from .fields import (
    FieldEval,
    adjoint_incident,
    eval_field,
    field_operator,
    incident_plane,
    near_boundary_flags,
    plane_wave,
)
from .mie import mie_reference

__all__ = [
    "Medium",
    "vacuum",
    "PEC",
    "DIELECTRIC",
    "BoundaryMesh",
    "circle_mesh",
    "green",
    "AssembledSystem",
    "BoundarySolution",
    "DofLayout",
    "assemble_system",
    "incident_rhs",
    "solve_boundary",
    "FieldEval",
    "adjoint_incident",
    "eval_field",
    "field_operator",
    "incident_plane",
    "near_boundary_flags",
    "plane_wave",
    "mie_reference",
]
