"""Incremental pressure-correction finite element solver for incompressible flow.

Implicit, explicit and matrix-vector ("explicit-star") variants on uniform
Q1 meshes of the unit square/cube, plus a manufactured-solution harness.
"""

from ipcs.grid import StructuredGrid, boundary_node_indices, build_grid
from ipcs.mms import ManufacturedCase, mms_2d, mms_3d
from ipcs.operators import OperatorSet, assemble_operator_set
from ipcs.scheme import PressureCorrection, SchemeKind, SchemeState, StepDiagnostics

__all__ = [
    "ManufacturedCase",
    "OperatorSet",
    "PressureCorrection",
    "SchemeKind",
    "SchemeState",
    "StepDiagnostics",
    "StructuredGrid",
    "assemble_operator_set",
    "boundary_node_indices",
    "build_grid",
    "mms_2d",
    "mms_3d",
]
