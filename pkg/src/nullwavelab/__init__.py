"""Numerical laboratory for quasilinear wave equations with null-form
nonlinearities and data localized around widely separated centers."""

from .grid import FieldSlice, SpacetimeGrid, WaveState, fd_derivative, slice_norm
from .nullforms import (
    AffineVectorField,
    BilinearForm,
    TrilinearForm,
    commute_form,
    eval_bilinear,
    eval_trilinear,
    is_null_form,
)

__version__ = "0.1.0"

__all__ = [
    "AffineVectorField",
    "BilinearForm",
    "FieldSlice",
    "SpacetimeGrid",
    "TrilinearForm",
    "WaveState",
    "commute_form",
    "eval_bilinear",
    "eval_trilinear",
    "fd_derivative",
    "is_null_form",
    "slice_norm",
]
