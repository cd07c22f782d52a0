"""Instrumented desk-scale kernels: Sod tube, heat stencil, EOS inversion."""

from .eos import EOSCase, EOSTable, convergence_threshold, default_table, eos_run, eos_solve
from .sod import SodParams, exact_density, sod_run, tag_levels
from .stencil import analytic_byte_count, analytic_flop_count, stencil_run

__all__ = [
    "EOSCase",
    "EOSTable",
    "SodParams",
    "analytic_byte_count",
    "analytic_flop_count",
    "convergence_threshold",
    "default_table",
    "eos_run",
    "eos_solve",
    "exact_density",
    "sod_run",
    "stencil_run",
    "tag_levels",
]
