"""Conic-program lowering, solver dispatch and performance-level search."""

from .bisection import BisectionTrace, bisect_gamma, minimize_gamma
from .program import ConicProgram, SolveResult, lower, phase_one
from .sdpa import emit_sdpa, read_sdpa_solution
from .solvers import solve

__all__ = [
    "BisectionTrace",
    "bisect_gamma",
    "minimize_gamma",
    "ConicProgram",
    "SolveResult",
    "lower",
    "phase_one",
    "emit_sdpa",
    "read_sdpa_solution",
    "solve",
]
