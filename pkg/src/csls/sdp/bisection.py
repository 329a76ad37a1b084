"""Performance-level search: geometric bisection and direct minimization."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

from ..errors import InfeasibleError, SolverError
from ..lmi.affine import LmiBlock, MatrixVariable
from .program import SolveResult, lower
from .solvers import solve

log = logging.getLogger(__name__)

DEFAULT_BRACKET = (1e-3, 1e6)
DEFAULT_TOL = 1e-4


@dataclass
class BisectionStep:
    gamma: float
    feasible: bool
    residual: float | None


@dataclass
class BisectionTrace:
    steps: list[BisectionStep] = field(default_factory=list)
    gamma: float | None = None
    result: SolveResult | None = None
    blocks: list[LmiBlock] | None = None
    method: str = "bisection"

    def record(self, gamma, res: SolveResult):
        self.steps.append(BisectionStep(float(gamma), res.ok, res.residual))

    def is_monotone(self) -> bool:
        feas = [s.gamma for s in self.steps if s.feasible]
        infeas = [s.gamma for s in self.steps if not s.feasible]
        return not feas or not infeas or max(infeas) < min(feas)

    def as_rows(self) -> list[dict]:
        return [{"gamma": s.gamma, "feasible": s.feasible, "residual": s.residual} for s in self.steps]


def bisect_gamma(
    assembler: Callable[[float], list[LmiBlock]],
    bracket: tuple[float, float] = DEFAULT_BRACKET,
    tol: float = DEFAULT_TOL,
    solver: str | None = None,
) -> BisectionTrace:
    """Smallest certified-feasible ``gamma`` in ``bracket`` up to relative gap ``tol``."""
    lo, hi = map(float, bracket)
    if not 0 < lo < hi:
        raise ValueError("bracket must satisfy 0 < lo < hi")
    trace = BisectionTrace()

    def attempt(gamma):
        blocks = assembler(gamma)
        res = solve(lower(blocks), solver=solver)
        if res.status == "numerical-failure":
            log.debug("numerical failure at gamma=%g treated as infeasible", gamma)
        trace.record(gamma, res)
        return res, blocks

    # climb decade by decade: very large gamma is numerically hard to certify,
    # so the upper bracket is only probed when everything below it failed
    ladder = [lo]
    while ladder[-1] * 10.0 < hi:
        ladder.append(ladder[-1] * 10.0)
    ladder.append(hi)
    best, below = None, None
    for gamma in ladder:
        res, blocks = attempt(gamma)
        if res.ok:
            best = (gamma, res, blocks)
            break
        below = gamma
    if best is None:
        raise InfeasibleError(f"infeasible at the upper bracket gamma={hi:g}")
    if below is not None:
        lo, hi = below, best[0]
        while hi / lo - 1.0 > tol:
            mid = math.sqrt(lo * hi)
            res, blocks = attempt(mid)
            if res.ok:
                hi, best = mid, (mid, res, blocks)
            else:
                lo = mid
    if not trace.is_monotone():
        raise SolverError("non-monotone bisection trace")
    trace.gamma, trace.result, trace.blocks = best
    return trace


def minimize_gamma(blocks: list[LmiBlock], t: MatrixVariable, solver: str | None = None) -> BisectionTrace:
    """Minimize ``t = gamma^2`` directly when it enters the blocks affinely."""
    res = solve(lower(blocks, objective=t), solver=solver)
    if res.status == "infeasible":
        raise InfeasibleError("performance problem is infeasible")
    if not res.ok:
        raise SolverError(f"solver failed: {res.message}")
    tval = float(res.values[t.name][0, 0])
    gamma = math.sqrt(max(tval, 0.0))
    trace = BisectionTrace(method="direct")
    trace.record(gamma, res)
    trace.gamma, trace.result, trace.blocks = gamma, res, blocks
    return trace
