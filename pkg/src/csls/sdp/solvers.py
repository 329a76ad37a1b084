"""Solver dispatch: embedded interior-point (cvxopt) or SDPA file exchange."""

from __future__ import annotations

import logging
import os

import numpy as np

from ..errors import SolverError
from .program import ConicProgram, SolveResult, phase_one

log = logging.getLogger(__name__)

SOLVERS = ("cvxopt", "sdpa")
MAX_ITERS = 500


def default_solver() -> str:
    return os.environ.get("CSLS_SDP_SOLVER", "cvxopt")


def solve(prog: ConicProgram, solver: str | None = None, max_iters: int = MAX_ITERS) -> SolveResult:
    """Solve ``prog``; feasibility programs (no objective) go through a phase-one problem.

    A result is ``optimal`` only if every cone, margins included, is within
    half its strictness margin of feasibility at the returned point.
    """
    solver = solver or default_solver()
    if solver not in SOLVERS:
        raise SolverError(f"unknown solver {solver!r}; choose from {SOLVERS}")
    run = _solve_cvxopt if solver == "cvxopt" else _solve_sdpa
    if not prog.has_objective:
        return _feasibility(prog, run, solver, max_iters)

    raw = run(prog, max_iters)
    if raw["x"] is None:
        status = "infeasible" if raw["status"] == "infeasible" else "numerical-failure"
        return SolveResult(status, iterations=raw["iterations"], solver=solver, message=raw["status"])
    x = raw["x"]
    if _accept(prog, x):
        return _result(prog, x, raw, solver)
    # interior-point optima sit on the boundary; back off slightly and re-certify
    best = prog.objective(x)
    cap = best + 1e-6 * (1.0 + abs(best))
    capped = _with_objective_cap(prog, cap)
    res = _feasibility(capped, run, solver, max_iters)
    if res.ok:
        x = res.x
        return SolveResult("optimal", prog.unpack(x), x, prog.objective(x), _residual(prog, x),
                           raw["iterations"] + res.iterations, solver, "objective backed off")
    return SolveResult("numerical-failure", iterations=raw["iterations"], solver=solver,
                       message="solution does not satisfy the constraints")


def _accept(prog: ConicProgram, x) -> bool:
    for c in prog.cones:
        if c.size and np.linalg.eigvalsh(c.value(x))[0] < -0.5 * c.margin:
            return False
    return True


def _residual(prog: ConicProgram, x) -> float:
    return float(max((max(0.0, -np.linalg.eigvalsh(c.value(x))[0]) for c in prog.cones if c.size), default=0.0))


def _result(prog, x, raw, solver) -> SolveResult:
    return SolveResult("optimal", prog.unpack(x), x, prog.objective(x), _residual(prog, x),
                       raw["iterations"], solver, raw["status"])


def _feasibility(prog: ConicProgram, run, solver: str, max_iters: int) -> SolveResult:
    p1 = phase_one(prog)
    raw = run(p1, max_iters)
    if raw["x"] is None:
        status = "infeasible" if raw["status"] == "infeasible" else "numerical-failure"
        return SolveResult(status, iterations=raw["iterations"], solver=solver, message=raw["status"])
    x = raw["x"][: prog.num_scalars]
    if _accept(prog, x):
        return _result(prog, x, raw, solver)
    lam = raw["x"][-1]
    if raw["status"] in ("optimal", "unknown") and lam < 0:
        return SolveResult("infeasible", iterations=raw["iterations"], solver=solver,
                           message=f"phase-one optimum {lam:.3e} < 0")
    return SolveResult("numerical-failure", iterations=raw["iterations"], solver=solver, message=raw["status"])


def _with_objective_cap(prog: ConicProgram, cap: float) -> ConicProgram:
    from .program import Cone

    F = (-prog.c).reshape(1, 1, -1)
    cone = Cone(np.array([[cap - prog.c0]]), F, ("objective-cap",), 0.0)
    return ConicProgram(prog.variables, prog.cones + [cone], np.zeros_like(prog.c), 0.0, prog.blocks)


# cvxopt ---------------------------------------------------------------------------


def _solve_cvxopt(prog: ConicProgram, max_iters: int) -> dict:
    from cvxopt import matrix, solvers

    N = prog.num_scalars
    # coordinates that appear nowhere are fixed at zero (cvxopt needs full column rank)
    used = np.zeros(N, dtype=bool)
    used |= prog.c != 0
    for c in prog.cones:
        used |= np.any(c.F.reshape(-1, N) != 0, axis=0)
    idx = np.flatnonzero(used)
    if idx.size == 0:
        x = np.zeros(N)
        ok = all(np.linalg.eigvalsh(c.F0)[0] >= 0 for c in prog.cones if c.size)
        return {"x": x if ok else None, "status": "optimal" if ok else "infeasible", "iterations": 0}
    Gs, hs = [], []
    for c in prog.cones:
        if not c.size:
            continue
        p = c.size
        Gs.append(matrix(-c.F[:, :, idx].reshape(p * p, -1, order="F")))
        hs.append(matrix(c.F0))
    # tight tolerances first; cvxopt can break down late on poorly scaled
    # instances, in which case its defaults and then the LDL KKT solver are tried
    tight = {"abstol": 1e-9, "reltol": 1e-8, "feastol": 1e-9}
    attempts = [(tight, None), ({}, None), ({}, "ldl")]
    sol = None
    for tols, kkt in attempts:
        opts = {"show_progress": False, "maxiters": max_iters, **tols}
        try:
            sol = solvers.sdp(matrix(prog.c[idx]), Gs=Gs, hs=hs, kktsolver=kkt, options=opts)
            break
        except (ValueError, ArithmeticError) as exc:
            log.debug("cvxopt failed (%s, kkt=%s): %s", tols or "defaults", kkt, exc)
    if sol is None:
        return {"x": None, "status": "numerical-failure", "iterations": 0}
    status = sol["status"]
    iters = int(sol.get("iterations", 0) or 0)
    if status == "primal infeasible":
        return {"x": None, "status": "infeasible", "iterations": iters}
    if status == "dual infeasible" or sol["x"] is None:
        return {"x": None, "status": "numerical-failure", "iterations": iters}
    x = np.zeros(N)
    x[idx] = np.array(sol["x"]).ravel()
    return {"x": x, "status": status, "iterations": iters}


def _solve_sdpa(prog: ConicProgram, max_iters: int) -> dict:
    from .sdpa import run_external

    return run_external(prog, max_iters)
