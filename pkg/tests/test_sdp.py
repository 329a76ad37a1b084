import numpy as np
import pytest

from csls.certify import l2_perf
from csls.core import ConstrainingGraph, StateSpace, SystemFamily, l2_index
from csls.errors import InfeasibleError, ModelError, SolverError
from csls.lmi import LmiBlock, MatrixVariable, assemble_dissipativity
from csls.sdp import bisect_gamma, emit_sdpa, lower, minimize_gamma, read_sdpa_solution, solve
from csls.sdp.sdpa import read_sdpa_problem

LOOP = ConstrainingGraph([1], [(1, 1, 1)])


def at_least_one():
    x = MatrixVariable("x", (1, 1))
    return x, [LmiBlock(x.expr() - np.eye(1), "pos-semidef", ("x>=1",))]


def scalar_family():
    return SystemFamily({1: StateSpace([[0.5]], [[1.0]], [[1.0]], [[0.0]])})


def test_lower_census():
    X = MatrixVariable("X", (2, 2))
    t = MatrixVariable("t", (1, 1))
    G = MatrixVariable("G", (2, 2), "general")
    blocks = [LmiBlock(X.expr() - t.expr().kron(np.eye(2)) + G.expr() + G.expr().T, "pos-def", ("b",), 1e-7)]
    prog = lower(blocks, objective=t)
    assert prog.census() == {"X": 3, "t": 1, "G": 4}
    assert prog.cones[0].margin == 1e-7
    assert np.allclose(prog.cones[0].F0, -1e-7 * np.eye(2))


def test_lower_rejects_empty():
    with pytest.raises(ModelError):
        lower([])


def test_solve_trivial_minimum():
    x, blocks = at_least_one()
    res = solve(lower(blocks, objective=x))
    assert res.ok
    assert abs(res.values["x"][0, 0] - 1.0) < 1e-6


def test_solve_infeasible():
    x, blocks = at_least_one()
    blocks.append(LmiBlock(-x.expr(), "pos-semidef", ("x<=0",)))
    assert solve(lower(blocks)).status == "infeasible"


def test_unknown_solver():
    _, blocks = at_least_one()
    with pytest.raises(SolverError):
        solve(lower(blocks), solver="mosek")


def test_emit_sdpa(tmp_path):
    x, blocks = at_least_one()
    path = emit_sdpa(lower(blocks, objective=x), tmp_path / "p.dat-s")
    lines = path.read_text().splitlines()
    assert lines == ["1", "1", "1", "1.0", "0 1 1 1 1.0", "1 1 1 1 1.0"]


def test_sdpa_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    X = MatrixVariable("X", (2, 2))
    M = rng.standard_normal((2, 2))
    blocks = [LmiBlock(M.T @ X.expr() @ M - X.expr() + np.eye(2), "pos-def", ("b",), 1e-7),
              LmiBlock(X.expr(), "pos-def", ("X",), 1e-7)]
    prog = lower(blocks)
    c, sizes, mats = read_sdpa_problem(emit_sdpa(prog, tmp_path / "p.dat-s"))
    assert sizes == [2, 2]
    assert np.allclose(c, prog.c)
    for cone, F in zip(prog.cones, mats):
        assert np.allclose(F[0], -cone.F0)
        assert np.allclose(np.moveaxis(F[1:], 0, 2), cone.F)


def test_read_solution_errors(tmp_path):
    bad = tmp_path / "bad.out"
    bad.write_text("phase.value = pdOPT\nxVec = 1 2 3\n")
    with pytest.raises(SolverError):
        read_sdpa_solution(bad)
    short = tmp_path / "short.out"
    short.write_text("phase.value = pdOPT\nxVec = \n{1.0,2.0}\n")
    x, blocks = at_least_one()
    with pytest.raises(SolverError):
        read_sdpa_solution(short, lower(blocks))


def test_read_solution_infeasible_phase(tmp_path):
    out = tmp_path / "inf.out"
    out.write_text("phase.value = pINF_dFEAS\nxVec = \n{0.0}\n")
    assert read_sdpa_solution(out).status == "infeasible"


def test_external_solver_agrees_with_cvxopt():
    pytest.importorskip("sdpap")
    f = scalar_family()
    t = MatrixVariable("t", (1, 1))
    blocks = assemble_dissipativity(LOOP, f, l2_perf(f, t))
    a = minimize_gamma(blocks, t, "cvxopt").gamma
    b = minimize_gamma(blocks, t, "sdpa").gamma
    assert abs(a - 2.0) < 1e-4
    assert abs(a - b) < 1e-4


def test_bisection_is_monotone_and_tight():
    f = scalar_family()
    trace = bisect_gamma(lambda g: assemble_dissipativity(LOOP, f, l2_index(g, f)), tol=1e-6)
    assert trace.is_monotone()
    assert 2.0 <= trace.gamma <= 2.0 * (1 + 1e-5)
    feas = [s.gamma for s in trace.steps if s.feasible]
    assert min(feas) == trace.gamma


def test_bisection_upper_bracket():
    f = SystemFamily({1: StateSpace([[1.5]], [[1.0]], [[1.0]], [[0.0]])})
    with pytest.raises(InfeasibleError):
        bisect_gamma(lambda g: assemble_dissipativity(LOOP, f, l2_index(g, f)), bracket=(0.1, 100.0))
    with pytest.raises(ValueError):
        bisect_gamma(lambda g: [], bracket=(2.0, 1.0))
