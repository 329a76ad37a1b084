import numpy as np
import pytest

from csls.certify import NOMINAL_FORMS, Certificate, analyze_closed_loop, l2_perf, l2_perf_gamma, recover_controller
from csls.core import ConstrainingGraph, IndexBlock, PerformanceIndex, StateSpace, SystemFamily, l2_index
from csls.errors import InfeasibleError, ModelError, NonAffineError
from csls.lmi import (
    LfrFamily,
    LfrSystem,
    MatrixVariable,
    MultiplierClass,
    Uncertainty,
    assemble_dissipativity,
    assemble_dual,
    assemble_energy_to_peak,
    assemble_robust_performance,
    assemble_robust_stability,
    assemble_stability,
    assemble_synthesis,
    bmat,
    decompose_R,
    invert_index,
)
from csls.sdp import bisect_gamma, lower, minimize_gamma, solve
from oracles import energy_to_peak, hinf_norm, random_stable

LOOP = ConstrainingGraph([1], [(1, 1, 1)])
DROPOUT = ConstrainingGraph([1, 2], [(1, 1, 1), (1, 2, 2), (2, 1, 1)])


def family(*systems):
    return SystemFamily({l + 1: s for l, s in enumerate(systems)})


def feasible(blocks):
    return solve(lower(blocks)).ok


def scalar(a=0.5):
    return family(StateSpace([[a]], [[1.0]], [[1.0]], [[0.0]]))


def test_affine_expression_evaluates():
    X = MatrixVariable("X", (2, 2))
    A = np.array([[1.0, 2.0], [0.0, 1.0]])
    e = A.T @ X.expr() @ A - X.expr()
    val = np.array([[2.0, 1.0], [1.0, 3.0]])
    assert np.allclose(e.evaluate({"X": val}), A.T @ val @ A - val)
    assert e.asymmetry() == 0.0


def test_product_of_variables_rejected():
    X = MatrixVariable("X", (1, 1))
    with pytest.raises(NonAffineError):
        X.expr() @ X.expr()


def test_bmat_shapes():
    X = MatrixVariable("X", (2, 2))
    M = bmat([[X.expr(), None], [None, np.eye(3)]])
    assert M.shape == (5, 5)


def test_decompose_R():
    R = np.diag([4.0, 0.0])
    dec = decompose_R({1: IndexBlock(-np.eye(1), np.zeros((1, 2)), R)})[1]
    assert dec.rank == 1
    assert np.allclose(dec.U.T @ np.linalg.inv(dec.Rt) @ dec.U, R)


def test_invert_index():
    P = PerformanceIndex({1: IndexBlock([[-1.0]], [[2.0]], [[1.0]])})
    inv = invert_index(P)[1]
    assert np.allclose([[inv.Qt[0, 0], inv.St[0, 0]], [inv.St[0, 0], inv.Rt[0, 0]]], [[-0.2, 0.4], [0.4, 0.2]])


def test_stability():
    assert feasible(assemble_stability(LOOP, scalar(0.5)))
    assert not feasible(assemble_stability(LOOP, scalar(1.0)))


def test_stability_raw_and_schur_agree():
    rng = np.random.default_rng(5)
    for _ in range(5):
        A, B, C, D = random_stable(rng, 2, radius=rng.uniform(0.5, 1.3))
        f = family(StateSpace(A, B, C, D), StateSpace(A.T, B, C, D))
        assert feasible(assemble_stability(DROPOUT, f, "raw")) == feasible(assemble_stability(DROPOUT, f, "schur"))


def test_open_loop_dropout_plant_is_unstable(dropout_model):
    assert not feasible(assemble_stability(dropout_model.graph, dropout_model.systems))


def test_dissipativity_scalar_gamma():
    f = scalar()
    assert feasible(assemble_dissipativity(LOOP, f, l2_index(2.5, f)))
    assert not feasible(assemble_dissipativity(LOOP, f, l2_index(1.5, f)))


def test_index_with_indefinite_R_rejected():
    f = scalar()
    p = PerformanceIndex({1: IndexBlock([[1.0]], [[0.0]], [[-1.0]])})
    with pytest.raises(ModelError):
        assemble_dissipativity(LOOP, f, p, "slack")


@pytest.mark.parametrize("form", NOMINAL_FORMS)
def test_scalar_l2_limit_each_form(form):
    gamma = analyze_closed_loop(scalar(), LOOP, form=form, tol=1e-6).gamma
    assert abs(gamma - 2.0) < 1e-3


def test_forms_agree_with_frequency_sweep():
    rng = np.random.default_rng(11)
    for _ in range(4):
        A, B, C, D = random_stable(rng, int(rng.integers(1, 4)))
        f = family(StateSpace(A, B, C, D))
        ref = hinf_norm(A, B, C, D)
        for form in NOMINAL_FORMS:
            gamma = analyze_closed_loop(f, LOOP, form=form, tol=1e-5).gamma
            assert ref * (1 - 1e-6) <= gamma <= ref * (1 + 1e-3)


def test_shared_slack_is_never_better():
    rng = np.random.default_rng(2)
    A, B, C, D = random_stable(rng, 2, radius=0.8)
    f = family(StateSpace(A, B, C, D), StateSpace(0.5 * A, B, C, D))
    free = analyze_closed_loop(f, DROPOUT, form="dual-slack").gamma
    shared = analyze_closed_loop(f, DROPOUT, form="dual-slack", shared_slack=True).gamma
    assert shared >= free * (1 - 1e-4)


def test_energy_to_peak_scalar():
    f = scalar()
    for form in ("basic", "slack"):
        tr = bisect_gamma(lambda g: assemble_energy_to_peak(LOOP, f, g, form), tol=1e-6)
        assert abs(tr.gamma - np.sqrt(4 / 3)) < 1e-3


def test_energy_to_peak_against_gramian():
    rng = np.random.default_rng(4)
    A, B, C, _ = random_stable(rng, 3, p=2)
    f = family(StateSpace(A, B, C, np.zeros((2, 1))))
    tr = analyze_closed_loop(f, LOOP, criterion="energy-to-peak", tol=1e-6)
    assert abs(tr.gamma / energy_to_peak(A, B, C) - 1) < 1e-3


def test_dual_requires_nonpositive_Qt():
    f = scalar()
    p = PerformanceIndex({1: IndexBlock([[1.0]], [[0.0]], [[1.0]])})
    with pytest.raises(ModelError):
        assemble_dual(LOOP, f, p)


def uncertain_scalar(c_zu, bound=1.0):
    lfr = LfrSystem([[0.5]], [[1.0]], [[1.0]], [[c_zu]], [[1.0]], [[0.0]], [[0.0]], [[0.0]], [[0.0]])
    return LfrFamily({1: lfr}, Uncertainty(bound=bound))


def test_robust_stability():
    assert feasible(assemble_robust_stability(LOOP, uncertain_scalar(0.3)))
    assert not feasible(assemble_robust_stability(LOOP, uncertain_scalar(0.6)))


def test_robust_stability_scaled_uncertainty_infeasible():
    assert not feasible(assemble_robust_stability(LOOP, uncertain_scalar(0.3, bound=100.0)))


def test_empty_uncertainty_channel_reproduces_nominal():
    rng = np.random.default_rng(8)
    A, B, C, D = random_stable(rng, 2)
    f = family(StateSpace(A, B, C, D), StateSpace(A @ A, B, C, D))
    lfr = LfrFamily.from_family(f)
    t = MatrixVariable("t", (1, 1))
    nominal = minimize_gamma(assemble_dissipativity(DROPOUT, f, l2_perf(f, t)), t).gamma
    robust = minimize_gamma(assemble_robust_performance(DROPOUT, lfr, l2_perf(lfr, t)), t).gamma
    assert abs(robust - nominal) <= 1e-6 * nominal


def test_robust_performance_dominates_fixed_delta():
    lfr = uncertain_scalar(0.3)
    robust = analyze_closed_loop(lfr, LOOP, mode="robust").gamma
    for d in (-1.0, 0.0, 1.0):
        s = lfr[1].evaluate([[d]])
        assert hinf_norm(s.A, s.B, s.C, s.D) <= robust * (1 + 1e-6)


def test_multiplier_sharing():
    lfr = uncertain_scalar(0.3)
    shared = assemble_robust_performance(LOOP, lfr, l2_perf_gamma(lfr, 5.0))
    per_label = assemble_robust_performance(LOOP, lfr, l2_perf_gamma(lfr, 5.0), MultiplierClass(lfr.uncertainty, shared=False))
    names = lambda blocks: {v.name for b in blocks for v in b.expr.variables}  # noqa: E731
    assert "a" in names(shared)
    assert "a[1]" in names(per_label)


def test_synthesis_stabilizes_scalar():
    f = family(StateSpace([[2.0]], [[1.0]], [[1.0]], [[0.0]], [[1.0]], [[0.0]]))
    t = MatrixVariable("t", (1, 1))
    trace = minimize_gamma(assemble_synthesis(LOOP, f, l2_perf(f, t)), t)
    ctrl = recover_controller(Certificate.from_trace(trace, "synthesis/slack"), [1])
    assert abs(2.0 + ctrl.gain(1)[0, 0]) < 1


def test_uncontrollable_synthesis_infeasible():
    f = family(StateSpace([[2.0]], [[1.0]], [[1.0]], [[0.0]], [[0.0]], [[1.0]]))
    t = MatrixVariable("t", (1, 1))
    with pytest.raises(InfeasibleError):
        minimize_gamma(assemble_synthesis(LOOP, f, l2_perf(f, t)), t)


def test_synthesis_needs_control_channel():
    with pytest.raises(ModelError):
        assemble_synthesis(LOOP, scalar(), l2_index(2.0, scalar()))
