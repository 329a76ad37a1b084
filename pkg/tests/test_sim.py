import csv

import numpy as np
import pytest

from csls.certify import Certificate, analyze_closed_loop, l2_perf
from csls.core import ConstrainingGraph, EdgeWalk, StateSpace, SystemFamily
from csls.errors import ModelError
from csls.sim import (
    adjoint,
    check_dissipation,
    closed_walks,
    empirical_l2_lb,
    empirical_peak_lb,
    periodic_walk,
    random_walk,
    simulate,
    spectral_audit,
    trajectory_to_csv,
    walk_gain,
)
from oracles import hinf_norm

LOOP = ConstrainingGraph([1], [(1, 1, 1)])
DROPOUT = ConstrainingGraph([1, 2], [(1, 1, 1), (1, 2, 2), (2, 1, 1)])


def scalar(a=0.5, d=0.0):
    return SystemFamily({1: StateSpace([[a]], [[1.0]], [[1.0]], [[d]])})


def two_label():
    rng = np.random.default_rng(6)
    A = rng.standard_normal((2, 2))
    A *= 0.7 / max(abs(np.linalg.eigvals(A)))
    return SystemFamily({
        1: StateSpace(A, [[1.0], [0.0]], [[1.0, 0.0]], [[0.0]]),
        2: StateSpace(A @ A, [[1.0, 0.0], [0.5, 1.0]], [[1.0, 1.0], [0.0, 1.0]], np.zeros((2, 2))),
    })


def test_impulse_response():
    walk = EdgeWalk((0,) * 5, LOOP)
    traj = simulate(scalar(), walk, inputs=[[1.0]] + [[0.0]] * 4)
    assert np.allclose(np.concatenate(traj.z), [0.0, 1.0, 0.5, 0.25, 0.125])
    assert traj.horizon == 5 and traj.energy() == 1.0


def test_zero_trajectory():
    traj = simulate(two_label(), EdgeWalk.from_labels(DROPOUT, 1, [1, 2, 1, 1]))
    assert all(not np.any(z) for z in traj.z)
    assert [len(w) for w in traj.w] == [1, 2, 1, 1]


def test_simulate_rejects_wrong_input_width():
    with pytest.raises(ModelError):
        simulate(two_label(), EdgeWalk.from_labels(DROPOUT, 1, [2, 1]), inputs=[[1.0], [1.0]])


def test_adjoint_identity():
    rng = np.random.default_rng(0)
    f = two_label()
    walk = random_walk(DROPOUT, 30, rng, start=1)
    w = [rng.standard_normal(f.for_edge(e, l).B.shape[1]) for e, l in zip(walk.nodes, walk.labels)]
    y = [rng.standard_normal(f.for_edge(e, l).C.shape[0]) for e, l in zip(walk.nodes, walk.labels)]
    z = simulate(f, walk, inputs=w).z
    lhs = sum(a @ b for a, b in zip(z, y))
    rhs = sum(a @ b for a, b in zip(w, adjoint(f, walk, y)))
    assert np.isclose(lhs, rhs)


def test_random_walks_are_admissible():
    rng = np.random.default_rng(1)
    for _ in range(20):
        walk = random_walk(DROPOUT, 15, rng)
        assert len(walk) == 15
    assert (0,) in closed_walks(DROPOUT) and (1, 2) in closed_walks(DROPOUT)
    assert periodic_walk(DROPOUT, (1, 2), 5).labels == [2, 1, 2, 1, 2]


def test_scalar_l2_lower_bound():
    lb = empirical_l2_lb(scalar(), LOOP, horizon=200, trials=2, seed=0)
    assert 1.99 <= lb.value <= 2.0 + 1e-9


def test_walk_gain_below_hinf():
    rng = np.random.default_rng(2)
    s = scalar(0.9, 0.3)[1]
    val, _ = walk_gain(scalar(0.9, 0.3), EdgeWalk((0,) * 150, LOOP), rng, 40)
    assert val <= hinf_norm(s.A, s.B, s.C, s.D) + 1e-9
    assert val >= 0.98 * hinf_norm(s.A, s.B, s.C, s.D)


def test_scalar_peak_lower_bound():
    lb = empirical_peak_lb(scalar(), LOOP, horizon=60, trials=1)
    assert 1.15 <= lb.value <= np.sqrt(4 / 3) + 1e-12
    with pytest.raises(ModelError):
        empirical_peak_lb(scalar(d=1.0), LOOP)


def test_lower_bound_below_certified_gain():
    f = two_label()
    gamma = analyze_closed_loop(f, DROPOUT).gamma
    for seed in (1, 2, 3):
        assert empirical_l2_lb(f, DROPOUT, horizon=100, trials=3, seed=seed).value <= gamma + 1e-6


def test_dissipation_along_walks():
    f = two_label()
    trace = analyze_closed_loop(f, DROPOUT)
    cert = Certificate.from_trace(trace, "analysis/primal")
    X = {i: cert.node_matrix("X", i) for i in DROPOUT.nodes}
    p = l2_perf(f, float(cert.values["t"][0, 0]))
    rng = np.random.default_rng(3)
    walk = random_walk(DROPOUT, 40, rng, start=1)
    w = [rng.standard_normal(f.for_edge(e, l).B.shape[1]) for e, l in zip(walk.nodes, walk.labels)]
    x0 = rng.standard_normal(2)
    audit = check_dissipation(f, walk, X, p, x0, w)
    assert audit.worst >= -1e-9 * (1 + max(map(abs, audit.slacks)))
    assert np.isclose(audit.telescoped, sum(audit.slacks))
    bad = check_dissipation(f, walk, {i: -M for i, M in X.items()}, p, x0, w)
    assert bad.worst < 0


def test_spectral_audit():
    audit = spectral_audit(scalar(0.5), LOOP, 6)
    assert np.allclose(audit.profile, [0.5] * 6)
    assert spectral_audit(scalar(1.2), LOOP, 3).value > 1
    with pytest.raises(ModelError):
        spectral_audit(scalar(), LOOP, 0)


def test_trajectory_csv(tmp_path):
    f = two_label()
    walk = EdgeWalk.from_labels(DROPOUT, 1, [2, 1, 1])
    traj = simulate(f, walk, inputs=[[1.0, 2.0], [3.0], [0.0]])
    path = trajectory_to_csv(traj, tmp_path / "out" / "traj.csv")
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["t", "node", "label", "x1", "x2", "w1", "w2", "z1", "z2"]
    assert rows[1][:3] == ["0", "1", "2"]
    assert rows[2][6] == "" and rows[2][8] == ""
    assert len(rows) == 4
