"""Trajectory-level oracle: simulation, empirical gain lower bounds, dissipation
and spectral audits.

Every number computed here is a lower bound (or a direct evaluation) that a
certified upper bound must dominate.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .core import ConstrainingGraph, EdgeWalk, as_matrix
from .errors import ModelError, WalkBudgetError
from .lmi.index import Supply
from .whrt import BasePlant

POWER_ITERS = 20
WALK_MODES = ("random", "adversarial", "periodic")


@dataclass
class Trajectory:
    walk: EdgeWalk
    x: list[np.ndarray]
    w: list[np.ndarray]
    z: list[np.ndarray]

    @property
    def horizon(self) -> int:
        return len(self.w)

    def energy(self, signal: str = "w") -> float:
        return float(sum(v @ v for v in getattr(self, signal)))


def _sys(f, walk: EdgeWalk, t: int):
    e = walk.graph.edges[walk.edges[t]]
    return f.for_edge(e.tail, e.label)


def _steps(f, walk: EdgeWalk) -> list:
    return [_sys(f, walk, t) for t in range(len(walk))]


def _forward(steps, x, w) -> list[np.ndarray]:
    z = []
    for s, wt in zip(steps, w):
        z.append(s.C @ x + s.D @ wt)
        x = s.A @ x + s.B @ wt
    return z


def _backward(steps, n, y) -> list[np.ndarray]:
    lam = np.zeros(n)
    out = [None] * len(steps)
    for t in reversed(range(len(steps))):
        s = steps[t]
        out[t] = s.B.T @ lam + s.D.T @ y[t]
        lam = s.A.T @ lam + s.C.T @ y[t]
    return out


def simulate(f, walk: EdgeWalk, x0=None, inputs=None) -> Trajectory:
    """Roll out ``x(t+1) = A x + B w``, ``z = C x + D w`` along ``walk``."""
    n = f.state_dim
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).reshape(n)
    T = len(walk)
    if inputs is not None and len(inputs) != T:
        raise ModelError(f"{len(inputs)} input blocks for a walk of {T} steps")
    xs, ws, zs = [x], [], []
    for t in range(T):
        s = _sys(f, walk, t)
        w = np.zeros(s.B.shape[1]) if inputs is None else np.asarray(inputs[t], dtype=float).reshape(-1)
        if w.size != s.B.shape[1]:
            raise ModelError(f"step {t}: input block has {w.size} entries, label expects {s.B.shape[1]}")
        zs.append(s.C @ x + s.D @ w)
        x = s.A @ x + s.B @ w
        xs.append(x)
        ws.append(w)
    return Trajectory(walk, xs, ws, zs)


def adjoint(f, walk: EdgeWalk, outputs) -> list[np.ndarray]:
    """Adjoint of the zero-initial-state input-output map along ``walk``."""
    return _backward(_steps(f, walk), f.state_dim, [np.asarray(y, dtype=float) for y in outputs])


def _norm(blocks) -> float:
    return math.sqrt(sum(float(b @ b) for b in blocks))


# walk sampling ------------------------------------------------------------------


def random_walk(g: ConstrainingGraph, T: int, rng: np.random.Generator, start: int | None = None) -> EdgeWalk:
    """Uniform choice among outgoing edges at every step."""
    node = g.nodes[rng.integers(len(g.nodes))] if start is None else start
    out = []
    for _ in range(T):
        choices = g.out_edges(node)
        k = choices[rng.integers(len(choices))]
        out.append(k)
        node = g.edges[k].head
    return EdgeWalk(tuple(out), g)


def adversarial_walk(f, g: ConstrainingGraph, T: int, rng: np.random.Generator, start: int | None = None) -> EdgeWalk:
    """Greedy walk maximizing the state norm under a unit random first input."""
    node = g.nodes[rng.integers(len(g.nodes))] if start is None else start
    x = np.zeros(f.state_dim)
    out = []
    for t in range(T):
        best = None
        for k in g.out_edges(node):
            s = f.for_edge(node, g.edges[k].label)
            w = np.zeros(s.B.shape[1])
            if t == 0 and w.size:
                w = rng.standard_normal(w.size)
                w /= np.linalg.norm(w)
            xn = s.A @ x + s.B @ w
            score = float(np.linalg.norm(xn)) + float(np.linalg.norm(s.C @ x + s.D @ w))
            if best is None or score > best[0]:
                best = (score, k, xn)
        _, k, x = best
        nx = np.linalg.norm(x)
        if nx > 0:
            x = x / nx
        out.append(k)
        node = g.edges[k].head
    return EdgeWalk(tuple(out), g)


def closed_walks(g: ConstrainingGraph, max_len: int = 4) -> list[tuple[int, ...]]:
    """Edge cycles of length up to ``max_len`` (used to build periodic walks)."""
    cycles = []
    for start in g.nodes:
        stack = [(k,) for k in g.out_edges(start)]
        while stack:
            path = stack.pop()
            if g.edges[path[-1]].head == start:
                cycles.append(path)
            if len(path) < max_len:
                stack.extend(path + (k,) for k in g.successors(path[-1]))
    return sorted(set(cycles))


def periodic_walk(g: ConstrainingGraph, cycle: Sequence[int], T: int) -> EdgeWalk:
    reps = -(-T // len(cycle))
    return EdgeWalk(tuple(list(cycle) * reps)[:T], g)


def sample_walks(f, g: ConstrainingGraph, horizon: int, trials: int, rng, modes=WALK_MODES) -> list[EdgeWalk]:
    walks = []
    if "periodic" in modes:
        walks += [periodic_walk(g, c, horizon) for c in closed_walks(g)]
    for _ in range(trials):
        if "random" in modes:
            walks.append(random_walk(g, horizon, rng))
        if "adversarial" in modes:
            walks.append(adversarial_walk(f, g, horizon, rng))
    return walks


# gain lower bounds --------------------------------------------------------------


@dataclass
class GainBound:
    value: float
    walk: EdgeWalk | None = None
    inputs: list[np.ndarray] | None = None
    samples: int = 0


def walk_gain(f, walk: EdgeWalk, rng, iters: int = POWER_ITERS) -> tuple[float, list[np.ndarray]]:
    """Power iteration on ``M^T M`` for the walk operator ``M: w -> z`` (x0 = 0)."""
    steps = _steps(f, walk)
    n = f.state_dim
    w = [rng.standard_normal(s.B.shape[1]) for s in steps]
    nw = _norm(w)
    if nw == 0:
        return 0.0, w
    w = [b / nw for b in w]
    best = 0.0
    for _ in range(iters):
        z = _forward(steps, np.zeros(n), w)
        best = max(best, _norm(z))
        v = _backward(steps, n, z)
        nv = _norm(v)
        if nv == 0:
            break
        w = [b / nv for b in v]
    best = max(best, _norm(_forward(steps, np.zeros(n), w)))
    return best, w


def empirical_l2_lb(f, g: ConstrainingGraph, horizon: int = 200, trials: int = 10, seed: int = 0,
                    iters: int = POWER_ITERS, modes=WALK_MODES) -> GainBound:
    """Largest ``||z|| / ||w||`` found over sampled walks with power-iteration-refined inputs."""
    if horizon < 1:
        raise ModelError("horizon must be at least 1")
    rng = np.random.default_rng(seed)
    best = GainBound(0.0)
    walks = sample_walks(f, g, horizon, trials, rng, modes)
    for walk in walks:
        val, w = walk_gain(f, walk, rng, iters)
        if val > best.value:
            best = GainBound(val, walk, w)
    best.samples = len(walks)
    return best


def walk_peak_gain(f, walk: EdgeWalk) -> float:
    """Exact ``sup_t ||z(t)|| / ||w||`` along ``walk`` through the reachability Gramian."""
    n = f.state_dim
    W = np.zeros((n, n))
    best = 0.0
    for t in range(len(walk)):
        s = _sys(f, walk, t)
        if np.any(s.D != 0):
            raise ModelError("energy-to-peak bound needs zero feedthrough")
        if s.C.size:
            M = s.C @ W @ s.C.T
            best = max(best, math.sqrt(max(float(np.linalg.eigvalsh(M)[-1]), 0.0)))
        W = s.A @ W @ s.A.T + s.B @ s.B.T
    return best


def empirical_peak_lb(f, g: ConstrainingGraph, horizon: int = 200, trials: int = 10, seed: int = 0,
                      modes=WALK_MODES) -> GainBound:
    """Largest peak-to-energy ratio over sampled walks."""
    for key in f:
        if np.any(f[key].D != 0):
            raise ModelError("energy-to-peak bound needs zero feedthrough")
    rng = np.random.default_rng(seed)
    best = GainBound(0.0)
    walks = sample_walks(f, g, horizon, trials, rng, modes)
    for walk in walks:
        val = walk_peak_gain(f, walk)
        if val > best.value:
            best = GainBound(val, walk)
    best.samples = len(walks)
    return best


# dissipation and spectral audits -------------------------------------------------


@dataclass
class DissipationAudit:
    slacks: list[float]
    telescoped: float
    supply_total: float
    storage_drop: float

    @property
    def worst(self) -> float:
        return min(self.slacks, default=0.0)


def check_dissipation(f, walk: EdgeWalk, X: Mapping[int, np.ndarray], p, x0=None, inputs=None) -> DissipationAudit:
    """Per-step slack ``V_i(x) - V_j(x+) - s_l(w, z)`` of the dissipation inequality
    ``V_j(x+) + s_l(w, z) <= V_i(x)``.

    ``X`` maps node -> storage matrix.  The telescoped sum equals
    ``V(x0) - V(x_T) - sum s``, the accumulated inequality.
    """
    traj = simulate(f, walk, x0, inputs)
    slacks, supply = [], 0.0
    for t, k in enumerate(walk.edges):
        e = walk.graph.edges[k]
        sup = Supply.of(p[e.label])
        P = np.block([[sup.Q.const, sup.S.const], [sup.S.const.T, sup.R.const]])
        v = np.concatenate([traj.w[t], traj.z[t]])
        s = float(v @ P @ v)
        xi, xj = traj.x[t], traj.x[t + 1]
        slacks.append(float(xi @ X[e.tail] @ xi - xj @ X[e.head] @ xj - s))
        supply += s
    first, last = walk.graph.edges[walk.edges[0]].tail, walk.graph.edges[walk.edges[-1]].head
    drop = float(traj.x[0] @ X[first] @ traj.x[0] - traj.x[-1] @ X[last] @ traj.x[-1])
    return DissipationAudit(slacks, drop - supply, supply, drop)


@dataclass
class SpectralAudit:
    value: float
    profile: list[float] = field(default_factory=list)


def spectral_audit(f, g: ConstrainingGraph, depth: int = 12, cap: int = 10**6) -> SpectralAudit:
    """``max ||A_{e_k} ... A_{e_0}||^(1/(k+1))`` over admissible walks of each length up to ``depth``.

    ``value`` is the figure at ``depth``; values at or above 1 flag possible
    instability (a necessary-condition audit only).
    """
    if not 1 <= depth <= 20:
        raise ModelError("depth must be between 1 and 20")
    # frontier: (last edge, product) pairs; identical products per edge are merged
    frontier = []
    for k, e in enumerate(g.edges):
        frontier.append((k, f.for_edge(e.tail, e.label).A))
    profile = []
    for k in range(1, depth + 1):
        norms = [np.linalg.norm(P, 2) for _, P in frontier]
        profile.append(float(max(norms)) ** (1.0 / k))
        if k == depth:
            break
        nxt = []
        for last, P in frontier:
            for b in g.successors(last):
                e = g.edges[b]
                nxt.append((b, f.for_edge(e.tail, e.label).A @ P))
        if len(nxt) > cap:
            raise WalkBudgetError(f"{len(nxt)} products exceed the cap of {cap}")
        frontier = nxt
    return SpectralAudit(profile[-1], profile)


# output ------------------------------------------------------------------------------


def trajectory_to_csv(traj: Trajectory, path) -> Path:
    """Columns ``t, node, label, x1.., w1.., z1..``; short blocks leave trailing cells empty."""
    n = len(traj.x[0])
    dw = max((len(w) for w in traj.w), default=0)
    dz = max((len(z) for z in traj.z), default=0)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t", "node", "label"] + [f"x{i + 1}" for i in range(n)]
                    + [f"w{i + 1}" for i in range(dw)] + [f"z{i + 1}" for i in range(dz)])
        for t, k in enumerate(traj.walk.edges):
            e = traj.walk.graph.edges[k]
            w = [repr(float(v)) for v in traj.w[t]] + [""] * (dw - len(traj.w[t]))
            z = [repr(float(v)) for v in traj.z[t]] + [""] * (dz - len(traj.z[t]))
            wr.writerow([t, e.tail, e.label] + [repr(float(v)) for v in traj.x[t]] + w + z)
    return path


# base-plant stepping ---------------------------------------------------------------


def simulate_base(plant: BasePlant, word: Sequence[int], x0, w, u_blocks, strategy: str = "zero"):
    """Step the base plant through a loss word (1 = success).

    ``u_blocks`` holds one control value per success; on a loss the actuator
    applies zero or holds the last received value.  Returns ``(states, z)``.
    """
    x = np.asarray(x0, dtype=float).reshape(-1)
    w = np.asarray(w, dtype=float).reshape(len(word), -1)
    du = plant.Bu.shape[1]
    held = np.zeros(du)
    k = 0
    xs, zs = [x], []
    for t, bit in enumerate(word):
        if bit:
            held = np.asarray(u_blocks[k], dtype=float).reshape(du)
            k += 1
            u = held
        else:
            u = held if strategy == "hold" else np.zeros(du)
        x, z = plant.step(x, w[t], u)
        xs.append(x)
        zs.append(z)
    return xs, np.array(zs)


def lifted_outputs(f, walk: EdgeWalk, x0, w_blocks, u_blocks):
    """Simulate a lifted family that still carries its control channel (u as an input)."""
    x = np.asarray(x0, dtype=float).reshape(-1)
    xs, zs = [x], []
    for t in range(len(walk)):
        s = _sys(f, walk, t)
        u = as_matrix(u_blocks[t]).reshape(-1)
        w = np.asarray(w_blocks[t], dtype=float).reshape(-1)
        zs.append(s.C @ x + s.D @ w + s.Du @ u)
        x = s.A @ x + s.B @ w + s.Bu @ u
        xs.append(x)
    return xs, zs
