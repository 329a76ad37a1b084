"""Weakly-hard real-time constraints compiled into constrained switched systems.

A constraint ``(n, k)`` admits loss sequences in which every window of ``n``
consecutive control attempts contains at least ``k`` successes.  One lifted
step consists of a successful attempt followed by a run of losses; its label
is the run length plus one.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from itertools import product
from typing import Sequence

import numpy as np

from .core import (
    ConstrainingGraph,
    EdgeWalk,
    IndexBlock,
    PerformanceIndex,
    StateSpace,
    SystemFamily,
    as_matrix,
)
from .errors import ModelError

STRATEGIES = ("zero", "hold")


@dataclass(frozen=True)
class WhrtConstraint:
    window: int
    min_hits: int
    strategy: str = "zero"

    def __post_init__(self):
        if self.window < 1:
            raise ModelError("window length must be at least 1")
        if self.min_hits < 1:
            raise ModelError("at least one success per window is required (unbounded loss runs otherwise)")
        if self.min_hits > self.window:
            raise ModelError("min_hits cannot exceed the window length")
        if self.strategy not in STRATEGIES:
            raise ModelError(f"unknown strategy {self.strategy!r}")

    @property
    def max_losses(self) -> int:
        return self.window - self.min_hits

    def admits(self, word: Sequence[int]) -> bool:
        """Whether ``word`` (1 = success) occurs inside some admissible infinite sequence."""
        padded = [1] * self.window + list(word) + [1] * self.window
        n, k = self.window, self.min_hits
        return all(sum(padded[s : s + n]) >= k for s in range(len(padded) - n + 1))


def parse_constraint(text: str) -> WhrtConstraint:
    """Parse ``whrt:<k>/<n>:<zero|hold>``."""
    m = re.fullmatch(r"\s*whrt:(-?\d+)/(-?\d+):(\w+)\s*", text)
    if not m:
        raise ModelError(f"cannot parse constraint {text!r}; expected whrt:<k>/<n>:<zero|hold>")
    k, n, strategy = int(m.group(1)), int(m.group(2)), m.group(3)
    return WhrtConstraint(window=n, min_hits=k, strategy=strategy)


@dataclass(frozen=True)
class BasePlant:
    """Sampled plant ``x+ = A x + B w + Bu u``, ``z = C x + D w + Du u``."""

    A: np.ndarray
    B: np.ndarray
    Bu: np.ndarray
    C: np.ndarray
    D: np.ndarray
    Du: np.ndarray

    def __post_init__(self):
        for name in ("A", "B", "Bu", "C", "D", "Du"):
            object.__setattr__(self, name, as_matrix(getattr(self, name), name))
        # StateSpace performs the dimension checks
        StateSpace(self.A, self.B, self.C, self.D, self.Bu, self.Du)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def step(self, x, w, u):
        """One sampled step; returns ``(x_next, z)``."""
        return self.A @ x + self.B @ w + self.Bu @ u, self.C @ x + self.D @ w + self.Du @ u


def lift_zero(p: BasePlant, l: int) -> StateSpace:
    """Lifted block: one success, then ``l - 1`` losses with zero input."""
    return _lift(p, l, hold=False)


def lift_hold(p: BasePlant, l: int) -> StateSpace:
    """Lifted block: one success, then ``l - 1`` losses holding the last input."""
    return _lift(p, l, hold=True)


def _lift(p: BasePlant, l: int, hold: bool) -> StateSpace:
    if int(l) != l or l < 1:
        raise ModelError(f"label must be a positive integer, got {l}")
    l = int(l)
    n, dw, dz, du = p.n, p.B.shape[1], p.C.shape[0], p.Bu.shape[1]
    powers = [np.eye(n)]
    for _ in range(l):
        powers.append(powers[-1] @ p.A)
    # partial sums S_r = sum_{j<=r} A^j
    sums = np.cumsum(np.stack(powers[:l]), axis=0)

    A = powers[l]
    B = np.hstack([powers[l - 1 - j] @ p.B for j in range(l)]) if dw else np.zeros((n, 0))
    C = np.vstack([p.C @ powers[j] for j in range(l)]) if dz else np.zeros((0, n))
    D = np.zeros((l * dz, l * dw))
    Du = np.zeros((l * dz, du))
    for r in range(l):
        rows = slice(r * dz, (r + 1) * dz)
        for c in range(r + 1):
            cols = slice(c * dw, (c + 1) * dw)
            D[rows, cols] = p.D if r == c else p.C @ powers[r - c - 1] @ p.B
        if r == 0:
            Du[rows] = p.Du
        elif hold:
            Du[rows] = p.C @ sums[r - 1] @ p.Bu + p.Du
        else:
            Du[rows] = p.C @ powers[r - 1] @ p.Bu
    Bu = sums[l - 1] @ p.Bu if hold else powers[l - 1] @ p.Bu
    return StateSpace(A, B, C, D, Bu, Du)


def lift_family(p: BasePlant, num_labels: int, strategy: str = "zero") -> SystemFamily:
    if strategy not in STRATEGIES:
        raise ModelError(f"unknown strategy {strategy!r}")
    lift = lift_hold if strategy == "hold" else lift_zero
    return SystemFamily({l: lift(p, l) for l in range(1, num_labels + 1)})


def lift_index(base: IndexBlock, g: ConstrainingGraph) -> PerformanceIndex:
    """Per label ``(I_l kron Q, I_l kron S, I_l kron R)``."""
    if not isinstance(base, IndexBlock):
        base = IndexBlock(*base)
    return PerformanceIndex(
        {
            l: IndexBlock(np.kron(np.eye(l), base.Q), np.kron(np.eye(l), base.S), np.kron(np.eye(l), base.R))
            for l in g.labels
        }
    )


def check_index_dims(base: IndexBlock, p: BasePlant) -> None:
    if base.d_in != p.B.shape[1] or base.d_out != p.C.shape[0]:
        raise ModelError(
            f"index has {base.d_in} inputs/{base.d_out} outputs, plant has "
            f"{p.B.shape[1]}/{p.C.shape[0]}"
        )


# graph construction ---------------------------------------------------------


def compile_graph(c: WhrtConstraint) -> ConstrainingGraph:
    """Constraining graph whose label walks encode exactly the admissible loss words."""
    n, k = c.window, c.min_hits
    h = n - 1

    def valid(history: tuple, bits: Sequence[int]) -> tuple | None:
        word = history + tuple(bits)
        for s in range(len(word) - n + 1):
            if sum(word[s : s + n]) < k:
                return None
        return word[len(word) - h :] if h else ()

    # automaton states are the last n-1 outcomes; a block starts at a state
    # from which a success is allowed and reads 1 0^r, followed by a success
    states = [s for s in product((0, 1), repeat=h)]
    edges: dict[tuple, dict[int, tuple]] = {}
    for s in states:
        out = {}
        for r in range(c.max_losses + 1):
            block = (1,) + (0,) * r
            nxt = valid(s, block)
            if nxt is None or valid(nxt, (1,)) is None:
                continue
            out[r + 1] = nxt
        edges[s] = out

    # keep the states that lie on bi-infinite walks
    alive = {s for s in states if edges[s]}
    while True:
        has_in = {t for s in alive for t in edges[s].values() if t in alive}
        pruned = {s for s in alive if s in has_in and any(t in alive for t in edges[s].values())}
        if pruned == alive:
            break
        alive = pruned
    trans = {s: {l: t for l, t in edges[s].items() if t in alive} for s in alive}

    # Moore partition refinement on the (deterministic) label transitions
    cls = {s: tuple(sorted(trans[s])) for s in alive}
    while True:
        sig = {s: (cls[s], tuple((l, cls[t]) for l, t in sorted(trans[s].items()))) for s in alive}
        ids = {v: i for i, v in enumerate(sorted(set(sig.values()), key=repr))}
        new = {s: ids[sig[s]] for s in alive}
        if len(set(new.values())) == len(set(map(repr, cls.values()))):
            cls = new
            break
        cls = new

    # number classes breadth-first from the all-success history
    root = cls[(1,) * h]
    order = {root: 1}
    queue = [root]
    rep = {}
    for s in sorted(alive, reverse=True):
        rep.setdefault(cls[s], s)
    while queue:
        q = queue.pop(0)
        for l, t in sorted(trans[rep[q]].items()):
            if cls[t] not in order:
                order[cls[t]] = len(order) + 1
                queue.append(cls[t])
    edge_set = {(order[cls[s]], order[cls[t]], l) for s in alive for l, t in trans[s].items()}
    edge_list = sorted(edge_set, key=lambda e: (e[0], e[2], e[1]))
    num_labels = max(e[2] for e in edge_list)
    return ConstrainingGraph(sorted(order.values()), edge_list, num_labels)


def expand_labels(labels: Sequence[int]) -> list[int]:
    """Loss word (1 = success) produced by a label sequence."""
    word: list[int] = []
    for l in labels:
        word += [1] + [0] * (int(l) - 1)
    return word


def word_to_labels(word: Sequence[int]) -> list[int]:
    """Block labels of a word that starts with a success; the trailing run counts as a block."""
    if not word or word[0] != 1:
        raise ModelError("loss word must start with a success")
    labels = []
    for bit in word:
        if bit == 1:
            labels.append(1)
        else:
            labels[-1] += 1
    return labels


def accepts_labels(g: ConstrainingGraph, labels: Sequence[int]) -> bool:
    """Whether some walk of ``g`` carries the label sequence."""
    current = set(g.nodes)
    for l in labels:
        current = {e.head for e in g.edges if e.tail in current and e.label == l}
        if not current:
            return False
    return True


# signal packing ---------------------------------------------------------------


def pack_signal(signal, walk: EdgeWalk | Sequence[int]) -> list[np.ndarray]:
    """Group base samples (rows of ``signal``) into one flat block per walk step."""
    labels = walk.labels if isinstance(walk, EdgeWalk) else list(walk)
    sig = np.asarray(signal, dtype=float)
    if sig.ndim == 1:
        sig = sig.reshape(-1, 1)
    total = sum(labels)
    if sig.shape[0] != total:
        raise ModelError(f"signal has {sig.shape[0]} samples, walk needs {total}")
    out, pos = [], 0
    for l in labels:
        out.append(sig[pos : pos + l].reshape(-1))
        pos += l
    return out


def unpack_signal(blocks: Sequence[np.ndarray], width: int = 1) -> np.ndarray:
    """Inverse of :func:`pack_signal`; returns a ``(samples, width)`` array."""
    if not blocks:
        return np.zeros((0, width))
    return np.concatenate([np.asarray(b, dtype=float).reshape(-1, width) for b in blocks])
