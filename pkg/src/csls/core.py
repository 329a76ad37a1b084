"""Data model for constrained switched linear systems.

A constraining graph restricts which label sequences may occur; each label
selects one discrete-time state-space system.  Systems share the state
dimension but may differ in their input and output dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import ModelError, WalkBudgetError

SYMMETRY_RTOL = 1e-10
DEFAULT_WALK_CAP = 10**6


def as_matrix(value, name: str = "matrix") -> np.ndarray:
    """Coerce nested lists / scalars into a 2-D float array."""
    arr = np.array(value, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        # a bare list is read as a column, except for the empty list
        arr = arr.reshape(-1, 1) if arr.size else arr.reshape(0, 0)
    if arr.ndim != 2:
        raise ModelError(f"{name} must be two-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ModelError(f"{name} has non-finite entries")
    return arr


def symmetrize(value, name: str = "matrix") -> np.ndarray:
    """Return the symmetric part of a nearly symmetric square matrix.

    Asymmetry above ``SYMMETRY_RTOL`` relative to the matrix norm is an error.
    """
    arr = as_matrix(value, name)
    if arr.shape[0] != arr.shape[1]:
        raise ModelError(f"{name} must be square, got {arr.shape}")
    scale = max(1.0, float(np.max(np.abs(arr), initial=0.0)))
    if np.max(np.abs(arr - arr.T), initial=0.0) > SYMMETRY_RTOL * scale:
        raise ModelError(f"{name} is not symmetric")
    return 0.5 * (arr + arr.T)


@dataclass(frozen=True)
class Edge:
    tail: int
    head: int
    label: int

    def as_list(self) -> list[int]:
        return [self.tail, self.head, self.label]


@dataclass(frozen=True)
class ConstrainingGraph:
    """Finite labeled digraph; edge ``(i, j, l)`` lets label ``l`` fire at node ``i``."""

    nodes: tuple[int, ...]
    edges: tuple[Edge, ...]
    num_labels: int

    def __init__(self, nodes: Sequence[int], edges: Sequence, num_labels: int | None = None):
        edge_list = tuple(e if isinstance(e, Edge) else Edge(*map(int, e)) for e in edges)
        seen = set()
        for e in edge_list:
            key = (e.tail, e.head, e.label)
            if key in seen:
                raise ModelError(f"duplicate edge {key}")
            seen.add(key)
        if num_labels is None:
            num_labels = max((e.label for e in edge_list), default=0)
        object.__setattr__(self, "nodes", tuple(sorted(int(v) for v in set(nodes))))
        object.__setattr__(self, "edges", edge_list)
        object.__setattr__(self, "num_labels", int(num_labels))

    @property
    def labels(self) -> range:
        return range(1, self.num_labels + 1)

    def out_edges(self, node: int) -> list[int]:
        return [k for k, e in enumerate(self.edges) if e.tail == node]

    def successors(self, edge_index: int) -> list[int]:
        return self.out_edges(self.edges[edge_index].head)

    def tail_labels(self) -> list[tuple[int, int]]:
        """Distinct (node, label) pairs that occur as (tail, label) of an edge."""
        pairs = sorted({(e.tail, e.label) for e in self.edges})
        return pairs

    def edge_count_matrix(self) -> np.ndarray:
        """Edge-to-edge successor matrix (entry (a, b) = 1 iff b may follow a)."""
        m = len(self.edges)
        mat = np.zeros((m, m), dtype=np.int64)
        for a, e in enumerate(self.edges):
            for b in self.out_edges(e.head):
                mat[a, b] = 1
        return mat


def validate_graph(g: ConstrainingGraph) -> list[str]:
    """List every violated graph invariant; an empty list means valid."""
    problems = []
    node_set = set(g.nodes)
    if not g.nodes:
        problems.append("graph has no nodes")
    if g.num_labels < 1:
        problems.append("num_labels must be at least 1")
    for v in g.nodes:
        if v < 1:
            problems.append(f"node id {v} is not a positive integer")
    for e in g.edges:
        for end in (e.tail, e.head):
            if end not in node_set:
                problems.append(f"edge {tuple(e.as_list())} references unknown node {end}")
        if not 1 <= e.label <= g.num_labels:
            problems.append(f"edge {tuple(e.as_list())} has label outside 1..{g.num_labels}")
    for v in g.nodes:
        if not any(e.tail == v for e in g.edges):
            problems.append(f"node {v} lacks outgoing edge")
        if not any(e.head == v for e in g.edges):
            problems.append(f"node {v} lacks incoming edge")
    used = {e.label for e in g.edges}
    for l in g.labels:
        if l not in used:
            problems.append(f"label {l} appears on no edge")
    return problems


@dataclass(frozen=True)
class StateSpace:
    """Discrete-time system ``x+ = A x + B w (+ Bu u)``, ``z = C x + D w (+ Du u)``.

    ``Bu``/``Du`` describe an optional control channel; both or neither.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    Bu: np.ndarray | None = None
    Du: np.ndarray | None = None

    def __post_init__(self):
        for name in ("A", "B", "C", "D", "Bu", "Du"):
            val = getattr(self, name)
            if val is not None:
                arr = as_matrix(val, name)
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise ModelError(f"A must be square, got {self.A.shape}")
        if self.B.shape[0] != n and self.B.size:
            raise ModelError(f"B has {self.B.shape[0]} rows, expected {n}")
        if self.B.size == 0:
            object.__setattr__(self, "B", np.zeros((n, self.B.shape[1] if self.B.shape[0] == n else 0)))
        if self.C.shape[1] != n and self.C.size:
            raise ModelError(f"C has {self.C.shape[1]} columns, expected {n}")
        if self.C.size == 0:
            object.__setattr__(self, "C", np.zeros((self.C.shape[0] if self.C.shape[1] == n else 0, n)))
        if self.D.shape != (self.C.shape[0], self.B.shape[1]):
            if self.D.size == 0:
                object.__setattr__(self, "D", np.zeros((self.C.shape[0], self.B.shape[1])))
            else:
                raise ModelError(
                    f"D has shape {self.D.shape}, expected {(self.C.shape[0], self.B.shape[1])}"
                )
        if (self.Bu is None) != (self.Du is None):
            raise ModelError("control channel needs both Bu and Du")
        if self.Bu is not None:
            if self.Bu.shape[0] != n:
                raise ModelError(f"Bu has {self.Bu.shape[0]} rows, expected {n}")
            if self.Du.shape != (self.C.shape[0], self.Bu.shape[1]):
                raise ModelError(
                    f"Du has shape {self.Du.shape}, expected {(self.C.shape[0], self.Bu.shape[1])}"
                )

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def d_in(self) -> int:
        return self.B.shape[1]

    @property
    def d_out(self) -> int:
        return self.C.shape[0]

    @property
    def d_u(self) -> int:
        return 0 if self.Bu is None else self.Bu.shape[1]

    @property
    def has_control(self) -> bool:
        return self.Bu is not None

    def without_control(self) -> "StateSpace":
        return StateSpace(self.A, self.B, self.C, self.D)

    def with_gain(self, K: np.ndarray) -> "StateSpace":
        """Close ``u = K x``."""
        if self.Bu is None:
            raise ModelError("system has no control channel")
        K = as_matrix(K, "K")
        if K.shape != (self.d_u, self.n):
            raise ModelError(f"gain has shape {K.shape}, expected {(self.d_u, self.n)}")
        return StateSpace(self.A + self.Bu @ K, self.B, self.C + self.Du @ K, self.D)


class SystemFamily(Mapping):
    """Label-indexed family of state-space systems with a shared state dimension."""

    def __init__(self, systems: Mapping[int, StateSpace]):
        self._systems = {int(k): v for k, v in sorted(systems.items())}
        dims = {s.n for s in self._systems.values()}
        if len(dims) > 1:
            raise ModelError(f"state dimensions differ across labels: {sorted(dims)}")
        self.state_dim = dims.pop() if dims else 0

    def __getitem__(self, label: int) -> StateSpace:
        return self._systems[label]

    def __iter__(self) -> Iterator[int]:
        return iter(self._systems)

    def __len__(self) -> int:
        return len(self._systems)

    def __repr__(self) -> str:
        return f"SystemFamily(labels={list(self)}, n={self.state_dim})"

    def for_edge(self, tail: int, label: int) -> StateSpace:
        return self._systems[label]

    def d_in(self, label: int) -> int:
        return self[label].d_in

    def d_out(self, label: int) -> int:
        return self[label].d_out

    @property
    def has_control(self) -> bool:
        return all(s.has_control for s in self._systems.values())

    def data_norm(self) -> float:
        mats = [m for s in self._systems.values() for m in (s.A, s.B, s.C, s.D) if m.size]
        return max((float(np.linalg.norm(m, 2)) for m in mats), default=0.0)


@dataclass(frozen=True)
class IndexBlock:
    """One supply-rate matrix ``[[Q, S], [S^T, R]]``."""

    Q: np.ndarray
    S: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        Q = symmetrize(self.Q, "Q")
        R = symmetrize(self.R, "R")
        S = as_matrix(self.S, "S")
        if S.size == 0:
            S = np.zeros((Q.shape[0], R.shape[0]))
        if S.shape != (Q.shape[0], R.shape[0]):
            raise ModelError(f"S has shape {S.shape}, expected {(Q.shape[0], R.shape[0])}")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "R", R)

    @property
    def matrix(self) -> np.ndarray:
        return np.block([[self.Q, self.S], [self.S.T, self.R]])

    @property
    def d_in(self) -> int:
        return self.Q.shape[0]

    @property
    def d_out(self) -> int:
        return self.R.shape[0]


class PerformanceIndex(Mapping):
    """Label-indexed family of supply-rate blocks."""

    def __init__(self, blocks: Mapping[int, IndexBlock]):
        self._blocks = {int(k): v for k, v in sorted(blocks.items())}

    def __getitem__(self, label: int) -> IndexBlock:
        return self._blocks[label]

    def __iter__(self):
        return iter(self._blocks)

    def __len__(self):
        return len(self._blocks)

    def __repr__(self):
        return f"PerformanceIndex(labels={list(self)})"


def validate_pairing(
    g: ConstrainingGraph, f: SystemFamily, p: PerformanceIndex | None = None
) -> list[str]:
    problems = []
    for l in g.labels:
        if l not in f:
            problems.append(f"label {l} unassigned")
    for l in f:
        if l not in g.labels:
            problems.append(f"system given for unknown label {l}")
    dims = {l: f[l].n for l in f}
    if len(set(dims.values())) > 1:
        problems.append(f"state dimension mismatch across labels: {dims}")
    if p is not None:
        for l in g.labels:
            if l not in p:
                problems.append(f"index block for label {l} missing")
                continue
            if l not in f:
                continue
            blk, sys = p[l], f[l]
            if blk.d_in != sys.d_in:
                problems.append(
                    f"label {l}: Q is {blk.d_in}x{blk.d_in} but input dimension is {sys.d_in}"
                )
            if blk.d_out != sys.d_out:
                problems.append(
                    f"label {l}: R is {blk.d_out}x{blk.d_out} but output dimension is {sys.d_out}"
                )
    return problems


@dataclass(frozen=True)
class EdgeWalk:
    """Admissible sequence of edge indices into a constraining graph."""

    edges: tuple[int, ...]
    graph: ConstrainingGraph = field(repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(int(k) for k in self.edges))
        for a, b in zip(self.edges, self.edges[1:]):
            if self.graph.edges[a].head != self.graph.edges[b].tail:
                raise ModelError(f"edges {a} and {b} are not consecutive")

    def __len__(self) -> int:
        return len(self.edges)

    @property
    def labels(self) -> list[int]:
        return [self.graph.edges[k].label for k in self.edges]

    @property
    def nodes(self) -> list[int]:
        """Tail node at each step."""
        return [self.graph.edges[k].tail for k in self.edges]

    @classmethod
    def from_labels(cls, g: ConstrainingGraph, start: int, labels: Sequence[int]) -> "EdgeWalk":
        """Follow a label sequence from ``start``; the first matching edge is taken."""
        node, out = start, []
        for l in labels:
            match = [k for k in g.out_edges(node) if g.edges[k].label == l]
            if not match:
                raise ModelError(f"label {l} cannot fire at node {node}")
            out.append(match[0])
            node = g.edges[match[0]].head
        return cls(tuple(out), g)


def enumerate_walks(
    g: ConstrainingGraph, start: int, length: int, cap: int = DEFAULT_WALK_CAP
) -> list[EdgeWalk]:
    """All admissible walks of ``length`` edges leaving ``start``, lexicographic in edge index."""
    if length < 1:
        raise ModelError("walk length must be at least 1")
    if start not in g.nodes:
        raise ModelError(f"unknown start node {start}")
    # count first so the cap is enforced before allocating anything
    counts = np.zeros(len(g.edges), dtype=object)
    for k in g.out_edges(start):
        counts[k] = 1
    adj = g.edge_count_matrix().astype(object)
    for _ in range(length - 1):
        counts = counts @ adj
    total = int(sum(counts))
    if total > cap:
        raise WalkBudgetError(f"{total} walks exceed the cap of {cap}")

    out: list[EdgeWalk] = []
    succ = {k: g.successors(k) for k in range(len(g.edges))}

    def extend(prefix: list[int]):
        if len(prefix) == length:
            out.append(EdgeWalk(tuple(prefix), g))
            return
        for k in succ[prefix[-1]]:
            prefix.append(k)
            extend(prefix)
            prefix.pop()

    for k in g.out_edges(start):
        extend([k])
    return out


def l2_index(gamma: float, f: SystemFamily | Mapping[int, StateSpace]) -> PerformanceIndex:
    """Index ``(-gamma^2 I, 0, I)`` per label: l2-gain below ``gamma``."""
    if not gamma > 0:
        raise ModelError("gamma must be positive")
    blocks = {}
    for l in f:
        di, do = f[l].d_in, f[l].d_out
        blocks[l] = IndexBlock(-(gamma**2) * np.eye(di), np.zeros((di, do)), np.eye(do))
    return PerformanceIndex(blocks)
