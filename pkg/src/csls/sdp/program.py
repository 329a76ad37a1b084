"""Neutral conic-program representation of a set of LMI blocks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ModelError, NonAffineError
from ..lmi.affine import AffineExpr, LmiBlock, MatrixVariable, collect_variables, lift

STATUSES = ("optimal", "infeasible", "numerical-failure", "bracket-exceeded")


@dataclass
class Cone:
    """Constraint ``F0 + sum_k x_k F[:, :, k] >= 0`` (margin already folded into F0)."""

    F0: np.ndarray
    F: np.ndarray
    tag: tuple
    margin: float

    @property
    def size(self) -> int:
        return self.F0.shape[0]

    def value(self, x: np.ndarray) -> np.ndarray:
        return self.F0 + np.einsum("pqk,k->pq", self.F, x)


@dataclass
class ConicProgram:
    variables: list[MatrixVariable]
    cones: list[Cone]
    c: np.ndarray
    c0: float = 0.0
    blocks: list[LmiBlock] = field(default_factory=list, repr=False)

    @property
    def num_scalars(self) -> int:
        return int(sum(v.size for v in self.variables))

    @property
    def has_objective(self) -> bool:
        return bool(np.any(self.c != 0))

    def offsets(self) -> dict[str, slice]:
        out, k = {}, 0
        for v in self.variables:
            out[v.name] = slice(k, k + v.size)
            k += v.size
        return out

    def unpack(self, x) -> dict[str, np.ndarray]:
        x = np.asarray(x, dtype=float)
        return {v.name: v.unpack(x[sl]) for v, sl in zip(self.variables, self.offsets().values())}

    def pack(self, values) -> np.ndarray:
        x = np.zeros(self.num_scalars)
        for v, sl in zip(self.variables, self.offsets().values()):
            x[sl] = v.pack(values[v.name])
        return x

    def census(self) -> dict[str, int]:
        return {v.name: v.size for v in self.variables}

    def min_margin(self, x) -> float:
        """Smallest eigenvalue over all cones (margins included); >= 0 means feasible."""
        vals = [np.linalg.eigvalsh(c.value(x))[0] for c in self.cones if c.size]
        return float(min(vals, default=np.inf))

    def objective(self, x) -> float:
        return float(self.c @ x + self.c0)


def lower(blocks: list[LmiBlock], objective=None) -> ConicProgram:
    """Flatten LMI blocks into cones over the packed variable vector."""
    if not blocks:
        raise ModelError("empty constraint list")
    obj = None
    if objective is not None:
        obj = objective.expr() if isinstance(objective, MatrixVariable) else lift(objective)
        if obj.shape != (1, 1):
            raise ModelError("objective must be scalar")
    variables = collect_variables(blocks, [obj] if obj is not None else [])
    offsets, k = {}, 0
    for v in variables:
        offsets[v.name] = slice(k, k + v.size)
        k += v.size
    N = k
    cones = []
    for b in blocks:
        if not isinstance(b.expr, AffineExpr):
            raise NonAffineError(f"block {b.tag} is not affine")
        F = b.normalized()
        coeff = np.zeros(F.shape + (N,))
        for name, (var, cf) in F.terms.items():
            coeff[:, :, offsets[name]] = cf
        coeff = 0.5 * (coeff + coeff.transpose(1, 0, 2))
        F0 = 0.5 * (F.const + F.const.T) - b.required_margin * np.eye(F.shape[0])
        cones.append(Cone(F0, coeff, b.tag, b.required_margin))
    c = np.zeros(N)
    c0 = 0.0
    if obj is not None:
        c0 = float(obj.const[0, 0])
        for name, (var, cf) in obj.terms.items():
            c[offsets[name]] = cf[0, 0]
    return ConicProgram(variables, cones, c, c0, list(blocks))


def phase_one(prog: ConicProgram) -> ConicProgram:
    """Feasibility as ``max lam`` s.t. every cone ``>= lam I`` and ``lam <= 1``.

    The extra scalar ``lam`` is appended as the last coordinate.
    """
    lam = MatrixVariable("__lambda", (1, 1))
    N = prog.num_scalars
    cones = []
    for c in prog.cones:
        F = np.concatenate([c.F, -np.eye(c.size)[:, :, None]], axis=2)
        cones.append(Cone(c.F0, F, c.tag, c.margin))
    cap = np.zeros((1, 1, N + 1))
    cap[0, 0, N] = -1.0
    cones.append(Cone(np.ones((1, 1)), cap, ("phase-one-cap",), 0.0))
    c = np.zeros(N + 1)
    c[N] = -1.0
    return ConicProgram(prog.variables + [lam], cones, c, 0.0, prog.blocks)


@dataclass
class SolveResult:
    status: str
    values: dict[str, np.ndarray] | None = None
    x: np.ndarray | None = None
    objective: float | None = None
    residual: float | None = None
    iterations: int = 0
    solver: str = ""
    message: str = ""

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")
        if self.status != "optimal":
            self.values = None

    @property
    def ok(self) -> bool:
        return self.status == "optimal"
