"""Matrix-valued affine expressions over named matrix variables.

Symmetric variables are stored as packed lower-triangular coordinates in
column-major order with the sqrt(2) convention on off-diagonal entries, so
the packed vector has the same Euclidean norm as the Frobenius norm of the
matrix.  General variables are stored column-major.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from ..errors import ModelError, NonAffineError

SQRT2 = np.sqrt(2.0)

SENSES = {
    "neg-def": (-1.0, True),
    "pos-def": (1.0, True),
    "neg-semidef": (-1.0, False),
    "pos-semidef": (1.0, False),
}


@dataclass(frozen=True)
class MatrixVariable:
    name: str
    shape: tuple[int, int]
    kind: str = "symmetric"

    def __post_init__(self):
        r, c = self.shape
        object.__setattr__(self, "shape", (int(r), int(c)))
        if self.kind not in ("symmetric", "general"):
            raise ModelError(f"unknown variable kind {self.kind!r}")
        if self.kind == "symmetric" and r != c:
            raise ModelError(f"symmetric variable {self.name} must be square")

    @property
    def size(self) -> int:
        r, c = self.shape
        return r * (r + 1) // 2 if self.kind == "symmetric" else r * c

    def coordinates(self) -> list[tuple[int, int]]:
        r, c = self.shape
        if self.kind == "symmetric":
            return [(i, j) for j in range(c) for i in range(j, r)]
        return [(i, j) for j in range(c) for i in range(r)]

    def basis(self) -> np.ndarray:
        """Array of shape (rows, cols, size) mapping packed coordinates to the matrix."""
        r, c = self.shape
        out = np.zeros((r, c, self.size))
        for k, (i, j) in enumerate(self.coordinates()):
            if self.kind == "symmetric" and i != j:
                out[i, j, k] = out[j, i, k] = 1.0 / SQRT2
            else:
                out[i, j, k] = 1.0
        return out

    def pack(self, value) -> np.ndarray:
        value = np.asarray(value, dtype=float).reshape(self.shape)
        out = np.empty(self.size)
        for k, (i, j) in enumerate(self.coordinates()):
            if self.kind == "symmetric" and i != j:
                out[k] = SQRT2 * 0.5 * (value[i, j] + value[j, i])
            else:
                out[k] = value[i, j]
        return out

    def unpack(self, vec) -> np.ndarray:
        vec = np.asarray(vec, dtype=float)
        return np.einsum("rck,k->rc", self.basis(), vec)

    def expr(self) -> "AffineExpr":
        return AffineExpr(np.zeros(self.shape), {self.name: (self, self.basis())})


class AffineExpr:
    """``const + sum_v coeff_v . packed(v)`` with matrix-valued coefficients."""

    __slots__ = ("const", "terms")
    # make numpy defer to our reflected operators (ndarray @ AffineExpr)
    __array_ufunc__ = None

    def __init__(self, const, terms: Mapping[str, tuple[MatrixVariable, np.ndarray]] | None = None):
        self.const = np.atleast_2d(np.asarray(const, dtype=float))
        self.terms = dict(terms or {})
        for name, (var, coeff) in self.terms.items():
            if coeff.shape[:2] != self.const.shape:
                raise ModelError(f"coefficient of {name} has wrong shape")

    @classmethod
    def constant(cls, value) -> "AffineExpr":
        return cls(np.atleast_2d(np.asarray(value, dtype=float)))

    @property
    def shape(self) -> tuple[int, int]:
        return self.const.shape

    @property
    def is_constant(self) -> bool:
        return not self.terms

    @property
    def variables(self) -> list[MatrixVariable]:
        return [var for var, _ in self.terms.values()]

    @property
    def T(self) -> "AffineExpr":
        return AffineExpr(
            self.const.T, {n: (v, c.transpose(1, 0, 2)) for n, (v, c) in self.terms.items()}
        )

    def __repr__(self) -> str:
        return f"AffineExpr(shape={self.shape}, vars={sorted(self.terms)})"

    # arithmetic -----------------------------------------------------------

    def _binary(self, other, sign: float) -> "AffineExpr":
        other = lift(other)
        if other.shape != self.shape:
            raise ModelError(f"shape mismatch {self.shape} vs {other.shape}")
        terms = dict(self.terms)
        for name, (var, coeff) in other.terms.items():
            if name in terms:
                if terms[name][0] != var:
                    raise ModelError(f"variable name clash for {name}")
                terms[name] = (var, terms[name][1] + sign * coeff)
            else:
                terms[name] = (var, sign * coeff)
        return AffineExpr(self.const + sign * other.const, terms)

    def __add__(self, other):
        return self._binary(other, 1.0)

    def __radd__(self, other):
        return lift(other)._binary(self, 1.0)

    def __sub__(self, other):
        return self._binary(other, -1.0)

    def __rsub__(self, other):
        return lift(other)._binary(self, -1.0)

    def __neg__(self):
        return self * -1.0

    def __mul__(self, scalar):
        if isinstance(scalar, AffineExpr):
            if scalar.is_constant and scalar.shape == (1, 1):
                scalar = float(scalar.const[0, 0])
            elif self.is_constant and self.shape == (1, 1):
                return scalar * float(self.const[0, 0])
            else:
                raise NonAffineError("product of two variable expressions")
        if np.ndim(scalar) != 0:
            raise ModelError("use @ for matrix products")
        s = float(scalar)
        return AffineExpr(self.const * s, {n: (v, c * s) for n, (v, c) in self.terms.items()})

    __rmul__ = __mul__

    def __matmul__(self, other):
        if isinstance(other, AffineExpr):
            if other.is_constant:
                other = other.const
            elif self.is_constant:
                return _left(self.const, other)
            else:
                raise NonAffineError("product of two variable expressions")
        M = np.atleast_2d(np.asarray(other, dtype=float))
        return AffineExpr(
            self.const @ M, {n: (v, np.einsum("pqk,qb->pbk", c, M)) for n, (v, c) in self.terms.items()}
        )

    def __rmatmul__(self, other):
        if isinstance(other, AffineExpr):  # pragma: no cover - handled by __matmul__
            return other.__matmul__(self)
        return _left(np.atleast_2d(np.asarray(other, dtype=float)), self)

    def kron(self, M) -> "AffineExpr":
        """For a 1x1 expression ``e``, return ``e * M``."""
        if self.shape != (1, 1):
            raise ModelError("kron is only defined for 1x1 expressions")
        M = np.atleast_2d(np.asarray(M, dtype=float))
        return AffineExpr(
            self.const[0, 0] * M,
            {n: (v, np.einsum("ab,k->abk", M, c[0, 0])) for n, (v, c) in self.terms.items()},
        )

    def symmetric_part(self) -> "AffineExpr":
        return (self + self.T) * 0.5

    # evaluation -----------------------------------------------------------

    def evaluate(self, values: Mapping[str, np.ndarray]) -> np.ndarray:
        out = self.const.copy()
        for name, (var, coeff) in self.terms.items():
            if name not in values:
                raise ModelError(f"no value for variable {name}")
            out = out + np.einsum("pqk,k->pq", coeff, var.pack(values[name]))
        return out

    def evaluate_packed(self, packed: Mapping[str, np.ndarray]) -> np.ndarray:
        out = self.const.copy()
        for name, (var, coeff) in self.terms.items():
            out = out + np.einsum("pqk,k->pq", coeff, packed[name])
        return out

    def asymmetry(self) -> float:
        diff = [np.max(np.abs(self.const - self.const.T), initial=0.0)]
        for _, coeff in self.terms.values():
            diff.append(np.max(np.abs(coeff - coeff.transpose(1, 0, 2)), initial=0.0))
        return float(max(diff))


def _left(M: np.ndarray, e: AffineExpr) -> AffineExpr:
    return AffineExpr(
        M @ e.const, {n: (v, np.einsum("ap,pqk->aqk", M, c)) for n, (v, c) in e.terms.items()}
    )


def lift(value) -> AffineExpr:
    if isinstance(value, AffineExpr):
        return value
    return AffineExpr.constant(value)


def bmat(rows: Sequence[Sequence]) -> AffineExpr:
    """Block matrix of expressions/arrays; ``None`` entries become zero blocks."""
    nr, nc = len(rows), len(rows[0])
    heights = [None] * nr
    widths = [None] * nc
    for i, row in enumerate(rows):
        if len(row) != nc:
            raise ModelError("ragged block rows")
        for j, blk in enumerate(row):
            if blk is None:
                continue
            h, w = lift(blk).shape
            if heights[i] not in (None, h) or widths[j] not in (None, w):
                raise ModelError(f"block ({i},{j}) has inconsistent shape {(h, w)}")
            heights[i], widths[j] = h, w
    if None in heights or None in widths:
        raise ModelError("cannot infer block sizes")
    H, W = sum(heights), sum(widths)
    const = np.zeros((H, W))
    terms: dict[str, tuple[MatrixVariable, np.ndarray]] = {}
    r0 = 0
    for i, row in enumerate(rows):
        c0 = 0
        for j, blk in enumerate(row):
            h, w = heights[i], widths[j]
            if blk is not None:
                e = lift(blk)
                const[r0 : r0 + h, c0 : c0 + w] = e.const
                for name, (var, coeff) in e.terms.items():
                    if name not in terms:
                        terms[name] = (var, np.zeros((H, W, var.size)))
                    terms[name][1][r0 : r0 + h, c0 : c0 + w, :] += coeff
            c0 += w
        r0 += h
    return AffineExpr(const, terms)


def block_diag(*blocks) -> AffineExpr:
    n = len(blocks)
    return bmat([[blocks[i] if i == j else _zeros_like(blocks[i], blocks[j]) for j in range(n)] for i in range(n)])


def _zeros_like(row_blk, col_blk) -> np.ndarray:
    return np.zeros((lift(row_blk).shape[0], lift(col_blk).shape[1]))


@dataclass
class LmiBlock:
    """A symmetric affine matrix constrained to a definiteness sense.

    ``margin`` is the strictness gap enforced for the strict senses.
    ``residual`` optionally names an equivalent raw form that residual
    checks evaluate instead of ``expr``.
    """

    expr: AffineExpr
    sense: str
    tag: tuple = ("global",)
    margin: float = 0.0
    residual: AffineExpr | None = None
    residual_sense: str | None = None

    def __post_init__(self):
        if self.sense not in SENSES:
            raise ModelError(f"unknown sense {self.sense!r}")
        r, c = self.expr.shape
        if r != c:
            raise ModelError(f"LMI block {self.tag} is not square")
        scale = max(1.0, float(np.max(np.abs(self.expr.const), initial=0.0)))
        if self.expr.asymmetry() > 1e-9 * scale:
            raise ModelError(f"LMI block {self.tag} is not symmetric")
        self.expr = self.expr.symmetric_part()

    @property
    def strict(self) -> bool:
        return SENSES[self.sense][1]

    @property
    def size(self) -> int:
        return self.expr.shape[0]

    def normalized(self) -> AffineExpr:
        """Expression ``F`` such that the block holds iff ``F >= margin * I``."""
        sign, _ = SENSES[self.sense]
        return self.expr * sign

    @property
    def required_margin(self) -> float:
        return self.margin if self.strict else 0.0

    def margin_at(self, values: Mapping[str, np.ndarray]) -> float:
        """Smallest eigenvalue of the sense-adjusted block (raw form if given)."""
        expr, sense = (
            (self.residual, self.residual_sense or self.sense)
            if self.residual is not None
            else (self.expr, self.sense)
        )
        sign, _ = SENSES[sense]
        M = sign * expr.evaluate(values)
        if M.size == 0:
            return np.inf
        return float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])


def collect_variables(blocks: Iterable[LmiBlock], extra: Iterable[AffineExpr] = ()) -> list[MatrixVariable]:
    seen: dict[str, MatrixVariable] = {}
    for e in [b.expr for b in blocks] + list(extra):
        for name, (var, _) in e.terms.items():
            if name in seen and seen[name] != var:
                raise ModelError(f"variable {name} declared with two shapes")
            seen.setdefault(name, var)
    return list(seen.values())


def dump_blocks(blocks: Sequence[LmiBlock]) -> dict:
    """Structured-text debug view of a block set."""
    out = []
    for b in blocks:
        out.append(
            {
                "tag": [str(t) for t in b.tag],
                "sense": b.sense,
                "size": b.size,
                "margin": b.margin,
                "constant": b.expr.const.tolist(),
                "terms": {
                    name: {
                        "shape": list(var.shape),
                        "kind": var.kind,
                        "coefficients": coeff.transpose(2, 0, 1).tolist(),
                    }
                    for name, (var, coeff) in sorted(b.expr.terms.items())
                },
            }
        )
    return {"blocks": out}
