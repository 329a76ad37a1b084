"""Linear fractional representations and uncertainty multipliers.

An LFR system is driven by the performance input ``w_p``, the uncertainty
output ``w_u = Delta z_u`` and optionally a control input ``u``::

    x+  = A x    + B_wu w_u    + B_wp w_p    + B_u u
    z_u = C_zu x + D_zu_wu w_u + D_zu_wp w_p + D_zu_u u
    z_p = C_zp x + D_zp_wu w_u + D_zp_wp w_p + D_zp_u u
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator, Mapping

import numpy as np

from ..core import StateSpace, SystemFamily, as_matrix
from ..errors import ModelError
from ..whrt import BasePlant, lift_hold, lift_zero
from .affine import AffineExpr, LmiBlock, MatrixVariable, block_diag, lift
from .index import Supply

MULTIPLIER_KINDS = ("scalar-norm-bounded", "diagonal-repeated-scalar", "full-block-fixed")

_FIELDS = ("A", "B_wu", "B_wp", "C_zu", "C_zp", "D_zu_wu", "D_zu_wp", "D_zp_wu", "D_zp_wp")
_CONTROL = ("B_u", "D_zu_u", "D_zp_u")


@dataclass(frozen=True)
class LfrSystem:
    A: np.ndarray
    B_wu: np.ndarray
    B_wp: np.ndarray
    C_zu: np.ndarray
    C_zp: np.ndarray
    D_zu_wu: np.ndarray
    D_zu_wp: np.ndarray
    D_zp_wu: np.ndarray
    D_zp_wp: np.ndarray
    B_u: np.ndarray | None = None
    D_zu_u: np.ndarray | None = None
    D_zp_u: np.ndarray | None = None

    def __post_init__(self):
        for name in _FIELDS + _CONTROL:
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, as_matrix(val, name))
        n = self.A.shape[0]
        q, dw = self._cols(self.B_wu, n), self._cols(self.B_wp, n)
        p, dz = self._rows(self.C_zu, n), self._rows(self.C_zp, n)
        object.__setattr__(self, "B_wu", self._fit(self.B_wu, (n, q), "B_wu"))
        object.__setattr__(self, "B_wp", self._fit(self.B_wp, (n, dw), "B_wp"))
        object.__setattr__(self, "C_zu", self._fit(self.C_zu, (p, n), "C_zu"))
        object.__setattr__(self, "C_zp", self._fit(self.C_zp, (dz, n), "C_zp"))
        for name, shape in (("D_zu_wu", (p, q)), ("D_zu_wp", (p, dw)), ("D_zp_wu", (dz, q)), ("D_zp_wp", (dz, dw))):
            object.__setattr__(self, name, self._fit(getattr(self, name), shape, name))
        ctrl = [getattr(self, k) is None for k in _CONTROL]
        if any(ctrl) and not all(ctrl):
            raise ModelError("control channel needs B_u, D_zu_u and D_zp_u")
        if self.B_u is not None:
            du = self.B_u.shape[1]
            object.__setattr__(self, "B_u", self._fit(self.B_u, (n, du), "B_u"))
            object.__setattr__(self, "D_zu_u", self._fit(self.D_zu_u, (p, du), "D_zu_u"))
            object.__setattr__(self, "D_zp_u", self._fit(self.D_zp_u, (dz, du), "D_zp_u"))

    @staticmethod
    def _cols(M, n):
        return M.shape[1] if M.size or M.shape[0] == n else 0

    @staticmethod
    def _rows(M, n):
        return M.shape[0] if M.size or M.shape[1] == n else 0

    @staticmethod
    def _fit(M, shape, name):
        if M.shape == shape:
            return M
        if M.size == 0 and 0 in shape:
            return np.zeros(shape)
        raise ModelError(f"{name} has shape {M.shape}, expected {shape}")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def q(self) -> int:
        """Uncertainty output (w_u) dimension."""
        return self.B_wu.shape[1]

    @property
    def p(self) -> int:
        """Uncertainty input (z_u) dimension."""
        return self.C_zu.shape[0]

    @property
    def has_control(self) -> bool:
        return self.B_u is not None

    def matrices(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in _FIELDS + _CONTROL if getattr(self, k) is not None}

    def nominal(self) -> StateSpace:
        """The system with ``Delta = 0``."""
        return self.evaluate(np.zeros((self.q, self.p)))

    def evaluate(self, Delta) -> StateSpace:
        """Close the uncertainty loop ``w_u = Delta z_u``."""
        Delta = np.atleast_2d(np.asarray(Delta, dtype=float)).reshape(self.q, self.p)
        lhs = np.eye(self.q) - Delta @ self.D_zu_wu
        if self.q and abs(np.linalg.det(lhs)) < 1e-12:
            raise ModelError("uncertainty interconnection is not well-posed")
        M = np.linalg.solve(lhs, Delta) if self.q else np.zeros((0, self.p))
        A = self.A + self.B_wu @ M @ self.C_zu
        B = self.B_wp + self.B_wu @ M @ self.D_zu_wp
        C = self.C_zp + self.D_zp_wu @ M @ self.C_zu
        D = self.D_zp_wp + self.D_zp_wu @ M @ self.D_zu_wp
        if not self.has_control:
            return StateSpace(A, B, C, D)
        Bu = self.B_u + self.B_wu @ M @ self.D_zu_u
        Du = self.D_zp_u + self.D_zp_wu @ M @ self.D_zu_u
        return StateSpace(A, B, C, D, Bu, Du)

    def augmented(self) -> StateSpace:
        """Stacked system with inputs ``(w_u, w_p)`` and outputs ``(z_u, z_p)``."""
        B = np.hstack([self.B_wu, self.B_wp])
        C = np.vstack([self.C_zu, self.C_zp])
        D = np.block([[self.D_zu_wu, self.D_zu_wp], [self.D_zp_wu, self.D_zp_wp]])
        if not self.has_control:
            return StateSpace(A=self.A, B=B, C=C, D=D)
        return StateSpace(self.A, B, C, D, self.B_u, np.vstack([self.D_zu_u, self.D_zp_u]))

    def uncertainty_channel(self) -> StateSpace:
        """The system from ``w_u`` to ``z_u`` (performance channel removed)."""
        return StateSpace(self.A, self.B_wu, self.C_zu, self.D_zu_wu)

    def with_gain(self, K) -> "LfrSystem":
        if not self.has_control:
            raise ModelError("system has no control channel")
        K = as_matrix(K, "K")
        return LfrSystem(
            self.A + self.B_u @ K, self.B_wu, self.B_wp,
            self.C_zu + self.D_zu_u @ K, self.C_zp + self.D_zp_u @ K,
            self.D_zu_wu, self.D_zu_wp, self.D_zp_wu, self.D_zp_wp,
        )

    def without_control(self) -> "LfrSystem":
        return replace(self, B_u=None, D_zu_u=None, D_zp_u=None)

    def data_norm(self) -> float:
        return max((float(np.linalg.norm(m, 2)) for m in self.matrices().values() if m.size), default=0.0)

    @classmethod
    def from_state_space(cls, s: StateSpace) -> "LfrSystem":
        """Embed a certain system with an empty uncertainty channel."""
        n = s.n
        kw = {}
        if s.has_control:
            kw = dict(B_u=s.Bu, D_zu_u=np.zeros((0, s.d_u)), D_zp_u=s.Du)
        return cls(
            s.A, np.zeros((n, 0)), s.B, np.zeros((0, n)), s.C,
            np.zeros((0, 0)), np.zeros((0, s.d_in)), np.zeros((s.d_out, 0)), s.D, **kw,
        )


@dataclass(frozen=True)
class Uncertainty:
    """``Delta = I_k kron delta`` with a real scalar ``|delta| <= bound``,
    or a full block with ``||Delta|| <= bound``."""

    kind: str = "scalar-norm-bounded"
    bound: float = 1.0
    fixed: tuple | None = None

    def __post_init__(self):
        if self.kind not in MULTIPLIER_KINDS:
            raise ModelError(f"unknown multiplier kind {self.kind!r}")
        if not self.bound > 0:
            raise ModelError("uncertainty bound must be positive")


class LfrFamily(Mapping):
    """Label-indexed LFR systems sharing a state dimension and an uncertainty description."""

    def __init__(self, systems: Mapping[int, LfrSystem], uncertainty: Uncertainty | None = None):
        self._systems = {int(k): v for k, v in sorted(systems.items())}
        dims = {s.n for s in self._systems.values()}
        if len(dims) > 1:
            raise ModelError(f"state dimensions differ across labels: {sorted(dims)}")
        self.state_dim = dims.pop() if dims else 0
        self.uncertainty = uncertainty or Uncertainty()

    def __getitem__(self, key) -> LfrSystem:
        return self._systems[key]

    def __iter__(self) -> Iterator:
        return iter(self._systems)

    def __len__(self) -> int:
        return len(self._systems)

    def __repr__(self) -> str:
        return f"LfrFamily(labels={list(self)}, uncertainty={self.uncertainty})"

    def for_edge(self, tail: int, label: int) -> LfrSystem:
        return self._systems[label]

    def label_of(self, key) -> int:
        return key

    @property
    def has_control(self) -> bool:
        return all(s.has_control for s in self._systems.values())

    def data_norm(self) -> float:
        return max((s.data_norm() for s in self._systems.values()), default=0.0)

    def nominal(self) -> SystemFamily:
        return SystemFamily({l: s.nominal() for l, s in self._systems.items()})

    def at(self, delta: float) -> SystemFamily:
        """Certain family for a fixed scalar ``delta`` (``Delta = delta I``)."""
        out = {}
        for l, s in self._systems.items():
            if s.q != s.p:
                raise ModelError("fixed-delta evaluation needs square uncertainty channels")
            out[l] = s.evaluate(delta * np.eye(s.q))
        return SystemFamily(out)

    def without_uncertainty(self) -> "LfrFamily":
        return LfrFamily(
            {l: LfrSystem.from_state_space(s) for l, s in self.nominal().items()}, self.uncertainty
        )

    @classmethod
    def from_family(cls, f: SystemFamily, uncertainty: Uncertainty | None = None) -> "LfrFamily":
        return cls({l: LfrSystem.from_state_space(f[l]) for l in f}, uncertainty)


# uncertain base plants -----------------------------------------------------------


@dataclass(frozen=True)
class UncertainPlant:
    """Base plant plus the uncertainty channel of its LFR (per sampling step)."""

    plant: BasePlant
    B_wu: np.ndarray
    C_zu: np.ndarray
    D_zu_wu: np.ndarray
    D_zu_w: np.ndarray
    D_zu_u: np.ndarray
    D_z_wu: np.ndarray
    uncertainty: Uncertainty = field(default_factory=Uncertainty)

    def __post_init__(self):
        for name in ("B_wu", "C_zu", "D_zu_wu", "D_zu_w", "D_zu_u", "D_z_wu"):
            object.__setattr__(self, name, as_matrix(getattr(self, name), name))
        self.base_lfr()

    def base_lfr(self) -> LfrSystem:
        p = self.plant
        return LfrSystem(
            p.A, self.B_wu, p.B, self.C_zu, p.C, self.D_zu_wu, self.D_zu_w, self.D_z_wu, p.D,
            p.Bu, self.D_zu_u, p.Du,
        )

    def at(self, delta: float) -> BasePlant:
        s = self.base_lfr().evaluate(delta * np.eye(self.B_wu.shape[1]))
        return BasePlant(s.A, s.B, s.Bu, s.C, s.D, s.Du)

    def lift(self, l: int, strategy: str = "zero") -> LfrSystem:
        """Lifted LFR for label ``l``; all-zero uncertainty channels of single steps are trimmed."""
        p = self.plant
        q, pz = self.B_wu.shape[1], self.C_zu.shape[0]
        dw, dz = p.B.shape[1], p.C.shape[0]
        aug = BasePlant(
            p.A,
            np.hstack([self.B_wu, p.B]),
            p.Bu,
            np.vstack([self.C_zu, p.C]),
            np.block([[self.D_zu_wu, self.D_zu_w], [self.D_z_wu, p.D]]),
            np.vstack([self.D_zu_u, p.Du]),
        )
        s = (lift_hold if strategy == "hold" else lift_zero)(aug, l)
        wi, wo = q + dw, pz + dz
        in_u = [s0 * wi + j for s0 in range(l) for j in range(q)]
        in_p = [s0 * wi + q + j for s0 in range(l) for j in range(dw)]
        out_u = [s0 * wo + j for s0 in range(l) for j in range(pz)]
        out_p = [s0 * wo + pz + j for s0 in range(l) for j in range(dz)]
        # drop steps whose uncertainty input is identically zero
        keep_steps = []
        for s0 in range(l):
            rows = out_u[s0 * pz : (s0 + 1) * pz]
            row_data = np.hstack([s.C[rows], s.D[rows], s.Du[rows]])
            if pz and np.any(row_data != 0):
                keep_steps.append(s0)
        in_u = [in_u[s0 * q + j] for s0 in keep_steps for j in range(q)]
        out_u = [out_u[s0 * pz + j] for s0 in keep_steps for j in range(pz)]
        return LfrSystem(
            s.A, s.B[:, in_u], s.B[:, in_p], s.C[out_u], s.C[out_p],
            s.D[np.ix_(out_u, in_u)], s.D[np.ix_(out_u, in_p)],
            s.D[np.ix_(out_p, in_u)], s.D[np.ix_(out_p, in_p)],
            s.Bu, s.Du[out_u], s.Du[out_p],
        )

    def lift_family(self, num_labels: int, strategy: str = "zero") -> LfrFamily:
        return LfrFamily({l: self.lift(l, strategy) for l in range(1, num_labels + 1)}, self.uncertainty)


# multipliers ------------------------------------------------------------------


@dataclass
class MultiplierInstance:
    supply: Supply
    constraints: list[LmiBlock]
    variables: list[MatrixVariable]


@dataclass(frozen=True)
class MultiplierClass:
    """Convex set of multipliers separating the graph of the uncertainty.

    ``scalar-norm-bounded``: ``diag(-a I, a rho^2 I)``, ``a >= 0``;
    inverse form ``diag(-b I, b / rho^2 I)``, ``b = 1 / a``.
    ``diagonal-repeated-scalar``: ``diag(-A, rho^2 A)``, ``A >= 0`` symmetric,
    valid for ``Delta = delta I``; inverse form ``diag(-B, B / rho^2)``.
    ``full-block-fixed``: numeric ``(Q, S, R)`` supplied by the user.

    With ``shared`` one parameter serves every label (per channel count for
    the repeated-scalar kind); otherwise each label gets its own.
    """

    uncertainty: Uncertainty = field(default_factory=Uncertainty)
    inverse: bool = False
    shared: bool = True

    @property
    def kind(self) -> str:
        return self.uncertainty.kind

    def instantiate(self, label: int, q: int, p: int) -> MultiplierInstance:
        rho2 = self.uncertainty.bound ** 2
        if q == 0 and p == 0:
            z = np.zeros((0, 0))
            return MultiplierInstance(Supply(z, z, z), [], [])
        if self.kind == "full-block-fixed":
            if self.uncertainty.fixed is None:
                raise ModelError("full-block multiplier needs fixed numeric values")
            Q, S, R = (np.asarray(m, dtype=float) for m in self.uncertainty.fixed)
            if self.inverse:
                P = np.block([[Q, S], [S.T, R]])
                Pi = np.linalg.inv(P)
                Q, S, R = Pi[:q, :q], Pi[:q, q:], Pi[q:, q:]
            return MultiplierInstance(Supply(Q, S, R), [], [])
        if self.kind == "scalar-norm-bounded" or q == 1:
            name = ("b" if self.inverse else "a") + ("" if self.shared else f"[{label}]")
            var = MatrixVariable(name, (1, 1))
            a = var.expr()
            if self.inverse:
                Q, R = -a.kron(np.eye(q)), a.kron(np.eye(p) / rho2)
            else:
                Q, R = -a.kron(np.eye(q)), a.kron(rho2 * np.eye(p))
        else:
            if q != p:
                raise ModelError("repeated-scalar multiplier needs square uncertainty channels")
            name = ("B" if self.inverse else "A") + (f"{q}" if self.shared else f"{q}[{label}]")
            var = MatrixVariable(name, (q, q))
            a = var.expr()
            Q, R = -a, (a * (1.0 / rho2)) if self.inverse else (a * rho2)
        S = np.zeros((q, p))
        nonneg = [] if self.inverse else [LmiBlock(a, "pos-semidef", ("multiplier", label))]
        return MultiplierInstance(Supply(Q, S, R), nonneg, [var])


def augment_supply(mult: Supply, perf: Supply) -> Supply:
    """Index over stacked channels: input ``(w_u, w_p)``, output ``(z_u, z_p)``."""
    Q = block_diag(mult.Q, perf.Q)
    S = _diag2(mult.S, perf.S)
    R = block_diag(mult.R, perf.R)
    return Supply(Q, S, R)


def _diag2(a, b) -> AffineExpr:
    from .affine import bmat

    a, b = lift(a), lift(b)
    return bmat([[a, np.zeros((a.shape[0], b.shape[1]))], [np.zeros((b.shape[0], a.shape[1])), b]])


def augment_index(perf: Mapping[int, Supply], mult: MultiplierClass, lfr: LfrFamily) -> dict[int, Supply]:
    out = {}
    for l in perf:
        s = lfr[l]
        inst = mult.instantiate(l, s.q, s.p)
        ps = Supply.of(perf[l])
        if ps.d_in != s.B_wp.shape[1] or ps.d_out != s.C_zp.shape[0]:
            raise ModelError(f"index at label {l} does not match the performance channel")
        out[l] = augment_supply(inst.supply, ps)
    return out
