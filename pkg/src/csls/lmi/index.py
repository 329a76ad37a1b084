"""Supply-rate (dissipativity index) manipulations."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from ..core import IndexBlock, PerformanceIndex, SystemFamily
from ..errors import ModelError
from .affine import AffineExpr, MatrixVariable, bmat, lift

PSD_TOL = 1e-9
RANK_TOL = 1e-9


@dataclass(frozen=True)
class Supply:
    """Index blocks that may depend affinely on decision variables."""

    Q: AffineExpr
    S: AffineExpr
    R: AffineExpr

    def __init__(self, Q, S, R):
        Q, R, S = lift(Q), lift(R), lift(S)
        if S.const.size == 0:
            S = AffineExpr.constant(np.zeros((Q.shape[0], R.shape[0])))
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "R", R)
        if self.S.shape != (self.Q.shape[0], self.R.shape[0]):
            raise ModelError(f"S has shape {self.S.shape}, expected {(self.Q.shape[0], self.R.shape[0])}")

    @classmethod
    def of(cls, blk) -> "Supply":
        if isinstance(blk, Supply):
            return blk
        if isinstance(blk, IndexBlock):
            return cls(blk.Q, blk.S, blk.R)
        return cls(*blk)

    @property
    def d_in(self) -> int:
        return self.Q.shape[0]

    @property
    def d_out(self) -> int:
        return self.R.shape[0]

    @property
    def matrix(self) -> AffineExpr:
        return bmat([[self.Q, self.S], [self.S.T, self.R]])

    @property
    def is_constant(self) -> bool:
        return self.Q.is_constant and self.S.is_constant and self.R.is_constant


def l2_supply(f: SystemFamily, t: MatrixVariable | float) -> dict[int, Supply]:
    """``(-t I, 0, I)`` per label, with ``t`` either a number or a 1x1 variable."""
    te = t.expr() if isinstance(t, MatrixVariable) else AffineExpr.constant([[float(t)]])
    return {
        l: Supply(-te.kron(np.eye(f[l].d_in)), np.zeros((f[l].d_in, f[l].d_out)), np.eye(f[l].d_out))
        for l in f
    }


@dataclass(frozen=True)
class Decomposition:
    U: np.ndarray
    Rt: np.ndarray

    @property
    def rank(self) -> int:
        return self.U.shape[0]


def decompose_R(p: PerformanceIndex | Mapping) -> dict[int, Decomposition]:
    """Factor ``R_l = U^T Rt^{-1} U`` with ``Rt`` positive definite (rank-revealing)."""
    out = {}
    for l, blk in p.items():
        R = _const(blk.R, "R")
        if R.size == 0:
            out[l] = Decomposition(np.zeros((0, 0)), np.zeros((0, 0)))
            continue
        lam, V = np.linalg.eigh(R)
        scale = max(1.0, float(np.max(np.abs(lam))))
        if lam[0] < -PSD_TOL * scale:
            raise ModelError(f"R not positive semidefinite at label {l} (eigenvalue {lam[0]:.3g})")
        keep = lam > RANK_TOL * scale
        out[l] = Decomposition(V[:, keep].T, np.diag(1.0 / lam[keep]))
    return out


@dataclass(frozen=True)
class InverseBlock:
    Qt: np.ndarray
    St: np.ndarray
    Rt: np.ndarray
    condition: float


def invert_index(p: PerformanceIndex | Mapping) -> dict[int, InverseBlock]:
    """Blocks of ``P_l^{-1}`` partitioned like ``P_l`` (input part first)."""
    out = {}
    for l, blk in p.items():
        P = np.block([[_const(blk.Q, "Q"), _const(blk.S, "S")], [_const(blk.S, "S").T, _const(blk.R, "R")]])
        cond = float(np.linalg.cond(P)) if P.size else 1.0
        if not np.isfinite(cond) or cond > 1e14:
            raise ModelError(f"index at label {l} is singular (condition number {cond:.3g})")
        Pi = np.linalg.solve(P, np.eye(P.shape[0]))
        Pi = 0.5 * (Pi + Pi.T)
        di = _const(blk.Q, "Q").shape[0]
        out[l] = InverseBlock(Pi[:di, :di], Pi[:di, di:], Pi[di:, di:], cond)
    return out


def _const(value, name: str) -> np.ndarray:
    if isinstance(value, AffineExpr):
        if not value.is_constant:
            raise ModelError(f"{name} must be numeric here")
        return value.const
    return np.asarray(value, dtype=float)
