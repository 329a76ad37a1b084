"""Analysis LMIs: stability, dissipativity (primal and dual forms),
energy-to-peak gain, robust stability and robust performance.

Every assembler returns a list of :class:`LmiBlock`.  Edge blocks carry the
tag ``(i, j, l)``; per-node positivity blocks carry ``("node", i)``.
Families only need ``for_edge(tail, label)``, ``state_dim`` and
``data_norm()``, so closed loops keyed by (node, label) work unchanged.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

from ..core import ConstrainingGraph
from ..errors import ModelError
from .affine import AffineExpr, LmiBlock, MatrixVariable, bmat, lift
from .index import PSD_TOL, Supply, decompose_R, invert_index
from .lfr import MultiplierClass, augment_supply

PRIMAL_FORMS = ("primal", "schur", "slack")
DUAL_FORMS = ("primal", "schur", "slack")


def strict_margin(*families) -> float:
    """Strictness gap ``1e-7 (1 + max data norm)``."""
    return 1e-7 * (1.0 + max((f.data_norm() for f in families), default=0.0))


def node_variables(g: ConstrainingGraph, n: int, prefix: str, kind: str = "symmetric", cols: int | None = None, shared: bool = False):
    shape = (n, n) if cols is None else (cols, n)
    if shared:
        var = MatrixVariable(prefix, shape, kind)
        return {i: var for i in g.nodes}
    return {i: MatrixVariable(f"{prefix}[{i}]", shape, kind) for i in g.nodes}


def sym_bmat(upper) -> AffineExpr:
    """Symmetric block matrix from its upper triangle (``None`` = zero block)."""
    k = len(upper)
    rows = []
    for r in range(k):
        row = []
        for c in range(k):
            if c >= r:
                row.append(upper[r][c])
            else:
                blk = upper[c][r]
                row.append(None if blk is None else lift(blk).T)
        rows.append(row)
    return bmat(rows)


def _edges(g: ConstrainingGraph):
    return [(e.tail, e.head, e.label) for e in g.edges]


def _positivity(X: Mapping[int, MatrixVariable], eps: float, prefix: str = "node") -> list[LmiBlock]:
    seen, out = set(), []
    for i, var in X.items():
        if var.name in seen:
            continue
        seen.add(var.name)
        out.append(LmiBlock(var.expr(), "pos-def", (prefix, i), eps))
    return out


def _supply(p, l) -> Supply:
    if l not in p:
        raise ModelError(f"index block for label {l} missing")
    return Supply.of(p[l])


def _check_dims(s, sup: Supply, l) -> None:
    if sup.d_in != s.B.shape[1] or sup.d_out != s.C.shape[0]:
        raise ModelError(
            f"label {l}: index is {sup.d_in}/{sup.d_out} but system has {s.B.shape[1]} inputs/{s.C.shape[0]} outputs"
        )


def _require_psd_R(sup: Supply, l) -> None:
    if sup.R.is_constant and sup.R.shape[0]:
        lam = np.linalg.eigvalsh(sup.R.const)
        if lam[0] < -PSD_TOL * max(1.0, abs(lam[-1])):
            raise ModelError(f"R not positive semidefinite at label {l}")


# stability ----------------------------------------------------------------------


def assemble_stability(g: ConstrainingGraph, f, form: str = "schur") -> list[LmiBlock]:
    """Node-dependent Lyapunov inequalities ``A^T X_j A - X_i < 0``.

    ``schur`` emits ``[[X_i, A^T X_j], [X_j A, X_j]] > 0`` and keeps the raw
    form for residual checks; ``raw`` emits the raw form directly.
    """
    if form not in ("schur", "raw"):
        raise ModelError(f"unknown stability form {form!r}")
    eps = strict_margin(f)
    X = node_variables(g, f.state_dim, "X")
    blocks = _positivity(X, eps)
    for i, j, l in _edges(g):
        A = f.for_edge(i, l).A
        Xi, Xj = X[i].expr(), X[j].expr()
        raw = A.T @ Xj @ A - Xi
        if form == "schur":
            expr = sym_bmat([[Xi, A.T @ Xj], [None, Xj]])
            blocks.append(LmiBlock(expr, "pos-def", (i, j, l), eps, residual=raw, residual_sense="neg-def"))
        else:
            blocks.append(LmiBlock(raw, "neg-def", (i, j, l), eps))
    return blocks


# nominal dissipativity -------------------------------------------------------------


def primal_edge_expr(Xi: AffineExpr, Xj: AffineExpr, s, sup: Supply) -> AffineExpr:
    """``(.)^T diag(-X_i, X_j) [I 0; A B] + (.)^T P [0 I; C D]``."""
    n, d = s.A.shape[0], s.B.shape[1]
    top = np.hstack([s.A, s.B])
    bot = np.hstack([np.eye(n), np.zeros((n, d))])
    N = np.block([[np.zeros((d, n)), np.eye(d)], [s.C, s.D]])
    return top.T @ Xj @ top - bot.T @ Xi @ bot + N.T @ sup.matrix @ N


def assemble_dissipativity(
    g: ConstrainingGraph, f, p, form: str = "primal", shared_slack: bool = False
) -> list[LmiBlock]:
    """Dissipativity with index ``p`` plus stability, in one of three equivalent forms."""
    if form not in PRIMAL_FORMS:
        raise ModelError(f"unknown form {form!r}")
    eps = strict_margin(f)
    n = f.state_dim
    sups = {l: _supply(p, l) for l in {e.label for e in g.edges}}
    for l, sup in sups.items():
        _require_psd_R(sup, l)
    if form == "primal":
        X = node_variables(g, n, "X")
        blocks = _positivity(X, eps)
        for i, j, l in _edges(g):
            s = f.for_edge(i, l)
            _check_dims(s, sups[l], l)
            blocks.append(LmiBlock(primal_edge_expr(X[i].expr(), X[j].expr(), s, sups[l]), "neg-def", (i, j, l), eps))
        return blocks

    decomp = _decompose(sups)
    Xt = node_variables(g, n, "Xt")
    G = node_variables(g, n, "G", "general", shared=shared_slack) if form == "slack" else None
    blocks = []
    for i, j, l in _edges(g):
        s = f.for_edge(i, l)
        sup = sups[l]
        _check_dims(s, sup, l)
        U, Rt = decomp[l]
        Xi, Xj = Xt[i].expr(), Xt[j].expr()
        if form == "schur":
            V, V11 = Xi, Xi
        else:
            V = G[i].expr()
            V11 = V + V.T - Xi
        S = sup.S
        W = s.C @ V  # C X_i or C G_i
        expr = sym_bmat(
            [
                [Xj, s.A @ V, s.B, None],
                [None, V11, -(W.T @ S.T), W.T @ U.T],
                [None, None, -sup.Q - S @ s.D - (S @ s.D).T, s.D.T @ U.T],
                [None, None, None, Rt],
            ]
        )
        blocks.append(LmiBlock(expr, "pos-def", (i, j, l), eps))
    return blocks


def _decompose(sups: Mapping[int, Supply]):
    out = {}
    for l, sup in sups.items():
        if not sup.R.is_constant:
            raise ModelError(f"R must be numeric at label {l} for this form")
        dec = decompose_R({l: sup})[l]
        out[l] = (dec.U, dec.Rt)
    return out


# dual forms ---------------------------------------------------------------------


def inverse_supplies(p, labels) -> dict[int, Supply]:
    inv = invert_index({l: Supply.of(p[l]) for l in labels})
    return {l: Supply(b.Qt, b.St, b.Rt) for l, b in inv.items()}


def _qt_constraints(inv: Mapping[int, Supply]) -> list[LmiBlock]:
    """``Qt_l <= 0``: a constraint when variable, a check when constant."""
    out = []
    for l, sup in sorted(inv.items()):
        if sup.Q.shape[0] == 0:
            continue
        if sup.Q.is_constant:
            lam = np.linalg.eigvalsh(sup.Q.const)
            if lam[-1] > PSD_TOL * max(1.0, abs(lam[0])):
                raise ModelError(f"inverse index violates Qt <= 0 at label {l}")
        else:
            out.append(LmiBlock(sup.Q, "neg-semidef", ("inverse-index", l)))
    return out


def dual_edge_expr(form: str, Xi: AffineExpr, Xj: AffineExpr, s, inv: Supply, G: AffineExpr | None = None,
                   AV: AffineExpr | None = None, CV: AffineExpr | None = None) -> AffineExpr:
    """Edge block of the dual conditions.

    ``AV``/``CV`` override ``A V``/``C V`` (``V`` = X_i or G_i) for synthesis,
    where they become ``A V + Bu Z`` and ``C V + Du Z``.
    """
    Qt, St, Rt = inv.Q, inv.S, inv.R
    B, D = s.B, s.D
    if form == "primal":
        n, do = s.A.shape[0], s.C.shape[0]
        L = np.block([[np.eye(n), np.zeros((n, do))], [s.A.T, s.C.T]])
        top = L.T @ bmat([[Xj, np.zeros((n, n))], [np.zeros((n, n)), -Xi]]) @ L
        Vm = np.block([[np.zeros((do, n)), np.eye(do)], [B.T, D.T]])
        Pd = bmat([[Rt, -St.T], [-St, Qt]])
        return top + Vm.T @ Pd @ Vm
    V = Xi if form == "schur" else G
    V11 = Xi if form == "schur" else G + G.T - Xi
    AV = s.A @ V if AV is None else AV
    CV = s.C @ V if CV is None else CV
    return sym_bmat(
        [
            [V11, AV.T, CV.T],
            [None, Xj + B @ Qt @ B.T, -(B @ St) + B @ Qt @ D.T],
            [None, None, Rt - D @ St - (D @ St).T + D @ Qt @ D.T],
        ]
    )


def assemble_dual(
    g: ConstrainingGraph, f, p=None, form: str = "slack", shared_slack: bool = False, inverse=None
) -> list[LmiBlock]:
    """Dual (inverse-index) conditions; ``inverse`` may carry variable blocks."""
    if form not in DUAL_FORMS:
        raise ModelError(f"unknown form {form!r}")
    labels = sorted({e.label for e in g.edges})
    inv = dict(inverse) if inverse is not None else inverse_supplies(p, labels)
    inv = {l: Supply.of(inv[l]) for l in labels}
    eps = strict_margin(f)
    n = f.state_dim
    Xt = node_variables(g, n, "Xt")
    G = node_variables(g, n, "G", "general", shared=shared_slack) if form == "slack" else None
    blocks = _positivity(Xt, eps) if form == "primal" else []
    blocks += _qt_constraints(inv)
    for i, j, l in _edges(g):
        s = f.for_edge(i, l)
        sup = inv[l]
        if sup.d_in != s.B.shape[1] or sup.d_out != s.C.shape[0]:
            raise ModelError(f"label {l}: inverse index does not match the system dimensions")
        expr = dual_edge_expr(form, Xt[i].expr(), Xt[j].expr(), s, sup, None if G is None else G[i].expr())
        blocks.append(LmiBlock(expr, "pos-def", (i, j, l), eps))
    return blocks


# energy-to-peak -------------------------------------------------------------------


def assemble_energy_to_peak(g: ConstrainingGraph, f, gamma: float, form: str = "basic", shared_slack: bool = False) -> list[LmiBlock]:
    if form not in ("basic", "slack"):
        raise ModelError(f"unknown form {form!r}")
    if not gamma > 0:
        raise ModelError("gamma must be positive")
    eps = strict_margin(f)
    n = f.state_dim
    Xt = node_variables(g, n, "Xt")
    G = node_variables(g, n, "G", "general", shared=shared_slack) if form == "slack" else None
    blocks = []
    for i, j, l in _edges(g):
        s = f.for_edge(i, l)
        if np.any(s.D != 0):
            raise ModelError(f"energy-to-peak analysis needs zero feedthrough (label {l})")
        Xi, Xj = Xt[i].expr(), Xt[j].expr()
        V = Xi if G is None else G[i].expr()
        V11 = Xi if G is None else V + V.T - Xi
        di, do = s.B.shape[1], s.C.shape[0]
        first = sym_bmat([[Xj, s.A @ V, s.B], [None, V11, None], [None, None, gamma * np.eye(di)]])
        second = sym_bmat([[V11, (s.C @ V).T], [None, gamma * np.eye(do)]])
        blocks.append(LmiBlock(first, "pos-def", (i, j, l), eps))
        blocks.append(LmiBlock(second, "pos-def", (i, j, l, "output"), eps))
    return blocks


# robust analysis ---------------------------------------------------------------


def _multipliers(lfr, mult: MultiplierClass, g: ConstrainingGraph):
    out, blocks = {}, []
    for l in sorted({e.label for e in g.edges}):
        s = lfr[l]
        inst = mult.instantiate(l, s.q, s.p)
        out[l] = inst.supply
        names = {v.name for b in blocks for v in b.expr.variables}
        blocks += [b for b in inst.constraints if not {v.name for v in b.expr.variables} <= names]
    return out, blocks


def assemble_robust_stability(g: ConstrainingGraph, lfr, mult: MultiplierClass | None = None) -> list[LmiBlock]:
    mult = mult or MultiplierClass(lfr.uncertainty)
    if mult.inverse:
        raise ModelError("robust stability uses the primal multiplier parameterization")
    eps = strict_margin(lfr)
    X = node_variables(g, lfr.state_dim, "X")
    sups, blocks = _multipliers(_label_view(lfr, g), mult, g)
    blocks = _positivity(X, eps) + blocks
    for i, j, l in _edges(g):
        s = lfr.for_edge(i, l).uncertainty_channel()
        expr = primal_edge_expr(X[i].expr(), X[j].expr(), s, sups[l])
        blocks.append(LmiBlock(expr, "neg-def", (i, j, l), eps))
    return blocks


def assemble_robust_performance(
    g: ConstrainingGraph, lfr, p, mult: MultiplierClass | None = None, form: str = "primal", shared_slack: bool = False
) -> list[LmiBlock]:
    """Robust dissipativity with index ``p`` via the augmented index.

    ``primal`` is affine in ``X_i``, the multiplier and any variable in ``p``;
    ``dual-slack`` needs a numeric ``p`` (fixed gamma) and inverse multipliers.
    """
    mult = mult or MultiplierClass(lfr.uncertainty)
    eps = strict_margin(lfr)
    n = lfr.state_dim
    labels = sorted({e.label for e in g.edges})
    view = _label_view(lfr, g)
    if form == "primal":
        if mult.inverse:
            raise ModelError("primal robust performance uses the primal multiplier parameterization")
        msups, blocks = _multipliers(view, mult, g)
        X = node_variables(g, n, "X")
        blocks = _positivity(X, eps) + blocks
        for i, j, l in _edges(g):
            s = lfr.for_edge(i, l)
            sup = augment_supply(msups[l], _supply(p, l))
            aug = s.augmented()
            _check_dims(aug, sup, l)
            blocks.append(LmiBlock(primal_edge_expr(X[i].expr(), X[j].expr(), aug, sup), "neg-def", (i, j, l), eps))
        return blocks
    if form != "dual-slack":
        raise ModelError(f"unknown robust form {form!r}")
    if not mult.inverse:
        mult = MultiplierClass(mult.uncertainty, inverse=True, shared=mult.shared)
    msups, _ = _multipliers(view, mult, g)
    pinv = inverse_supplies(p, labels)
    inv = {l: augment_supply(msups[l], pinv[l]) for l in labels}
    return assemble_dual(g, _AugmentedView(lfr), form="slack", shared_slack=shared_slack, inverse=inv)


class _AugmentedView:
    """Presents an LFR family as its augmented (w_u, w_p) -> (z_u, z_p) system family."""

    def __init__(self, lfr):
        self._lfr = lfr
        self.state_dim = lfr.state_dim

    def for_edge(self, tail, label):
        return self._lfr.for_edge(tail, label).augmented()

    def data_norm(self):
        return self._lfr.data_norm()


class _label_view:
    """Label lookup for families keyed by (node, label)."""

    def __init__(self, lfr, g):
        self._lfr, self._g = lfr, g

    def __getitem__(self, l):
        for e in self._g.edges:
            if e.label == l:
                return self._lfr.for_edge(e.tail, l)
        raise KeyError(l)

    def for_edge(self, tail, label):
        return self._lfr.for_edge(tail, label)
