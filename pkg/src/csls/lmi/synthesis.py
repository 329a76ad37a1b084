"""State-feedback synthesis LMIs (nominal and robust).

The controller is ``u = K_i x`` with ``K_i = Z_i G_i^{-1}`` (slack forms) or
``K_i = Z_i Xt_i^{-1}`` (schur forms).  With ``shared_gain`` the variables that
define the gain are shared by all nodes, which yields one constant gain.
"""

from __future__ import annotations

from ..core import ConstrainingGraph
from ..errors import ModelError
from .affine import LmiBlock
from .analysis import (
    _AugmentedView,
    _check_dims,
    _decompose,
    _edges,
    _label_view,
    _multipliers,
    _qt_constraints,
    _require_psd_R,
    _supply,
    dual_edge_expr,
    inverse_supplies,
    node_variables,
    strict_margin,
    sym_bmat,
)
from .index import Supply
from .lfr import MultiplierClass, augment_supply


def _synthesis_variables(g, f, form, shared_gain):
    n = f.state_dim
    du = f.for_edge(g.edges[0].tail, g.edges[0].label).Bu.shape[1]
    share_x = shared_gain and form == "schur"
    Xt = node_variables(g, n, "Xt", shared=share_x)
    Z = node_variables(g, n, "Z", "general", cols=du, shared=shared_gain)
    G = node_variables(g, n, "G", "general", shared=shared_gain) if form == "slack" else None
    return Xt, Z, G


def _require_control(g, f):
    for e in g.edges:
        if not f.for_edge(e.tail, e.label).has_control:
            raise ModelError(f"label {e.label} has no control channel")


def assemble_synthesis(
    g: ConstrainingGraph, f, p, form: str = "slack", shared_gain: bool = True
) -> list[LmiBlock]:
    """Primal-index synthesis conditions (schur or slack form)."""
    if form not in ("schur", "slack"):
        raise ModelError(f"unknown synthesis form {form!r}")
    _require_control(g, f)
    eps = strict_margin(f)
    sups = {l: _supply(p, l) for l in {e.label for e in g.edges}}
    for l, sup in sups.items():
        _require_psd_R(sup, l)
    decomp = _decompose(sups)
    Xt, Z, G = _synthesis_variables(g, f, form, shared_gain)
    blocks = []
    for i, j, l in _edges(g):
        s = f.for_edge(i, l)
        sup = sups[l]
        _check_dims(s, sup, l)
        U, Rt = decomp[l]
        Xi, Xj, Zi = Xt[i].expr(), Xt[j].expr(), Z[i].expr()
        V = Xi if G is None else G[i].expr()
        V11 = Xi if G is None else V + V.T - Xi
        W = s.C @ V + s.Du @ Zi
        S = sup.S
        expr = sym_bmat(
            [
                [Xj, s.A @ V + s.Bu @ Zi, s.B, None],
                [None, V11, -(W.T @ S.T), W.T @ U.T],
                [None, None, -sup.Q - S @ s.D - (S @ s.D).T, s.D.T @ U.T],
                [None, None, None, Rt],
            ]
        )
        blocks.append(LmiBlock(expr, "pos-def", (i, j, l), eps))
    return blocks


def assemble_dual_synthesis(
    g: ConstrainingGraph, f, p=None, form: str = "slack", shared_gain: bool = True, inverse=None
) -> list[LmiBlock]:
    """Inverse-index synthesis conditions; ``inverse`` may carry multiplier variables."""
    if form not in ("schur", "slack"):
        raise ModelError(f"unknown synthesis form {form!r}")
    _require_control(g, f)
    labels = sorted({e.label for e in g.edges})
    inv = dict(inverse) if inverse is not None else inverse_supplies(p, labels)
    inv = {l: Supply.of(inv[l]) for l in labels}
    eps = strict_margin(f)
    Xt, Z, G = _synthesis_variables(g, f, form, shared_gain)
    blocks = _qt_constraints(inv)
    for i, j, l in _edges(g):
        s = f.for_edge(i, l)
        Xi, Xj, Zi = Xt[i].expr(), Xt[j].expr(), Z[i].expr()
        V = Xi if G is None else G[i].expr()
        expr = dual_edge_expr(
            form, Xi, Xj, s, inv[l], None if G is None else V,
            AV=s.A @ V + s.Bu @ Zi, CV=s.C @ V + s.Du @ Zi,
        )
        blocks.append(LmiBlock(expr, "pos-def", (i, j, l), eps))
    return blocks


def assemble_robust_synthesis(
    g: ConstrainingGraph, lfr, p, mult: MultiplierClass | None = None, shared_gain: bool = True, form: str = "slack"
) -> list[LmiBlock]:
    """Robust synthesis at a fixed performance level: the dual conditions on the
    augmented data with an inverse-parameterized multiplier."""
    mult = mult or MultiplierClass(lfr.uncertainty, inverse=True)
    if not mult.inverse:
        mult = MultiplierClass(mult.uncertainty, inverse=True, shared=mult.shared)
    if mult.kind == "full-block-fixed" and mult.uncertainty.fixed is None:
        raise ModelError("multiplier class has no convex inverse description")
    labels = sorted({e.label for e in g.edges})
    msups, _ = _multipliers(_label_view(lfr, g), mult, g)
    pinv = inverse_supplies(p, labels)
    inv = {l: augment_supply(msups[l], pinv[l]) for l in labels}
    return assemble_dual_synthesis(g, _AugmentedView(lfr), form=form, shared_gain=shared_gain, inverse=inv)
