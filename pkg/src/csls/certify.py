"""Controller recovery, closed loops, residual checks and closed-loop re-analysis."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .core import ConstrainingGraph, StateSpace, as_matrix
from .errors import InfeasibleError, ModelError, RecoveryError, SolverError
from .lmi.affine import LmiBlock, MatrixVariable, collect_variables
from .lmi.analysis import (
    assemble_dissipativity,
    assemble_dual,
    assemble_energy_to_peak,
    assemble_robust_performance,
)
from .lmi.index import Supply
from .lmi.lfr import LfrFamily, LfrSystem, MultiplierClass
from .sdp.bisection import DEFAULT_BRACKET, DEFAULT_TOL, BisectionTrace, bisect_gamma, minimize_gamma

log = logging.getLogger(__name__)

COND_LIMIT = 1e12
REPORT_DIGITS = 12


@dataclass
class Certificate:
    """Solved decision variables keyed by variable name (``X[1]``, ``G``, ``b`` ...)."""

    values: dict[str, np.ndarray]
    form: str = ""
    gamma: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = {k: as_matrix(v, k) for k, v in self.values.items()}

    def node_matrix(self, prefix: str, node: int) -> np.ndarray | None:
        """Per-node value ``prefix[node]``, falling back to a shared ``prefix``."""
        return self.values.get(f"{prefix}[{node}]", self.values.get(prefix))

    @classmethod
    def from_trace(cls, trace: BisectionTrace, form: str, meta: Mapping | None = None) -> "Certificate":
        values = {k: v for k, v in trace.result.values.items() if not k.startswith("__")}
        return cls(values, form, trace.gamma, dict(meta or {}))


@dataclass
class Controller:
    """State feedback ``u = K_i x``; a shared controller has a single gain under key 0."""

    gains: dict[int, np.ndarray]
    shared: bool = False
    strategy: str | None = None

    def __post_init__(self):
        self.gains = {int(i): as_matrix(K, f"K[{i}]") for i, K in self.gains.items()}
        if self.shared and len(self.gains) != 1:
            raise ModelError("a shared controller has exactly one gain")

    def gain(self, node: int) -> np.ndarray:
        if self.shared:
            return next(iter(self.gains.values()))
        if node not in self.gains:
            raise ModelError(f"no gain for node {node}")
        return self.gains[node]

    def rounded(self) -> dict[int, list]:
        """Gains at report precision."""
        return {i: [[float(f"{v:.{REPORT_DIGITS}g}") for v in row] for row in K] for i, K in self.gains.items()}


# recovery --------------------------------------------------------------------------


def recover_controller(cert: Certificate, nodes=None, strategy: str | None = None) -> Controller:
    """``K_i = Z_i V_i^{-1}`` with ``V_i = G_i`` (slack forms) or ``Xt_i`` (schur forms)."""
    vals = cert.values
    prefix = "G" if any(k == "G" or k.startswith("G[") for k in vals) else "Xt"
    if "Z" in vals and prefix in vals:
        pairs = {0: (vals["Z"], vals[prefix])}
        shared = True
    else:
        if nodes is None:
            nodes = sorted(int(k[2:-1]) for k in vals if k.startswith("Z["))
        if not nodes:
            raise ModelError("certificate carries no Z variables")
        pairs = {}
        for i in nodes:
            Z, V = cert.node_matrix("Z", i), cert.node_matrix(prefix, i)
            if Z is None or V is None:
                raise ModelError(f"certificate lacks Z or {prefix} for node {i}")
            pairs[i] = (Z, V)
        shared = False
    gains = {}
    for i, (Z, V) in pairs.items():
        cond = np.linalg.cond(V)
        log.info("controller recovery at node %s: cond(%s) = %.3g", i, prefix, cond)
        if not np.isfinite(cond) or cond >= COND_LIMIT:
            raise RecoveryError(f"controller recovery ill-conditioned at node {i}")
        # K V = Z  <=>  V^T K^T = Z^T
        gains[i] = np.linalg.solve(V.T, Z.T).T
    return Controller(gains, shared, strategy)


# closed loops ----------------------------------------------------------------------


class ClosedLoopFamily(Mapping):
    """Closed-loop systems keyed by (node, label).

    As a mapping it is indexed by label and returns a representative system
    for that label (dimensions do not depend on the node); the assemblers
    use :meth:`for_edge` for the node-specific data.  Members are
    :class:`StateSpace` or, for uncertain plants, :class:`LfrSystem`.
    """

    def __init__(self, systems: Mapping[tuple[int, int], StateSpace | LfrSystem], uncertainty=None):
        self.systems = dict(sorted(systems.items()))
        if not self.systems:
            raise ModelError("empty closed loop")
        dims = {s.n for s in self.systems.values()}
        if len(dims) > 1:
            raise ModelError(f"state dimensions differ: {sorted(dims)}")
        self.state_dim = dims.pop()
        self.uncertainty = uncertainty
        self._rep = {}
        for (_, l), s in self.systems.items():
            self._rep.setdefault(l, s)

    def __getitem__(self, label):
        return self._rep[label]

    def __iter__(self):
        return iter(sorted(self._rep))

    def __len__(self):
        return len(self._rep)

    def __repr__(self):
        return f"ClosedLoopFamily(pairs={list(self.systems)})"

    def for_edge(self, tail: int, label: int):
        try:
            return self.systems[(tail, label)]
        except KeyError:
            raise ModelError(f"closed loop has no system for node {tail}, label {label}") from None

    @property
    def is_lfr(self) -> bool:
        return isinstance(next(iter(self.systems.values())), LfrSystem)

    def data_norm(self) -> float:
        if self.is_lfr:
            return max(s.data_norm() for s in self.systems.values())
        mats = [m for s in self.systems.values() for m in (s.A, s.B, s.C, s.D) if m.size]
        return max((float(np.linalg.norm(m, 2)) for m in mats), default=0.0)

    def _map(self, fn) -> "ClosedLoopFamily":
        return ClosedLoopFamily({k: fn(s) for k, s in self.systems.items()})

    def nominal(self) -> "ClosedLoopFamily":
        return self._map(LfrSystem.nominal) if self.is_lfr else self

    def at(self, delta: float) -> "ClosedLoopFamily":
        if not self.is_lfr:
            raise ModelError("fixed-delta evaluation needs an uncertain closed loop")
        return self._map(lambda s: s.evaluate(delta * np.eye(s.q)))


def close_loop(f, ctrl: Controller, g: ConstrainingGraph) -> ClosedLoopFamily:
    """Closed loop ``A_{i,l} = A_l + Bu_l K_i``, ``C_{i,l} = C_l + Du_l K_i`` on every (tail, label)."""
    out = {}
    for i, l in g.tail_labels():
        out[(i, l)] = f.for_edge(i, l).with_gain(ctrl.gain(i))
    return ClosedLoopFamily(out, getattr(f, "uncertainty", None))


# residual checks ------------------------------------------------------------------


@dataclass
class BlockResidual:
    tag: tuple
    sense: str
    eigenvalue: float
    required: float
    passed: bool

    @property
    def margin(self) -> float:
        """Signed distance to the strictness requirement."""
        return self.eigenvalue - self.required


@dataclass
class ResidualReport:
    blocks: list[BlockResidual]

    @property
    def passed(self) -> bool:
        return all(b.passed for b in self.blocks)

    @property
    def failures(self) -> list[BlockResidual]:
        return [b for b in self.blocks if not b.passed]

    @property
    def worst_margin(self) -> float:
        return min((b.margin for b in self.blocks), default=math.inf)

    def as_rows(self) -> list[dict]:
        return [
            {"tag": "/".join(map(str, b.tag)), "sense": b.sense, "eigenvalue": b.eigenvalue,
             "margin": b.margin, "pass": b.passed}
            for b in self.blocks
        ]


def check_residuals(cert: Certificate | Mapping, blocks: list[LmiBlock]) -> ResidualReport:
    """Re-evaluate every block at the certificate values.

    Strict blocks pass iff the sense-adjusted minimum eigenvalue is at least
    half the strictness margin; non-strict blocks tolerate ``-1e-9`` relative.
    """
    values = cert.values if isinstance(cert, Certificate) else {k: as_matrix(v, k) for k, v in cert.items()}
    needed = {v.name: v.shape for v in collect_variables(blocks)}
    missing = sorted(set(needed) - set(values))
    if missing:
        raise ModelError(f"certificate does not match the blocks: missing {', '.join(missing)}")
    for name, shape in needed.items():
        if values[name].shape != shape:
            raise ModelError(f"certificate variable {name} has shape {values[name].shape}, expected {shape}")
    rows = []
    for b in blocks:
        lam = b.margin_at(values)
        if b.strict:
            ok = lam >= 0.5 * b.margin
            req = b.margin
        else:
            scale = max(1.0, float(np.max(np.abs(b.expr.evaluate(values)), initial=0.0)))
            ok = lam >= -1e-9 * scale
            req = 0.0
        rows.append(BlockResidual(b.tag, b.residual_sense or b.sense, lam, req, bool(ok)))
    return ResidualReport(rows)


# closed-loop analysis -----------------------------------------------------------


def _perf_dims(s) -> tuple[int, int]:
    if isinstance(s, LfrSystem):
        return s.B_wp.shape[1], s.C_zp.shape[0]
    return s.B.shape[1], s.C.shape[0]


def l2_perf(fam, t) -> dict[int, Supply]:
    """``(-t I, 0, I)`` on the performance channel of every label; ``t`` numeric or a variable."""
    out = {}
    for l in fam:
        di, do = _perf_dims(fam[l])
        tq = t.expr().kron(np.eye(di)) if isinstance(t, MatrixVariable) else float(t) * np.eye(di)
        out[l] = Supply(-tq, np.zeros((di, do)), np.eye(do))
    return out


def l2_perf_gamma(fam, gamma: float) -> dict[int, Supply]:
    return l2_perf(fam, gamma**2)


CRITERIA = ("l2", "quadratic", "energy-to-peak")
NOMINAL_FORMS = ("primal", "schur", "slack", "dual-primal", "dual-schur", "dual-slack")
ROBUST_FORMS = ("primal", "dual-slack")


@dataclass(frozen=True)
class Recipe:
    """Everything needed to rebuild the blocks a certificate was solved for."""

    criterion: str = "l2"
    mode: str = "nominal"
    delta: float | None = None
    form: str | None = None
    shared_slack: bool = False

    def __post_init__(self):
        if self.criterion not in CRITERIA:
            raise ModelError(f"unknown criterion {self.criterion!r}")
        if self.mode not in ("nominal", "robust", "fixed-delta"):
            raise ModelError(f"unknown mode {self.mode!r}")
        if self.mode == "fixed-delta" and self.delta is None:
            raise ModelError("fixed-delta mode needs a delta value")
        if self.criterion == "energy-to-peak":
            if self.mode == "robust":
                raise ModelError("energy-to-peak analysis is nominal or fixed-delta only")
            allowed = ("basic", "slack")
        else:
            allowed = ROBUST_FORMS if self.mode == "robust" else NOMINAL_FORMS
        if self.resolved_form not in allowed:
            raise ModelError(f"form {self.resolved_form!r} is not available here; choose from {allowed}")

    @property
    def resolved_form(self) -> str:
        if self.form:
            return self.form
        if self.criterion == "energy-to-peak":
            return "slack" if self.shared_slack else "basic"
        return "dual-slack" if self.shared_slack else "primal"

    @property
    def gamma_affine(self) -> bool:
        """Whether ``t = gamma^2`` enters the blocks affinely (direct minimization)."""
        return self.criterion == "l2" and self.resolved_form in ("primal", "schur", "slack")

    def as_dict(self) -> dict:
        return {"criterion": self.criterion, "mode": self.mode, "delta": self.delta,
                "form": self.resolved_form, "shared_slack": self.shared_slack}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Recipe":
        return cls(d.get("criterion", "l2"), d.get("mode", "nominal"), d.get("delta"),
                   d.get("form"), bool(d.get("shared_slack", False)))


def _is_uncertain(fam) -> bool:
    return isinstance(fam, LfrFamily) or getattr(fam, "is_lfr", False)


def recipe_family(clf, recipe: Recipe):
    """The family the recipe analyzes: ``clf`` itself, its nominal part or a fixed-delta slice."""
    if recipe.mode == "fixed-delta":
        return clf.at(recipe.delta)
    if recipe.mode == "robust":
        if not _is_uncertain(clf):
            raise ModelError("robust analysis needs an uncertain closed loop")
        return clf
    return clf.nominal() if _is_uncertain(clf) else clf


def analysis_blocks(fam, g: ConstrainingGraph, recipe: Recipe, gamma=None, index=None,
                    mult: MultiplierClass | None = None) -> list[LmiBlock]:
    """Blocks for ``recipe`` on an already sliced family.

    For the l2 criterion ``gamma`` is a number, or a 1x1 variable ``t``
    standing for ``gamma^2`` when the form allows it.
    """
    form = recipe.resolved_form
    if recipe.criterion == "energy-to-peak":
        return assemble_energy_to_peak(g, fam, float(gamma), form, shared_slack=recipe.shared_slack)
    if recipe.criterion == "quadratic":
        if index is None:
            raise ModelError("quadratic criterion needs an index")
        p = index
    elif isinstance(gamma, MatrixVariable):
        p = l2_perf(fam, gamma)
    else:
        p = l2_perf_gamma(fam, float(gamma))
    if recipe.mode == "robust":
        mult = mult or MultiplierClass(fam.uncertainty)
        return assemble_robust_performance(g, fam, p, mult, form, recipe.shared_slack)
    if form.startswith("dual-"):
        return assemble_dual(g, fam, p, form[5:], shared_slack=recipe.shared_slack)
    return assemble_dissipativity(g, fam, p, form, shared_slack=recipe.shared_slack)


def analyze_closed_loop(
    clf,
    g: ConstrainingGraph,
    criterion: str = "l2",
    mode: str = "nominal",
    delta: float | None = None,
    shared_slack: bool = False,
    index=None,
    mult: MultiplierClass | None = None,
    bracket=DEFAULT_BRACKET,
    tol: float = DEFAULT_TOL,
    solver: str | None = None,
    form: str | None = None,
) -> BisectionTrace:
    """Certified performance of a closed loop with node-dependent certificates.

    ``mode`` is ``nominal``, ``robust`` or ``fixed-delta`` (with ``delta``).
    ``shared_slack`` restricts the slack variable to one ``G`` for comparison.
    For the ``quadratic`` criterion the trace records feasibility only
    (``gamma`` is ``None``); infeasibility raises :class:`InfeasibleError`.
    """
    recipe = Recipe(criterion, mode, delta, form, shared_slack)
    fam = recipe_family(clf, recipe)
    if recipe.mode == "robust":
        mult = mult or MultiplierClass(fam.uncertainty)

    if criterion == "quadratic":
        from .sdp import lower, solve

        blocks = analysis_blocks(fam, g, recipe, index=index, mult=mult)
        res = solve(lower(blocks), solver=solver)
        trace = BisectionTrace(method="feasibility")
        trace.record(math.nan, res)
        if not res.ok:
            raise (InfeasibleError if res.status == "infeasible" else SolverError)(
                f"quadratic performance not certified: {res.message or res.status}"
            )
        trace.result, trace.blocks = res, blocks
        return trace

    if recipe.gamma_affine:
        t = MatrixVariable("t", (1, 1))
        trace = minimize_gamma(analysis_blocks(fam, g, recipe, t, mult=mult), t, solver)
    else:
        trace = bisect_gamma(lambda gm: analysis_blocks(fam, g, recipe, gm, mult=mult), bracket, tol, solver)
    trace.method = f"{trace.method}/{recipe.resolved_form}" + ("/shared-G" if shared_slack else "")
    return trace
