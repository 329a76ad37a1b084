"""End-to-end workflows over a model file: synthesize, analyze, validate, sweep.

Certificates record how they were produced in ``meta`` so that validation can
rebuild exactly the blocks they were solved for.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .certify import (
    Certificate,
    Controller,
    Recipe,
    ResidualReport,
    analysis_blocks,
    analyze_closed_loop,
    check_residuals,
    close_loop,
    l2_perf,
    l2_perf_gamma,
    recipe_family,
    recover_controller,
)
from .core import validate_pairing
from .errors import ModelError
from .lmi.affine import MatrixVariable
from .lmi.lfr import MultiplierClass
from .lmi.synthesis import assemble_dual_synthesis, assemble_robust_synthesis, assemble_synthesis
from .modelfile import Model, plant_from_dict
from .sdp.bisection import DEFAULT_BRACKET, DEFAULT_TOL, BisectionTrace, bisect_gamma, minimize_gamma
from .whrt import compile_graph, lift_family, lift_index, parse_constraint
from .sim import check_dissipation, empirical_l2_lb, empirical_peak_lb, random_walk, spectral_audit

SOUNDNESS_SLACK = 1e-6
SYNTHESIS_FORMS = ("slack", "schur", "dual-slack", "dual-schur")


def check_model(model: Model) -> None:
    problems = validate_pairing(model.graph, model.systems, model.index)
    if problems:
        raise ModelError("invalid model: " + "; ".join(problems))


def compile_model(constraint: str, plant: dict) -> Model:
    """Model for a WHRT constraint text (``whrt:k/n:strategy``) and a base-plant dict."""
    c = parse_constraint(constraint)
    base, unc, base_index = plant_from_dict(plant)
    g = compile_graph(c)
    if unc is not None:
        lfr = unc.lift_family(g.num_labels, c.strategy)
        systems = lfr.nominal()
    else:
        lfr, systems = None, lift_family(base, g.num_labels, c.strategy)
    index = lift_index(base_index, g) if base_index is not None else None
    return Model(g, systems, index, lfr, {"constraint": constraint, "strategy": c.strategy})


# synthesis ------------------------------------------------------------------------


@dataclass
class SynthesisResult:
    trace: BisectionTrace
    certificate: Certificate
    controller: Controller
    residuals: ResidualReport


def synthesis_blocks(model: Model, meta: dict, gamma=None):
    """Synthesis blocks for ``meta`` (``mode``, ``form``, ``shared_gain``);
    ``gamma`` is a number or the variable ``t`` for ``gamma^2``."""
    mode, form, shared = meta.get("mode", "nominal"), meta.get("form", "slack"), bool(meta.get("shared_gain", True))
    g = model.graph
    if form not in SYNTHESIS_FORMS:
        raise ModelError(f"unknown synthesis form {form!r}; choose from {SYNTHESIS_FORMS}")
    if mode == "robust":
        if model.lfr is None:
            raise ModelError("robust synthesis needs an uncertain model")
        if form.startswith("dual-"):
            form = form[5:]
        mult = MultiplierClass(model.lfr.uncertainty, inverse=True)
        return assemble_robust_synthesis(g, model.lfr, l2_perf_gamma(model.lfr, float(gamma)), mult, shared, form)
    if mode != "nominal":
        raise ModelError(f"synthesis mode must be nominal or robust, got {mode!r}")
    f = model.systems
    p = l2_perf(f, gamma) if isinstance(gamma, MatrixVariable) else l2_perf_gamma(f, float(gamma))
    if form.startswith("dual-"):
        return assemble_dual_synthesis(g, f, p, form[5:], shared)
    return assemble_synthesis(g, f, p, form, shared)


def synthesize(model: Model, mode: str = "nominal", form: str = "slack", shared_gain: bool = True,
               bracket=DEFAULT_BRACKET, tol: float = DEFAULT_TOL, solver: str | None = None) -> SynthesisResult:
    """l2 state-feedback synthesis; direct minimization where gamma^2 enters affinely."""
    check_model(model)
    if not model.systems.has_control:
        raise ModelError("synthesis needs a control channel (Bu, Du) on every label")
    meta = {"kind": "synthesis", "mode": mode, "form": form, "shared_gain": shared_gain, "criterion": "l2"}
    if mode == "nominal" and not form.startswith("dual-"):
        t = MatrixVariable("t", (1, 1))
        trace = minimize_gamma(synthesis_blocks(model, meta, t), t, solver)
    else:
        trace = bisect_gamma(lambda gm: synthesis_blocks(model, meta, gm), bracket, tol, solver)
    cert = Certificate.from_trace(trace, f"synthesis/{form}", meta)
    ctrl = recover_controller(cert, list(model.graph.nodes), model.meta.get("strategy"))
    return SynthesisResult(trace, cert, ctrl, check_residuals(cert, trace.blocks))


# analysis ------------------------------------------------------------------------


def analysis_family(model: Model, controller: Controller | None, uncertain: bool):
    """Closed loop (when the model carries a control channel) or the open family."""
    base = model.lfr if uncertain else model.systems
    if uncertain and base is None:
        raise ModelError("this mode needs an uncertain model (lfr section)")
    if model.systems.has_control:
        if controller is None:
            raise ModelError("model has a control channel; supply a controller")
        return close_loop(base, controller, model.graph)
    if controller is not None:
        raise ModelError("controller given but the model has no control channel")
    return base


@dataclass
class AnalysisResult:
    trace: BisectionTrace
    certificate: Certificate
    residuals: ResidualReport
    recipe: Recipe


def analyze(model: Model, controller: Controller | None = None, recipe: Recipe | None = None,
            bracket=DEFAULT_BRACKET, tol: float = DEFAULT_TOL, solver: str | None = None) -> AnalysisResult:
    recipe = recipe or Recipe()
    check_model(model)
    if recipe.criterion == "quadratic" and model.index is None:
        raise ModelError("quadratic criterion needs an index section in the model")
    if recipe.criterion == "energy-to-peak":
        for l, s in model.systems.items():
            if np.any(s.D != 0):
                raise ModelError(f"energy-to-peak analysis needs D = 0 (label {l})")
    clf = analysis_family(model, controller, recipe.mode != "nominal")
    trace = analyze_closed_loop(
        clf, model.graph, recipe.criterion, recipe.mode, recipe.delta, recipe.shared_slack,
        index=model.index, bracket=bracket, tol=tol, solver=solver, form=recipe.form,
    )
    cert = Certificate.from_trace(trace, f"analysis/{recipe.resolved_form}", {"kind": "analysis", **recipe.as_dict()})
    return AnalysisResult(trace, cert, check_residuals(cert, trace.blocks), recipe)


def rebuild_blocks(model: Model, cert: Certificate, controller: Controller | None = None):
    """Blocks the certificate claims to satisfy, rebuilt from the model."""
    meta = cert.meta
    gamma = MatrixVariable("t", (1, 1)) if "t" in cert.values else cert.gamma
    if meta.get("kind") == "synthesis":
        return synthesis_blocks(model, meta, gamma)
    if meta.get("kind") != "analysis":
        raise ModelError("certificate meta does not say how it was produced")
    recipe = Recipe.from_dict(meta)
    clf = analysis_family(model, controller, recipe.mode != "nominal")
    return analysis_blocks(recipe_family(clf, recipe), model.graph, recipe, gamma, model.index)


# validation ----------------------------------------------------------------------


@dataclass
class Check:
    name: str
    passed: bool
    detail: str
    value: float | None = None


@dataclass
class ValidationReport:
    checks: list[Check] = field(default_factory=list)
    residuals: ResidualReport | None = None
    worst_walk: object = None
    worst_family: object = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name, passed, detail, value=None):
        self.checks.append(Check(name, bool(passed), detail, value))


def _delta_grid(model: Model, recipe: Recipe) -> list[float | None]:
    if recipe.mode == "fixed-delta":
        return [recipe.delta]
    if recipe.mode == "robust":
        b = model.lfr.uncertainty.bound
        return [-b, -0.5 * b, 0.0, 0.5 * b, b]
    return [None]


def validate(model: Model, cert: Certificate, controller: Controller | None = None, seed: int = 1,
             horizon: int = 200, trials: int = 4, walks: int = 20) -> ValidationReport:
    """Soundness audit: residuals, empirical bounds below gamma, dissipation along trajectories."""
    report = ValidationReport()
    blocks = rebuild_blocks(model, cert, controller)
    res = check_residuals(cert, blocks)
    report.residuals = res
    failing = ", ".join("/".join(map(str, b.tag)) for b in res.failures)
    report.add("residuals", res.passed, "all blocks pass" if res.passed else f"failing blocks: {failing}",
               res.worst_margin)

    meta = cert.meta
    if meta.get("kind") == "synthesis":
        if controller is None:
            controller = recover_controller(cert, list(model.graph.nodes))
        recipe = Recipe("l2", meta.get("mode", "nominal"))
    else:
        recipe = Recipe.from_dict(meta)
    uncertain = recipe.mode != "nominal"
    clf = analysis_family(model, controller, uncertain)
    gamma = cert.gamma

    if recipe.criterion in ("l2", "energy-to-peak") and gamma is not None:
        worst = 0.0
        for d in _delta_grid(model, recipe):
            fam = clf.nominal() if d is None and hasattr(clf, "nominal") else (clf.at(d) if d is not None else clf)
            if recipe.criterion == "l2":
                lb = empirical_l2_lb(fam, model.graph, horizon, trials, seed)
            else:
                lb = empirical_peak_lb(fam, model.graph, horizon, trials, seed)
            if lb.value >= worst:
                worst, report.worst_walk, report.worst_family = lb.value, lb.walk, fam
        report.add("empirical-bound", worst <= gamma + SOUNDNESS_SLACK,
                   f"empirical lower bound {worst:.6g} vs certified {gamma:.6g}", worst)

    X = {i: cert.node_matrix("X", i) for i in model.graph.nodes}
    if recipe.criterion == "l2" and recipe.mode != "robust" and all(v is not None for v in X.values()) and gamma:
        fam = recipe_family(clf, recipe)
        p = l2_perf(fam, float(cert.values["t"][0, 0]) if "t" in cert.values else gamma**2)
        rng = np.random.default_rng(seed)
        worst = math.inf
        for _ in range(walks):
            walk = random_walk(model.graph, 50, rng)
            w = [rng.standard_normal(fam.for_edge(model.graph.edges[k].tail, model.graph.edges[k].label).B.shape[1])
                 for k in walk.edges]
            audit = check_dissipation(fam, walk, X, p, rng.standard_normal(fam.state_dim), w)
            scale = 1.0 + max(abs(v) for v in audit.slacks)
            worst = min(worst, audit.worst / scale)
        report.add("dissipation", worst >= -1e-9, f"worst relative slack {worst:.3g}", worst)

    nominal = clf.nominal() if hasattr(clf, "nominal") else clf
    audit = spectral_audit(nominal, model.graph, 12)
    # necessary condition only: reported, never a failure on its own
    report.add("spectral-audit", True, f"growth rate at depth 12: {audit.value:.6g}", audit.value)
    return report


# sweeps --------------------------------------------------------------------------


def sweep_row(model_dict: dict, controller_dict: dict | None, delta: float, solver: str | None = None,
              tol: float = DEFAULT_TOL) -> dict:
    """One fixed-delta l2 analysis (process-pool friendly: plain dict inputs)."""
    from .modelfile import controller_from_dict

    model = Model.from_dict(model_dict)
    ctrl = controller_from_dict(controller_dict) if controller_dict else None
    res = analyze(model, ctrl, Recipe("l2", "fixed-delta", delta), tol=tol, solver=solver)
    return {"delta": delta, "gamma": res.trace.gamma, "residuals": res.residuals.passed}
