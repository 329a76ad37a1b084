"""Command-line interface: ``csls compile-whrt|lift|analyze|synthesize|validate|sweep``.

Every command writes a plain-text report and a JSON sidecar into ``--out``.
Tables go to CSV; ``--plot`` additionally renders PNG figures next to them.
Exit codes: 0 success, 2 infeasible, 3 validation failure, 4 input error,
5 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .certify import Recipe
from .errors import CslsError, ModelError
from .modelfile import (
    controller_to_dict,
    load_certificate,
    load_controller,
    load_model,
    load_plant,
    read_json,
    save_certificate,
    save_controller,
    save_model,
    system_to_dict,
    write_json,
)
from .pipeline import analyze, compile_model, synthesize, sweep_row, validate
from .sdp.bisection import DEFAULT_TOL
from .sim import simulate, trajectory_to_csv, walk_gain
from .whrt import lift_hold, lift_zero

log = logging.getLogger("csls")

EXIT_OK, EXIT_INFEASIBLE, EXIT_VALIDATION, EXIT_INPUT, EXIT_SOLVER = 0, 2, 3, 4, 5
DIGITS = 12


def _r(v):
    """Round floats to report precision (recursively)."""
    if isinstance(v, float):
        return float(f"{v:.{DIGITS}g}") if np.isfinite(v) else str(v)
    if isinstance(v, dict):
        return {k: _r(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_r(x) for x in v]
    return v


class Report:
    """Plain-text report plus a JSON sidecar; ``diagnostics`` stay out of the comparable part."""

    def __init__(self, command: str, out: Path):
        self.command, self.out = command, out
        self.lines: list[str] = []
        self.data: dict = {"command": command, "version": __version__}
        self.diagnostics: dict = {}

    def line(self, text: str = ""):
        self.lines.append(text)
        print(text)

    def write(self):
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / "report.txt").write_text("\n".join(self.lines) + "\n")
        write_json({"report": _r(self.data), "diagnostics": _r(self.diagnostics)}, self.out / "report.json")


def _write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for row in rows:
            wr.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return path


# plotting lives only here, in the report path of the CLI


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_trace(trace, path: Path):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.2))
    steps = trace.steps
    xs = list(range(1, len(steps) + 1))
    ax.semilogy(xs, [s.gamma for s in steps], color="0.6", lw=1)
    for ok, mk, lab in ((True, "o", "feasible"), (False, "x", "infeasible")):
        pts = [(x, s.gamma) for x, s in zip(xs, steps) if s.feasible == ok]
        if pts:
            ax.semilogy(*zip(*pts), mk, label=lab)
    ax.set_xlabel("step")
    ax.set_ylabel("gamma")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_sweep(rows, names, path: Path):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.2))
    deltas = [r["delta"] for r in rows]
    for name in names:
        ax.plot(deltas, [r[name] for r in rows], "o-", label=name)
    ax.set_xlabel("delta")
    ax.set_ylabel("certified gamma")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_trajectory(traj, path: Path):
    plt = _pyplot()
    fig, (a1, a2) = plt.subplots(2, 1, figsize=(5, 4), sharex=True)
    t = np.arange(traj.horizon)
    a1.plot(t, [np.linalg.norm(x) for x in traj.x[:-1]])
    a1.set_ylabel("|x|")
    a2.plot(t, [np.linalg.norm(z) for z in traj.z], label="|z|")
    a2.plot(t, [np.linalg.norm(w) for w in traj.w], label="|w|")
    a2.set_xlabel("step")
    a2.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


# shared argument handling --------------------------------------------------------


def parse_mode(text: str) -> tuple[str, float | None]:
    if text in ("nominal", "robust"):
        return text, None
    if text.startswith("fixed-delta:"):
        try:
            return "fixed-delta", float(text.split(":", 1)[1])
        except ValueError:
            pass
    raise ModelError(f"mode must be nominal, robust or fixed-delta:<value>, got {text!r}")


def parse_range(text: str) -> list[float]:
    try:
        a, b, step = (float(v) for v in text.split(":"))
    except ValueError:
        raise ModelError(f"sweep range must be a:b:step, got {text!r}") from None
    if step <= 0 or b < a:
        raise ModelError("sweep range needs a <= b and a positive step")
    n = int(round((b - a) / step))
    return [round(a + k * step, 12) for k in range(n + 1)]


def _trace_rows(trace):
    return [(s.gamma, s.feasible, s.residual if s.residual is not None else "") for s in trace.steps]


def _residual_lines(rep, res):
    worst = res.worst_margin
    rep.line(f"residuals: {'PASS' if res.passed else 'FAIL'} ({len(res.blocks)} blocks, worst margin {worst:.3e})")
    for b in res.failures:
        rep.line(f"  FAIL block {'/'.join(map(str, b.tag))}: eigenvalue {b.eigenvalue:.3e}")


# commands ------------------------------------------------------------------------


def cmd_compile_whrt(args) -> int:
    model = compile_model(args.constraint, read_json(args.plant))
    g, lfr = model.graph, model.lfr
    out = Path(args.out)
    save_model(model, out / "model.json")
    rep = Report("compile-whrt", out)
    rep.line(f"constraint {args.constraint}: {len(g.nodes)} nodes, {len(g.edges)} edges, {g.num_labels} labels")
    for e in g.edges:
        rep.line(f"  edge {e.tail} -> {e.head} label {e.label}")
    rep.line(f"model written to {out / 'model.json'}")
    rep.data.update(constraint=args.constraint, nodes=list(g.nodes), edges=[e.as_list() for e in g.edges],
                    num_labels=g.num_labels, uncertain=lfr is not None)
    rep.write()
    return EXIT_OK


def cmd_lift(args) -> int:
    plant, _, _ = load_plant(args.plant)
    fn = lift_hold if args.strategy == "hold" else lift_zero
    labels = range(1, args.labels + 1)
    fam = {str(l): system_to_dict(fn(plant, l)) for l in labels}
    out = Path(args.out)
    write_json({"strategy": args.strategy, "systems": fam}, out / "lifted.json")
    rep = Report("lift", out)
    rep.line(f"lifted labels 1..{args.labels} with the {args.strategy} strategy -> {out / 'lifted.json'}")
    rep.data.update(strategy=args.strategy, labels=list(labels))
    rep.write()
    return EXIT_OK


def _recipe(args) -> Recipe:
    mode, delta = parse_mode(args.mode)
    return Recipe(args.criterion, mode, delta, args.form, args.shared_slack)


def cmd_analyze(args) -> int:
    model = load_model(args.model)
    recipe = _recipe(args)
    ctrl = load_controller(args.controller) if args.controller else None
    out = Path(args.out)
    t0 = time.perf_counter()
    res = analyze(model, ctrl, recipe, tol=args.tol, solver=args.solver)
    rep = Report("analyze", out)
    rep.line(f"analysis: criterion {recipe.criterion}, mode {args.mode}, form {recipe.resolved_form}"
             + (", shared G" if recipe.shared_slack else ""))
    if res.trace.gamma is not None:
        rep.line(f"certified gamma: {res.trace.gamma:.6f} ({res.trace.method})")
    else:
        rep.line("quadratic performance certified")
    _residual_lines(rep, res.residuals)
    save_certificate(res.certificate, out / "certificate.json")
    _write_csv(out / "trace.csv", ["gamma", "feasible", "residual"], _trace_rows(res.trace))
    _write_csv(out / "residuals.csv", ["tag", "sense", "eigenvalue", "margin", "pass"],
               [tuple(r.values()) for r in res.residuals.as_rows()])
    if args.plot and res.trace.gamma is not None:
        plot_trace(res.trace, out / "trace.png")
    rep.data.update(recipe=recipe.as_dict(), gamma=res.trace.gamma, residuals_pass=res.residuals.passed,
                    trace=[{"gamma": s.gamma, "feasible": s.feasible} for s in res.trace.steps])
    rep.diagnostics.update(seconds=time.perf_counter() - t0, iterations=res.trace.result.iterations)
    rep.write()
    return EXIT_OK if res.residuals.passed else EXIT_VALIDATION


def cmd_synthesize(args) -> int:
    model = load_model(args.model)
    out = Path(args.out)
    t0 = time.perf_counter()
    res = synthesize(model, args.mode, args.form, not args.node_gains, tol=args.tol, solver=args.solver)
    rep = Report("synthesize", out)
    rep.line(f"synthesis: mode {args.mode}, form {args.form}, " + ("node gains" if args.node_gains else "shared gain"))
    rep.line(f"certified gamma: {res.trace.gamma:.6f} ({res.trace.method}, {len(res.trace.steps)} solves)")
    for i, K in res.controller.rounded().items():
        rep.line(f"  K[{i if not res.controller.shared else 'shared'}] = {K}")
    _residual_lines(rep, res.residuals)
    save_controller(res.controller, out / "controller.json")
    save_certificate(res.certificate, out / "certificate.json")
    _write_csv(out / "trace.csv", ["gamma", "feasible", "residual"], _trace_rows(res.trace))
    if args.plot:
        plot_trace(res.trace, out / "trace.png")
    rep.data.update(mode=args.mode, form=args.form, shared_gain=not args.node_gains, gamma=res.trace.gamma,
                    controller=controller_to_dict(res.controller), residuals_pass=res.residuals.passed)
    # closed-loop re-analysis with node-dependent certificates
    if not args.no_reanalysis:
        summary = {}
        modes = ["nominal"] + (["robust"] if model.lfr is not None and args.mode == "robust" else [])
        for m in modes:
            try:
                ar = analyze(model, res.controller, Recipe("l2", m), tol=args.tol, solver=args.solver)
                summary[m] = ar.trace.gamma
                rep.line(f"re-analysis ({m}, node-dependent certificates): gamma = {ar.trace.gamma:.6f}")
            except CslsError as exc:
                summary[m] = None
                rep.line(f"re-analysis ({m}) failed: {exc}")
        rep.data["reanalysis"] = summary
    rep.diagnostics.update(seconds=time.perf_counter() - t0, iterations=res.trace.result.iterations)
    rep.write()
    return EXIT_OK if res.residuals.passed else EXIT_VALIDATION


def cmd_validate(args) -> int:
    model = load_model(args.model)
    cert = load_certificate(args.certificate)
    ctrl = load_controller(args.controller) if args.controller else None
    out = Path(args.out)
    vr = validate(model, cert, ctrl, seed=args.seed, horizon=args.horizon, trials=args.trials)
    rep = Report("validate", out)
    for c in vr.checks:
        rep.line(f"{c.name}: {'PASS' if c.passed else 'FAIL'} ({c.detail})")
    if vr.residuals is not None:
        for b in vr.residuals.failures:
            rep.line(f"  FAIL block {'/'.join(map(str, b.tag))}: eigenvalue {b.eigenvalue:.3e}")
    rep.line(f"verdict: {'PASS' if vr.passed else 'FAIL'}")
    rep.data.update(passed=vr.passed, seed=args.seed,
                    checks=[{"name": c.name, "pass": c.passed, "value": c.value} for c in vr.checks])
    if vr.worst_walk is not None and (args.trajectory_csv or args.plot):
        fam = vr.worst_family
        _, w = walk_gain(fam, vr.worst_walk, np.random.default_rng(args.seed))
        traj = simulate(fam, vr.worst_walk, inputs=w)
        trajectory_to_csv(traj, out / "trajectory.csv")
        if args.plot:
            plot_trajectory(traj, out / "trajectory.png")
    rep.write()
    return EXIT_OK if vr.passed else EXIT_VALIDATION


def cmd_sweep(args) -> int:
    model = load_model(args.model)
    deltas = parse_range(args.sweep_delta)
    if model.lfr is None:
        raise ModelError("delta sweeps need an uncertain model")
    named = []
    for spec in args.controller or []:
        name, _, path = spec.rpartition("=")
        named.append((name or Path(path).stem, json.loads(Path(path).read_text()) if Path(path).exists() else None))
        if named[-1][1] is None:
            raise ModelError(f"no such file: {path}")
    if model.systems.has_control and not named:
        raise ModelError("model has a control channel; pass --controller NAME=FILE")
    if not named:
        named = [("open-loop", None)]
    md = model.to_dict()
    jobs = [(name, c, d) for name, c in named for d in deltas]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            futs = [ex.submit(sweep_row, md, c, d, args.solver, args.tol) for _, c, d in jobs]
            results = [f.result() for f in futs]
    else:
        results = [sweep_row(md, c, d, args.solver, args.tol) for _, c, d in jobs]
    rows = []
    for d in deltas:
        row = {"delta": d}
        for (name, _, dd), r in zip(jobs, results):
            if dd == d:
                row[name] = r["gamma"]
        rows.append(row)
    names = [n for n, _ in named]
    out = Path(args.out)
    _write_csv(out / "sweep.csv", ["delta"] + names, [[r["delta"]] + [r[n] for n in names] for r in rows])
    rep = Report("sweep", out)
    rep.line("delta      " + "  ".join(f"{n:>12}" for n in names))
    for r in rows:
        rep.line(f"{r['delta']:<9.4g}  " + "  ".join(f"{r[n]:12.4f}" for n in names))
    if args.plot:
        plot_sweep(rows, names, out / "sweep.png")
    rep.data.update(rows=rows, residuals_pass=all(r["residuals"] for r in results))
    rep.write()
    return EXIT_OK if all(r["residuals"] for r in results) else EXIT_VALIDATION


# entry point --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="csls", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, solver=True):
        p.add_argument("--out", default="csls-out", help="output directory")
        if solver:
            p.add_argument("--solver", choices=("cvxopt", "sdpa"), default=None,
                           help="SDP path (default: $CSLS_SDP_SOLVER or cvxopt)")
            p.add_argument("--tol", type=float, default=DEFAULT_TOL, help="relative bisection tolerance")
        p.add_argument("--plot", action="store_true", help="also render PNG figures")

    p = sub.add_parser("compile-whrt", help="build a model from a WHRT constraint and a base plant")
    p.add_argument("--constraint", required=True, help='e.g. "whrt:2/3:zero"')
    p.add_argument("--plant", required=True)
    common(p, solver=False)
    p.set_defaults(func=cmd_compile_whrt)

    p = sub.add_parser("lift", help="lift a base plant for labels 1..L")
    p.add_argument("--plant", required=True)
    p.add_argument("--labels", type=int, required=True)
    p.add_argument("--strategy", choices=("zero", "hold"), default="zero")
    common(p, solver=False)
    p.set_defaults(func=cmd_lift)

    p = sub.add_parser("analyze", help="certify performance of an (optionally closed) loop")
    p.add_argument("--model", required=True)
    p.add_argument("--controller")
    p.add_argument("--criterion", choices=("l2", "quadratic", "energy-to-peak"), default="l2")
    p.add_argument("--mode", default="nominal", help="nominal, robust or fixed-delta:<value>")
    p.add_argument("--form", default=None, help="primal, schur, slack, dual-primal, dual-schur, dual-slack; basic for energy-to-peak")
    p.add_argument("--shared-slack", action="store_true", help="restrict the slack variable to one G")
    common(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("synthesize", help="state-feedback synthesis")
    p.add_argument("--model", required=True)
    p.add_argument("--mode", choices=("nominal", "robust"), default="nominal")
    p.add_argument("--form", choices=("slack", "schur", "dual-slack", "dual-schur"), default="slack")
    p.add_argument("--node-gains", action="store_true", help="node-dependent gains instead of one shared gain")
    p.add_argument("--no-reanalysis", action="store_true")
    common(p)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("validate", help="audit a certificate against simulation")
    p.add_argument("--model", required=True)
    p.add_argument("--certificate", required=True)
    p.add_argument("--controller")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--horizon", type=int, default=200)
    p.add_argument("--trials", type=int, default=4)
    p.add_argument("--trajectory-csv", action="store_true", help="dump the worst trajectory as CSV")
    common(p, solver=False)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("sweep", help="fixed-delta analysis over a delta range")
    p.add_argument("--model", required=True)
    p.add_argument("--controller", action="append", help="NAME=FILE, repeatable")
    p.add_argument("--sweep-delta", required=True, help="a:b:step (write --sweep-delta=-0.2:0.2:0.1 for a negative start)")
    p.add_argument("--jobs", type=int, default=1)
    common(p)
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CslsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
