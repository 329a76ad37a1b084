"""JSON model, plant, certificate and controller files.

Matrices are row-major nested lists written at full double precision.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np

from .core import ConstrainingGraph, IndexBlock, PerformanceIndex, StateSpace, SystemFamily, as_matrix, validate_graph
from .errors import ModelError
from .lmi.lfr import LfrFamily, LfrSystem, UncertainPlant, Uncertainty
from .whrt import BasePlant


def mat(value) -> list:
    return np.asarray(value, dtype=float).tolist()


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ModelError(f"no such file: {path}") from None
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: invalid JSON ({exc})") from None


def write_json(data: dict, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=1, sort_keys=True) + "\n")
    return path


# graph / systems --------------------------------------------------------------------


def graph_to_dict(g: ConstrainingGraph) -> dict:
    return {"nodes": list(g.nodes), "edges": [e.as_list() for e in g.edges], "num_labels": g.num_labels}


def graph_from_dict(d: dict) -> ConstrainingGraph:
    try:
        g = ConstrainingGraph(d["nodes"], [tuple(e) for e in d["edges"]], d.get("num_labels"))
    except (KeyError, TypeError) as exc:
        raise ModelError(f"malformed graph: {exc}") from None
    problems = validate_graph(g)
    if problems:
        raise ModelError("invalid graph: " + "; ".join(problems))
    return g


def system_to_dict(s: StateSpace) -> dict:
    d = {k: mat(getattr(s, k)) for k in ("A", "B", "C", "D")}
    if s.has_control:
        d["Bu"], d["Du"] = mat(s.Bu), mat(s.Du)
    return d


def system_from_dict(d: dict, where: str = "system") -> StateSpace:
    try:
        kw = {k: d[k] for k in ("A", "B", "C", "D")}
    except KeyError as exc:
        raise ModelError(f"{where}: missing matrix {exc}") from None
    if "Bu" in d or "Du" in d:
        kw["Bu"], kw["Du"] = d.get("Bu"), d.get("Du")
    return StateSpace(**kw)


def index_to_dict(p: PerformanceIndex) -> dict:
    return {str(l): {"Q": mat(b.Q), "S": mat(b.S), "R": mat(b.R)} for l, b in p.items()}


def index_from_dict(d: dict) -> PerformanceIndex:
    return PerformanceIndex({int(l): IndexBlock(b["Q"], b.get("S", []), b["R"]) for l, b in d.items()})


def lfr_to_dict(lfr: LfrFamily) -> dict:
    return {str(l): {k: mat(v) for k, v in s.matrices().items()} for l, s in lfr.items()}


def uncertainty_to_dict(u: Uncertainty) -> dict:
    d = {"kind": u.kind, "bound": u.bound}
    if u.fixed is not None:
        d["fixed"] = [mat(m) for m in u.fixed]
    return d


def uncertainty_from_dict(d: dict | None) -> Uncertainty:
    if not d:
        return Uncertainty()
    fixed = tuple(as_matrix(m) for m in d["fixed"]) if d.get("fixed") is not None else None
    return Uncertainty(d.get("kind", "scalar-norm-bounded"), float(d.get("bound", 1.0)), fixed)


class Model:
    """Contents of a model file."""

    def __init__(self, graph, systems, index=None, lfr=None, meta=None):
        self.graph: ConstrainingGraph = graph
        self.systems: SystemFamily = systems
        self.index: PerformanceIndex | None = index
        self.lfr: LfrFamily | None = lfr
        self.meta: dict = dict(meta or {})

    def to_dict(self) -> dict:
        d: dict[str, Any] = {
            "graph": graph_to_dict(self.graph),
            "systems": {str(l): system_to_dict(s) for l, s in self.systems.items()},
        }
        if self.index is not None:
            d["index"] = index_to_dict(self.index)
        if self.lfr is not None:
            d["lfr"] = lfr_to_dict(self.lfr)
            d["uncertainty"] = uncertainty_to_dict(self.lfr.uncertainty)
        if self.meta:
            d["meta"] = self.meta
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Model":
        if "graph" not in d or "systems" not in d:
            raise ModelError("model file needs 'graph' and 'systems'")
        g = graph_from_dict(d["graph"])
        f = SystemFamily({int(l): system_from_dict(s, f"system {l}") for l, s in d["systems"].items()})
        p = index_from_dict(d["index"]) if d.get("index") else None
        lfr = None
        if d.get("lfr"):
            lfr = LfrFamily(
                {int(l): LfrSystem(**s) for l, s in d["lfr"].items()},
                uncertainty_from_dict(d.get("uncertainty")),
            )
        return cls(g, f, p, lfr, d.get("meta"))


def load_model(path) -> Model:
    return Model.from_dict(read_json(path))


def save_model(model: Model, path) -> Path:
    return write_json(model.to_dict(), path)


# base plants -------------------------------------------------------------------------


def plant_from_dict(d: dict) -> tuple[BasePlant, UncertainPlant | None, IndexBlock | None]:
    try:
        plant = BasePlant(d["A"], d["B"], d["Bu"], d["C"], d["D"], d["Du"])
    except KeyError as exc:
        raise ModelError(f"plant file: missing matrix {exc}") from None
    index = IndexBlock(d["index"]["Q"], d["index"].get("S", []), d["index"]["R"]) if d.get("index") else None
    unc = None
    if d.get("uncertainty"):
        u = d["uncertainty"]
        q = np.asarray(u["B_wu"], dtype=float).reshape(plant.n, -1).shape[1]
        p = as_matrix(u["C_zu"]).shape[0]
        dz, dw, du = plant.C.shape[0], plant.B.shape[1], plant.Bu.shape[1]

        def get(key, shape):
            return np.asarray(u[key], dtype=float).reshape(shape) if key in u else np.zeros(shape)

        unc = UncertainPlant(
            plant,
            get("B_wu", (plant.n, q)), get("C_zu", (p, plant.n)), get("D_zu_wu", (p, q)),
            get("D_zu_w", (p, dw)), get("D_zu_u", (p, du)), get("D_z_wu", (dz, q)),
            uncertainty_from_dict(u),
        )
    return plant, unc, index


def load_plant(path):
    return plant_from_dict(read_json(path))


# certificates / controllers ----------------------------------------------------------------


def certificate_to_dict(cert) -> dict:
    return {
        "form": cert.form,
        "gamma": cert.gamma,
        "variables": {k: mat(v) for k, v in sorted(cert.values.items())},
        "meta": cert.meta,
    }


def load_certificate(path):
    return certificate_from_dict(read_json(path))


def certificate_from_dict(d: dict):
    from .certify import Certificate

    try:
        return Certificate(
            {k: as_matrix(v, k) for k, v in d["variables"].items()}, d.get("form", ""), d.get("gamma"), d.get("meta", {})
        )
    except KeyError as exc:
        raise ModelError(f"certificate file: missing {exc}") from None


def save_certificate(cert, path) -> Path:
    return write_json(certificate_to_dict(cert), path)


def controller_to_dict(ctrl) -> dict:
    return {
        "gains": {str(i): mat(K) for i, K in sorted(ctrl.gains.items())},
        "shared": ctrl.shared,
        "strategy": ctrl.strategy,
    }


def load_controller(path):
    return controller_from_dict(read_json(path))


def controller_from_dict(d: dict):
    from .certify import Controller

    try:
        gains = {int(i): as_matrix(K, f"K[{i}]") for i, K in d["gains"].items()}
    except KeyError as exc:
        raise ModelError(f"controller file: missing {exc}") from None
    return Controller(gains, bool(d.get("shared", False)), d.get("strategy"))


def save_controller(ctrl, path) -> Path:
    return write_json(controller_to_dict(ctrl), path)
