"""JSON documents for designs and reports.

Floats are written with 17 significant digits so that every value survives
a round trip exactly and reports can be compared byte for byte.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

from . import __version__
from . import belief as bl
from .errors import ModelParseError
from .infostate import ControllerFn
from .jsonfmt import dump, dumps
from .sim import HistoryDesign
from .solver_finite import Design
from .solver_infinite import StationaryDesign

DESIGN_SCHEMA = "teamdp-design/1"
REPORT_SCHEMA = "teamdp-report/1"

__all__ = ["dump", "dumps", "design_to_dict", "design_from_dict", "load_design", "make_manifest",
           "report_document", "sha256_file"]


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def make_manifest(command, config, inputs=None, summary=None, wall_time=None) -> dict:
    """Run manifest: command, input hashes, resolved configuration and version."""
    m = {"command": command, "inputs": dict(inputs or {}), "config": dict(config),
         "version": __version__}
    if summary is not None:
        m["summary"] = summary
    if wall_time is not None:
        m["wall_time"] = wall_time
    return m


def report_document(manifest, result) -> dict:
    return {"schema": REPORT_SCHEMA, "manifest": manifest, "result": result}


def _controller_entries(g, table):
    bids = sorted(g, key=table.order_key)
    return [{"belief": table.vector(b), "action": int(g[b])} for b in bids]


def design_to_dict(design, manifest=None) -> dict:
    """Serialize a finite, stationary or history-form design."""
    if isinstance(design, StationaryDesign):
        doc = {"schema": DESIGN_SCHEMA, "kind": "stationary",
               "encoder": np.asarray(design.encoder), "memory": np.asarray(design.memory),
               "controller": _controller_entries(design.controller, design.table)}
    elif isinstance(design, Design):
        doc = {"schema": DESIGN_SCHEMA, "kind": "finite", "horizon": design.horizon,
               "stages": [{"encoder": np.asarray(c), "memory": np.asarray(l),
                           "controller": _controller_entries(g, design.table)}
                          for c, l, g in zip(design.encoders, design.memories, design.controllers)]}
    elif isinstance(design, HistoryDesign):
        stages = []
        for c, l, g in zip(design.encoders, design.memories, design.controllers):
            rows = [{"ys": list(ys), "us": list(us), "action": int(u)} for (ys, us), u in sorted(g.items())]
            stages.append({"encoder": np.asarray(c), "memory": np.asarray(l), "controller": rows})
        doc = {"schema": DESIGN_SCHEMA, "kind": "history", "horizon": len(stages), "stages": stages}
    else:
        raise TypeError(f"not a design: {type(design).__name__}")
    if manifest is not None:
        doc["manifest"] = manifest
    return doc


def _table(arr, shape, n_out, locus):
    try:
        a = np.array(arr, dtype=np.int64)
    except (TypeError, ValueError):
        raise ModelParseError("expected an integer table", locus) from None
    if a.shape != shape:
        raise ModelParseError(f"shape {a.shape}, expected {shape}", locus)
    if np.any(a < 0) or np.any(a >= n_out):
        raise ModelParseError(f"entries must lie in [0, {n_out})", locus)
    return a


def _controller(rows, table, shape, n_u, locus):
    g = ControllerFn()
    for k, row in enumerate(rows):
        try:
            b = np.array(row["belief"], dtype=np.float64)
            u = int(row["action"])
        except (KeyError, TypeError, ValueError):
            raise ModelParseError("entries need a belief and an action", f"{locus}[{k}]") from None
        if b.shape != shape:
            raise ModelParseError(f"belief shape {b.shape}, expected {shape}", f"{locus}[{k}].belief")
        if not 0 <= u < n_u:
            raise ModelParseError(f"action must lie in [0, {n_u})", f"{locus}[{k}].action")
        g[table.canonicalize(b)] = u
    return g


def design_from_dict(doc, spec):
    """Rebuild a design against ``spec``; beliefs are re-canonicalized into a fresh table."""
    if not isinstance(doc, dict) or doc.get("schema") != DESIGN_SCHEMA:
        raise ModelParseError(f"expected schema {DESIGN_SCHEMA!r}", "schema")
    a = spec.alphabets
    sm = (a.n_s, a.n_m)
    bshape = (a.n_x, a.n_m)
    kind = doc.get("kind")
    table = bl.BeliefTable()
    if kind == "stationary":
        c = _table(doc["encoder"], sm, a.n_z, "encoder")
        l = _table(doc["memory"], sm, a.n_m, "memory")
        g = _controller(doc.get("controller", []), table, bshape, a.n_u, "controller")
        return StationaryDesign(c, l, g, table)
    if kind not in ("finite", "history"):
        raise ModelParseError(f"unknown design kind {kind!r}", "kind")
    stages = doc.get("stages")
    if not isinstance(stages, list) or not stages:
        raise ModelParseError("expected a non-empty list", "stages")
    cs, ls, gs = [], [], []
    for t, st in enumerate(stages):
        cs.append(_table(st["encoder"], sm, a.n_z, f"stages[{t}].encoder"))
        ls.append(_table(st["memory"], sm, a.n_m, f"stages[{t}].memory"))
        if kind == "finite":
            g = _controller(st.get("controller", []), table, bshape, a.n_u, f"stages[{t}].controller")
            g.stage = t + 1
        else:
            g = {(tuple(r["ys"]), tuple(r["us"])): int(r["action"]) for r in st.get("controller", [])}
        gs.append(g)
    if kind == "finite":
        return Design(cs, ls, gs, table)
    return HistoryDesign(cs, ls, gs)


def load_design(path, spec):
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelParseError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return design_from_dict(doc, spec)
