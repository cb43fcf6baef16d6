"""Reading and writing the JSON, JSONL and CSV artifacts of the pipeline."""

from __future__ import annotations

import csv
import hashlib
import json
import os
from pathlib import Path

import numpy as np

from .errors import MalformedConfig, UnknownKind
from .graph import AssemblyGraph, extract_graph
from .lattice import LatticeConfig

SCHEMA_VERSION = 1


class MissingInput(FileNotFoundError):
    """A referenced input file does not exist."""

    def __init__(self, path):
        super().__init__(f"missing input file: {path}")
        self.path = str(path)


def require(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise MissingInput(p)
    return p


def read_json(path):
    with open(require(path)) as fh:
        return json.load(fh)


def write_json(path, obj) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def read_jsonl(path) -> list:
    out = []
    with open(require(path)) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


def write_jsonl(path, rows) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True, separators=(",", ":")))
            fh.write("\n")
    os.replace(tmp, path)


def read_configs(path) -> list[LatticeConfig]:
    return [LatticeConfig.from_json(obj) for obj in read_jsonl(path)]


def write_configs(path, configs) -> None:
    write_jsonl(path, (c.to_json() for c in configs))


def file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def load_assembly(obj) -> tuple[AssemblyGraph, np.ndarray]:
    """Graph and angles from an outcome, a graph JSON or a config with angles."""
    if "graph" in obj and obj["graph"] is not None:
        alpha = obj.get("alpha") or obj["graph"].get("alpha")
        if "config" in obj and obj["config"] is not None:
            graph = extract_graph(LatticeConfig.from_json(obj["config"]))
        else:
            graph = AssemblyGraph.from_json(obj["graph"])
    elif obj.get("config") is not None:
        graph, alpha = extract_graph(LatticeConfig.from_json(obj["config"])), obj.get("alpha")
    elif "edges" in obj:
        graph, alpha = AssemblyGraph.from_json(obj), obj.get("alpha")
    elif "cells" in obj:
        graph, alpha = extract_graph(LatticeConfig.from_json(obj)), obj.get("alpha")
    else:
        raise MalformedConfig("no assembly found (expected 'graph', 'config', 'edges' or 'cells')")
    if alpha is None:
        alpha = np.zeros(graph.n + 1)
    return graph, np.asarray(alpha, dtype=float)


def _read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(require(path), newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise MalformedConfig(f"{path} is empty")
    return rows[0], rows[1:]


def _write_csv(path, header, rows) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


PLOT_KINDS = ("costs-bar", "polytope", "tracking")


def emit_plot_data(src, kind: str, dst, every: int = 10) -> int:
    """Write a plotting table derived from an artifact; returns the row count."""
    if kind not in PLOT_KINDS:
        raise UnknownKind(f"unknown plot kind {kind!r}; expected one of {', '.join(PLOT_KINDS)}")
    if kind == "costs-bar":
        src = require(src)
        if src.suffix == ".jsonl":
            entries = read_jsonl(src)
        else:
            entries = read_json(src).get("table", [])
        rows = []
        for i, e in enumerate(entries):
            res = e.get("result", e)
            cid = e.get("key") or str(e.get("index", i))
            cost = res.get("cost")
            rows.append([e.get("n", ""), cid, "" if cost is None else repr(float(cost)), int(bool(res.get("feasible")))])
        _write_csv(dst, ["n", "config_id", "J_cost", "feasible"], rows)
        return len(rows)
    if kind == "polytope":
        header, body = _read_csv(src)
        if "s" not in header:
            raise MalformedConfig(f"{src} has no support column 's'")
        s = np.array([float(r[header.index("s")]) for r in body])
        peak = float(s.max()) if len(s) and s.max() > 0 else 1.0
        keep = [c for c in header if c != "s_norm"]
        rows = [[r[header.index(c)] for c in keep] + [repr(float(v / peak))] for r, v in zip(body, s)]
        _write_csv(dst, keep + ["s_norm"], rows)
        return len(rows)
    header, body = _read_csv(src)
    col = {c: header.index(c) for c in header}
    rows = []
    for r in body[:: max(1, every)]:
        p = np.array([float(r[col[k]]) for k in ("px", "py", "pz")])
        ref = np.array([float(r[col[k]]) for k in ("ref_px", "ref_py", "ref_pz")])
        rows.append([r[col["t"]], repr(float(np.linalg.norm(p - ref))), r[col["err_ang_deg"]]])
    _write_csv(dst, ["t", "err_pos", "err_ang_deg"], rows)
    return len(rows)
