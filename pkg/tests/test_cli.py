import csv
import json
import subprocess
import sys

import pytest

from modasm.artifacts import (
    PLOT_KINDS,
    emit_plot_data,
    load_assembly,
    read_configs,
    read_json,
    write_configs,
)
from modasm.cli import main, run_pipeline
from modasm.errors import UnknownKind
from modasm.lattice import LatticeConfig, attach, canonicalize, enumerate_exhaustive

TOY_TASK = {"wrenches": [[0, 0.36, 0, 0, 0, 0], [0, -0.36, 0, 0, 0, 0]], "augment_gravity": True}


def write(path, obj):
    path.write_text(json.dumps(obj))
    return path


def test_enumerate_writes_jsonl(tmp_path, capsys):
    out = tmp_path / "n5.jsonl"
    assert main(["enumerate", "--n", "5", "-o", str(out)]) == 0
    assert json.loads(capsys.readouterr().out)["count"] == 24
    lines = out.read_text().splitlines()
    assert len(lines) == 24
    configs = read_configs(out)
    assert {canonicalize(c) for c in configs} == {canonicalize(c) for c in enumerate_exhaustive(5)}


def test_enumerate_sampled_is_seeded(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    for p in (a, b):
        assert main(["enumerate", "--n", "7", "--sample", "20", "--seed", "3", "-o", str(p)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert len(a.read_text().splitlines()) == 20


def test_missing_input_reports_path(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    write(cfg, attach(LatticeConfig.single(), (0, 1)).to_json())
    missing = tmp_path / "nope.json"
    code = main(["polytope", "--config", str(cfg), "--params", str(missing), "-o", str(tmp_path / "p.csv")])
    assert code == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "MissingInput" and err["path"] == str(missing)


def test_malformed_config_exit_code(tmp_path, capsys):
    bad = write(tmp_path / "bad.json", {"cells": [[0, 0, 6], [0, 1, 2]]})
    assert main(["polytope", "--config", str(bad), "-o", str(tmp_path / "p.csv")]) == 2
    assert "error" in json.loads(capsys.readouterr().err)


def test_polytope_and_simulate(tmp_path):
    cfg = write(tmp_path / "toy.json", {"config": attach(LatticeConfig.single(), (1, 0)).to_json(),
                                        "alpha": [-0.385, 0.0, 0.770]})
    poly = tmp_path / "poly.csv"
    assert main(["polytope", "--config", str(cfg), "--gravity", "-o", str(poly)]) == 0
    assert len(list(csv.DictReader(open(poly)))) == 642
    log = tmp_path / "log.csv"
    assert main(["simulate", "--config", str(cfg), "--duration", "1", "--dt", "0.005", "-o", str(log)]) == 0
    assert len(list(csv.DictReader(open(log)))) == 201
    out = tmp_path / "track.csv"
    rows = emit_plot_data(log, "tracking", out, every=10)
    assert rows == 21
    with pytest.raises(UnknownKind):
        emit_plot_data(log, "violin", out)
    assert set(PLOT_KINDS) == {"costs-bar", "polytope", "tracking"}


def test_unknown_plot_kind_exit_code(tmp_path, capsys):
    src = write(tmp_path / "x.json", {})
    assert main(["plot-data", str(src), "--kind", "violin", "-o", str(tmp_path / "o.csv")]) == 2
    assert json.loads(capsys.readouterr().err)["error"] == "UnknownKind"


def test_load_assembly_forms():
    domino = attach(LatticeConfig.single(), (0, 1))
    g, a = load_assembly(domino.to_json())
    assert g.n == 2 and list(a) == [0, 0, 0]
    g2, a2 = load_assembly(g.to_json([0.1, 0.2, 0.3]))
    assert g2 == g and list(a2) == [0.1, 0.2, 0.3]


@pytest.fixture
def manifest(tmp_path):
    write(tmp_path / "task.json", TOY_TASK)
    return write(tmp_path / "manifest.json", {
        "seed": 0,
        "task": "task.json",
        "stages": {
            "enumerate": {"n_max": 2},
            "select": {"restarts": 4},
            "polytope": {},
            "simulate": {"traj": {"kind": "hover"}, "duration": 0.5, "dt": 0.005},
        },
    })


def test_pipeline_skips_and_forces(manifest, tmp_path):
    first = run_pipeline(manifest)
    assert set(first.values()) == {"done"}
    out = tmp_path / "out"
    outcome = read_json(out / "outcome.json")
    assert outcome["found"] and outcome["n"] == 2
    assert outcome["provenance"]["tool"] == "modasm"
    snapshot = {p.name: p.read_bytes() for p in out.rglob("*") if p.is_file()}
    assert set(run_pipeline(manifest).values()) == {"skipped"}
    assert set(run_pipeline(manifest, force=True).values()) == {"done"}
    again = {p.name: p.read_bytes() for p in out.rglob("*") if p.is_file()}
    assert again == snapshot
    # a changed input invalidates the stages downstream of it
    write(tmp_path / "task.json", TOY_TASK | {"wrenches": [[0, 0.3, 0, 0, 0, 0]]})
    report = run_pipeline(manifest)
    assert report["enumerate"] == "skipped" and report["select"] == "done"

    bar = tmp_path / "bar.csv"
    assert emit_plot_data(out / "outcome.json", "costs-bar", bar) == 2


def test_pipeline_missing_manifest(tmp_path, capsys):
    assert main(["pipeline", str(tmp_path / "none.json")]) == 2
    assert json.loads(capsys.readouterr().err)["path"].endswith("none.json")


def test_configs_roundtrip(tmp_path):
    configs = enumerate_exhaustive(4)
    write_configs(tmp_path / "c.jsonl", configs)
    assert read_configs(tmp_path / "c.jsonl") == configs


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "modasm", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "modasm" in res.stdout
