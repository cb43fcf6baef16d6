"""Command-line entry point: ``modasm <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .artifacts import (
    MissingInput,
    SCHEMA_VERSION,
    emit_plot_data,
    file_hash,
    load_assembly,
    read_configs,
    read_json,
    require,
    write_configs,
    write_json,
    write_jsonl,
)
from .control import ControllerGains, assembly_inertia
from .errors import MalformedConfig, ModasmError
from .kinematics import ModuleParams, actuation_matrix, propagate_poses
from .lattice import SamplingParams, canonicalize, enumerate_exhaustive, enumerate_sampled
from .optimizer import SolverOptions, WrenchTask, augment_wrench_set, select_across, solve_many
from .polytope import force_polytope
from .sim import TrajectorySpec, run

log = logging.getLogger("modasm")

EXIT_INPUT = 2
EXIT_STAGE = 3


# ---------------------------------------------------------------- loaders

def _params(path) -> ModuleParams:
    return ModuleParams() if path is None else ModuleParams.from_json(read_json(path))


def _task(path) -> tuple[WrenchTask, bool]:
    obj = read_json(path)
    return WrenchTask.from_json(obj), bool(obj.get("augment_gravity", True))


def _traj(path_or_obj) -> TrajectorySpec:
    if path_or_obj is None:
        return TrajectorySpec()
    if isinstance(path_or_obj, dict):
        return TrajectorySpec.from_json(path_or_obj)
    return TrajectorySpec.from_json(read_json(path_or_obj))


def _configs_from_dir(path) -> dict:
    d = Path(path)
    if not d.is_dir():
        raise MissingInput(d)
    sets: dict[int, list] = {}
    for f in sorted(d.glob("*.jsonl")):
        for cfg in read_configs(f):
            sets.setdefault(cfg.n, []).append(cfg)
    if not sets:
        raise MissingInput(d / "*.jsonl")
    return sets


# ---------------------------------------------------------------- stages

def do_enumerate(n: int, out, sample: int | None = None, sigma: float | None = None, seed: int = 0, limit: int = 250_000) -> int:
    if sample is None:
        configs = enumerate_exhaustive(n, limit)
    else:
        configs = enumerate_sampled(n, SamplingParams(count=sample, sigma=sigma, seed=seed), limit)[n]
    write_configs(out, configs)
    return len(configs)


def do_optimize(configs_path, task_path, params_path, out, restarts: int = 4, seed: int = 0, workers=None) -> int:
    params = _params(params_path)
    task, augment = _task(task_path)
    configs = read_configs(configs_path)
    opts = SolverOptions(restarts=restarts, seed=seed)
    by_n: dict[int, list] = {}
    for i, cfg in enumerate(configs):
        by_n.setdefault(cfg.n, []).append(i)
    rows = [None] * len(configs)
    for n, idx in by_n.items():
        t_n = augment_wrench_set(task, n, params) if augment else task
        results = solve_many([configs[i] for i in idx], t_n, params, opts, workers)
        for i, (res, oriented) in zip(idx, results):
            rows[i] = {"index": i, "n": n, "key": canonicalize(configs[i]).hex(), "config": oriented.to_json(),
                       "result": res.to_json()}
    write_jsonl(out, rows)
    return sum(1 for r in rows if r["result"]["feasible"])


def do_select(configs_dir, task_path, params_path, out, restarts: int = 4, seed: int = 0, workers=None) -> dict:
    params = _params(params_path)
    task, augment = _task(task_path)
    outcome = select_across(_configs_from_dir(configs_dir), task, params,
                            SolverOptions(restarts=restarts, seed=seed), augment=augment, workers=workers)
    obj = outcome.to_json()
    write_json(out, obj)
    return obj


def do_polytope(config_path, params_path, out, gravity: bool = False) -> int:
    params = _params(params_path)
    graph, alpha = load_assembly(read_json(config_path))
    A = actuation_matrix(propagate_poses(graph, alpha, params), params)
    weight = graph.n * params.m * params.g if gravity else 0.0
    poly = force_polytope(A, params.u_max, weight=weight)
    poly.write_csv(out)
    return len(poly.support)


def do_simulate(config_path, params_path, out, gains_path=None, traj=None, dt: float = 1e-3, duration: float = 10.0) -> dict:
    params = _params(params_path)
    graph, alpha = load_assembly(read_json(config_path))
    gains = None
    if gains_path is not None:
        inertia = assembly_inertia(propagate_poses(graph, alpha, params), params)
        gains = ControllerGains.from_json(read_json(gains_path), inertia)
    simlog = run(graph, alpha, params, gains, _traj(traj), duration=duration, dt=dt)
    simlog.write_csv(out)
    return simlog.summary()


# ---------------------------------------------------------------- pipeline

PIPELINE_STAGES = ("enumerate", "select", "polytope", "simulate")


def _provenance(seed, inputs: dict) -> dict:
    return {
        "tool": "modasm",
        "version": __version__,
        "schema": SCHEMA_VERSION,
        "seed": seed,
        "inputs": {k: file_hash(v) for k, v in sorted(inputs.items())},
    }


def run_pipeline(manifest_path, force: bool = False, workers=None) -> dict:
    """Run the enabled stages of a manifest in order; returns the stage report.

    Paths in the manifest are relative to its directory.  A stage is
    skipped when its recorded provenance (inputs, settings, version)
    matches and all its outputs still exist.
    """
    mpath = require(manifest_path)
    manifest = read_json(mpath)
    base = mpath.parent
    seed = int(manifest.get("seed", 0))
    out_dir = base / manifest.get("out_dir", "out")
    out_dir.mkdir(parents=True, exist_ok=True)
    stages = manifest.get("stages", {})
    unknown = set(stages) - set(PIPELINE_STAGES)
    if unknown:
        raise ModasmError(f"unknown stages: {sorted(unknown)}")

    def path(key):
        val = manifest.get(key)
        return None if val is None else require(base / val)

    prov_file = out_dir / "provenance.json"
    prov = json.loads(prov_file.read_text()) if prov_file.exists() else {}
    report = {}

    def stage(name, inputs: dict, settings: dict, outputs: list, fn):
        record = _provenance(seed, inputs) | {"settings": settings, "outputs": [str(o.relative_to(out_dir)) for o in outputs]}
        if not force and prov.get(name) == record and all(o.exists() for o in outputs):
            report[name] = "skipped"
            return
        fn()
        prov[name] = record
        write_json(prov_file, prov)
        report[name] = "done"

    params_path = path("params")
    common = {"params": params_path} if params_path is not None else {}

    if "enumerate" in stages:
        cfg = stages["enumerate"]
        if "n_max" in cfg:
            ns = list(range(1, int(cfg["n_max"]) + 1))
        else:
            ns = [int(v) for v in cfg["n"]] if isinstance(cfg["n"], list) else [int(cfg["n"])]
        outs = [out_dir / "configs" / f"n{n:02d}.jsonl" for n in ns]

        def _enum():
            for n, o in zip(ns, outs):
                do_enumerate(n, o, cfg.get("sample"), cfg.get("sigma"), seed)

        stage("enumerate", {}, cfg, outs, _enum)

    outcome_path = out_dir / "outcome.json"
    if "select" in stages:
        cfg = stages["select"]
        task_path = path("task")
        if task_path is None:
            raise ModasmError("the select stage needs a 'task' entry")
        cfg_files = sorted((out_dir / "configs").glob("*.jsonl"))
        inputs = common | {"task": task_path} | {f"configs/{f.name}": f for f in cfg_files}

        def _select():
            obj = do_select(out_dir / "configs", task_path, params_path, outcome_path,
                            int(cfg.get("restarts", 4)), seed, workers)
            obj["provenance"] = _provenance(seed, inputs)
            write_json(outcome_path, obj)

        stage("select", inputs, cfg, [outcome_path], _select)

    if "polytope" in stages:
        cfg = stages["polytope"]
        out = out_dir / "polytope.csv"
        stage("polytope", common | {"outcome": require(outcome_path)}, cfg, [out],
              lambda: do_polytope(outcome_path, params_path, out, bool(cfg.get("gravity", False))))

    if "simulate" in stages:
        cfg = stages["simulate"]
        out = out_dir / "log.csv"
        gains = path("gains")
        inputs = common | {"outcome": require(outcome_path)} | ({"gains": gains} if gains else {})
        if isinstance(cfg.get("traj"), str):
            inputs["traj"] = require(base / cfg["traj"])
        traj = inputs.get("traj", cfg.get("traj"))
        stage("simulate", inputs, cfg, [out],
              lambda: do_simulate(outcome_path, params_path, out, gains, traj,
                                  float(cfg.get("dt", 1e-3)), float(cfg.get("duration", 10.0))))
    return report


# ---------------------------------------------------------------- argparse

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="modasm", description=__doc__)
    p.add_argument("--version", action="version", version=f"modasm {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("enumerate", help="distinct assemblies of n modules (JSONL)")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--sample", type=int, help="keep at most this many configurations per level")
    s.add_argument("--sigma", type=float)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--limit", type=int, default=250_000)
    s.add_argument("-o", "--output", required=True)

    s = sub.add_parser("optimize", help="angles and inputs for every configuration in a JSONL file")
    s.add_argument("--configs", required=True)
    s.add_argument("--task", required=True)
    s.add_argument("--params")
    s.add_argument("--restarts", type=int, default=4)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--workers", type=int)
    s.add_argument("-o", "--output", required=True)

    s = sub.add_parser("select", help="smallest feasible module count and its cheapest assembly")
    s.add_argument("--configs-dir", required=True)
    s.add_argument("--task", required=True)
    s.add_argument("--params")
    s.add_argument("--restarts", type=int, default=4)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--workers", type=int)
    s.add_argument("-o", "--output", required=True)

    s = sub.add_parser("polytope", help="zero-torque force polytope support values (CSV)")
    s.add_argument("--config", required=True)
    s.add_argument("--params")
    s.add_argument("--gravity", action="store_true", help="shift points down by the assembly weight")
    s.add_argument("-o", "--output", required=True)

    s = sub.add_parser("simulate", help="closed-loop flight log (CSV)")
    s.add_argument("--config", required=True)
    s.add_argument("--params")
    s.add_argument("--gains")
    s.add_argument("--traj")
    s.add_argument("--dt", type=float, default=1e-3)
    s.add_argument("--duration", type=float, default=10.0)
    s.add_argument("-o", "--output", required=True)

    s = sub.add_parser("pipeline", help="run the stages listed in a manifest")
    s.add_argument("manifest")
    s.add_argument("--force", action="store_true")
    s.add_argument("--workers", type=int)

    s = sub.add_parser("plot-data", help="plotting table from an artifact")
    s.add_argument("artifact")
    s.add_argument("--kind", required=True)
    s.add_argument("--every", type=int, default=10)
    s.add_argument("-o", "--output", required=True)
    return p


def _fail(code: int, exc: Exception) -> int:
    err = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, MissingInput):
        err["path"] = exc.path
    print(json.dumps(err), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "enumerate":
            count = do_enumerate(args.n, args.output, args.sample, args.sigma, args.seed, args.limit)
            print(json.dumps({"n": args.n, "count": count, "output": args.output}))
        elif args.command == "optimize":
            feasible = do_optimize(args.configs, args.task, args.params, args.output, args.restarts, args.seed, args.workers)
            print(json.dumps({"feasible": feasible, "output": args.output}))
        elif args.command == "select":
            obj = do_select(args.configs_dir, args.task, args.params, args.output, args.restarts, args.seed, args.workers)
            print(json.dumps({"found": obj["found"], "n": obj["n"], "cost": obj["cost"], "message": obj["message"]}))
            if not obj["found"]:
                return 1
        elif args.command == "polytope":
            count = do_polytope(args.config, args.params, args.output, args.gravity)
            print(json.dumps({"directions": count, "output": args.output}))
        elif args.command == "simulate":
            print(json.dumps(do_simulate(args.config, args.params, args.output, args.gains, args.traj, args.dt, args.duration)))
        elif args.command == "pipeline":
            print(json.dumps(run_pipeline(args.manifest, args.force, args.workers)))
        elif args.command == "plot-data":
            rows = emit_plot_data(args.artifact, args.kind, args.output, args.every)
            print(json.dumps({"rows": rows, "output": args.output}))
    except (MissingInput, MalformedConfig, ValueError, KeyError, json.JSONDecodeError) as exc:
        return _fail(EXIT_INPUT, exc)
    except ModasmError as exc:
        return _fail(EXIT_STAGE, exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
