"""Command-line experiment runner.

Subcommands::

    decsearch solve --config run.json
    decsearch compare-accel --config accel.json --seed-list 0,1,2,3,4
    decsearch sweep-discretization --config sweep.json --jobs 2
    decsearch evaluate --policy p.json --domain nuclear.json --n-traj 1000 --seed 0

Outputs go to ``--out``, else the config's ``out`` entry, else
``$DECSEARCH_OUT``, else ``./decsearch-out``.  CSVs are written to a
temporary file and renamed into place only after every cell finished, so a
failed run never leaves a partial CSV behind.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

import jsonschema
import numpy as np

from .distributions import AccelerationScheme
from .domains import (GridBenchmarkConfig, GridBenchmarkDomain, NuclearConfig, NuclearDomain,
                      TinyOracleDomain)
from .epscko import EpsckoConfig, epscko_search
from .fsa import GdiceConfig, gdice_search
from .serialization import PolicyFormatError, load_policy, save_policy
from .simcore import evaluate

log = logging.getLogger(__name__)

CONFIG_VERSION = 1
TRACE_COLUMNS = ("solver", "scheme", "d", "seed", "iteration", "best_value", "worst_elite",
                 "wall_ms", "injected")
FINAL_COLUMNS = ("solver", "scheme", "d", "seed", "final_value", "stderr")
DEFAULT_SCHEMES = (
    {"alpha": 0.15, "kind": "none", "label": "alpha=0.15"},
    {"alpha": 0.5, "kind": "none", "label": "alpha=0.5"},
    {"alpha": 0.5, "kind": "dynamic-smoothing", "alpha0": 0.5, "beta": 15},
    {"alpha": 0.5, "kind": "noise-injection", "omega_max": 0.02, "r": 0.0005},
    {"alpha": 0.5, "kind": "max-entropy-injection", "alpha_ei": 0.03},
)


class ConfigError(ValueError):
    """The experiment or domain configuration is invalid."""


_domain_inline = {
    "type": "object",
    "required": ["kind"],
    "additionalProperties": False,
    "properties": {"version": {"const": CONFIG_VERSION},
                   "kind": {"enum": ["nuclear", "grid", "tiny"]},
                   "params": {"type": "object"}},
}

EXPERIMENT_SCHEMA = {
    "type": "object",
    "required": ["version", "domain", "solver"],
    "additionalProperties": False,
    "properties": {
        "version": {"const": CONFIG_VERSION},
        "domain": {"oneOf": [{"type": "string"}, _domain_inline]},
        "solver": {"enum": ["gdice", "epscko"]},
        "solver_config": {"type": "object"},
        "epscko_config": {"type": "object"},
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "seeds": {"type": "array", "items": {"type": "integer"}, "minItems": 1},
                "d": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
                "schemes": {"type": "array", "items": {"type": "object"}, "minItems": 1},
            },
        },
        "final_eval_traj": {"type": "integer", "minimum": 1},
        "record_time": {"type": "boolean"},
        "out": {"type": "string"},
    },
}


# --------------------------------------------------------------------------- config

def _schema_check(doc, schema, what):
    try:
        jsonschema.validate(doc, schema)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{what}: {where}: {exc.message}") from None


def _read_json(path: Path, what: str):
    if not path.is_file():
        raise ConfigError(f"{what} not found: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what} {path} is not valid JSON: {exc}") from None


def _known_keys(cls, params: dict, what: str, extra=()):
    names = {f.name for f in fields(cls)} | set(extra)
    unknown = sorted(set(params) - names)
    if unknown:
        raise ConfigError(f"unknown {what} keys: {unknown}")


def load_domain_block(block, base: Path) -> dict:
    if isinstance(block, str):
        block = _read_json((base / block) if not os.path.isabs(block) else Path(block), "domain file")
    _schema_check(block, _domain_inline, "domain config")
    return {"kind": block["kind"], "params": dict(block.get("params", {}))}


def build_domain(block: dict):
    kind, params = block["kind"], block["params"]
    try:
        if kind == "nuclear":
            _known_keys(NuclearConfig, params, "nuclear domain")
            return NuclearDomain(NuclearConfig(**params))
        if kind == "grid":
            _known_keys(GridBenchmarkConfig, params, "grid domain")
            return GridBenchmarkDomain(GridBenchmarkConfig(**params))
        allowed = {"obs_accuracy", "stay_prob", "reward_scale", "gamma", "obs_noise"}
        if set(params) - allowed:
            raise ConfigError(f"unknown tiny domain keys: {sorted(set(params) - allowed)}")
        return TinyOracleDomain(**params)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad {kind} domain parameters: {exc}") from None


def gdice_config(block: dict, scheme: dict | None = None) -> GdiceConfig:
    block = dict(block)
    _known_keys(GdiceConfig, block, "gdice config")
    if scheme is not None:
        scheme = dict(scheme)
        if "alpha" in scheme:
            block["alpha"] = scheme.pop("alpha")
        block["acceleration"] = scheme
    acc = block.get("acceleration", {"kind": "none"})
    try:
        block["acceleration"] = AccelerationScheme.from_dict(acc)
        return GdiceConfig(**block)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad gdice config: {exc}") from None


def epscko_config(block: dict) -> EpsckoConfig:
    _known_keys(EpsckoConfig, block, "epscko config")
    try:
        return EpsckoConfig(**block)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad epscko config: {exc}") from None


@dataclass
class Experiment:
    domain: dict
    solver: str
    solver_config: dict
    epscko_config: dict
    seeds: list
    d_values: list | None
    schemes: list | None
    final_eval_traj: int
    record_time: bool
    out: str | None


def load_experiment(path) -> Experiment:
    path = Path(path)
    doc = _read_json(path, "config file")
    _schema_check(doc, EXPERIMENT_SCHEMA, "config")
    sweep = doc.get("sweep", {})
    exp = Experiment(
        domain=load_domain_block(doc["domain"], path.parent),
        solver=doc["solver"],
        solver_config=doc.get("solver_config", {}),
        epscko_config=doc.get("epscko_config", {}),
        seeds=sweep.get("seeds", [0]),
        d_values=sweep.get("d"),
        schemes=sweep.get("schemes"),
        final_eval_traj=doc.get("final_eval_traj", 1000),
        record_time=doc.get("record_time", False),
        out=doc.get("out"),
    )
    # fail on bad blocks before any work starts
    build_domain(exp.domain)
    if exp.solver == "gdice":
        gdice_config(exp.solver_config)
    else:
        epscko_config(exp.solver_config)
    if exp.epscko_config:
        epscko_config(exp.epscko_config)
    for s in exp.schemes or ():
        gdice_config(exp.solver_config if exp.solver == "gdice" else {}, s)
    return exp


# --------------------------------------------------------------------------- running

def fmt_float(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return "%.17g" % x


@dataclass
class Cell:
    solver: str
    domain: dict
    config: dict
    scheme: dict | None
    d: object
    seed: int
    final_eval_traj: int
    record_time: bool


def run_cell(cell: Cell) -> dict:
    """Run one (solver, scheme, d, seed) search; returns trace rows, final value and policy."""
    domain = build_domain(cell.domain)
    rows = []
    t0 = time.perf_counter()

    def stamp():
        return fmt_float((time.perf_counter() - t0) * 1e3) if cell.record_time else ""

    if cell.solver == "gdice":
        block = dict(cell.config)
        if cell.d is not None:
            block["d"] = cell.d
        cfg = gdice_config(block, cell.scheme)
        scheme = _scheme_name(cfg)

        def cb(rec):
            rows.append(["gdice", scheme, str(cfg.d), str(cell.seed), str(rec.iteration),
                         fmt_float(rec.best_value), fmt_float(rec.worst_elite), stamp(),
                         str(int(rec.injected))])

        res = gdice_search(domain, cfg, cell.seed, callback=cb)
        policy = res.best_policy
        eval_seed = np.random.SeedSequence([cell.seed, 1])
        final, err = evaluate(domain, policy, cell.final_eval_traj, cfg.horizon, eval_seed)
        d_label, lam = str(cfg.d), None
    else:
        block = dict(cell.config)
        block.setdefault("n_eval_traj", cell.final_eval_traj)
        cfg = epscko_config(block)
        scheme = f"entropy-injection({cfg.alpha_ei:g})" if cfg.alpha_ei > 0 else "none"

        def cb(rec):
            rows.append(["epscko", scheme, "continuous", str(cell.seed), str(rec.iteration),
                         fmt_float(rec.best_value), fmt_float(rec.worst_elite), stamp(),
                         str(int(rec.injected))])

        res = epscko_search(domain, cfg, cell.seed, callback=cb)
        policy, final, err = res.best_policy, res.final_value, res.final_stderr
        d_label, lam = "continuous", cfg.lam
    final_row = [cell.solver, scheme, d_label, str(cell.seed), fmt_float(final), fmt_float(err)]
    return {"rows": rows, "final": final_row, "policy": policy, "lam": lam,
            "name": f"{cell.solver}_{scheme}_d{d_label}_seed{cell.seed}"}


def _scheme_name(cfg: GdiceConfig) -> str:
    if cfg.acceleration.kind == "none" and not cfg.acceleration.label:
        return f"alpha={cfg.alpha:g}"
    return cfg.acceleration.name


def run_cells(cells: list, jobs: int) -> list:
    if jobs <= 1 or len(cells) <= 1:
        return [run_cell(c) for c in cells]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run_cell, cells))


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w") as f:
        f.write(text)
    os.replace(tmp, path)


def _finish(out: Path, stem: str, results: list, save_policies: bool) -> str:
    """Write CSVs, policies and the summary; returns the summary text."""
    trace = [r for res in results for r in res["rows"]]
    finals = [res["final"] for res in results]
    files = {out / f"{stem}_trace.csv": _csv_text(TRACE_COLUMNS, trace),
             out / f"{stem}_final.csv": _csv_text(FINAL_COLUMNS, finals)}
    for p, text in files.items():
        write_atomic(p, text)
    if save_policies:
        for res in results:
            save_policy(out / f"{res['name']}.policy.json", res["policy"], res["lam"])
    groups = {}
    for solver, scheme, d, _, value, _ in finals:
        groups.setdefault((solver, scheme, d), []).append(float(value))
    lines = [f"{solver:7s} {scheme:28s} d={d:10s} median final {np.median(v):.4f} "
             f"over {len(v)} seed(s)" for (solver, scheme, d), v in groups.items()]
    summary = "\n".join(lines) + "\n"
    write_atomic(out / f"{stem}_summary.txt", summary)
    return summary


def out_dir(arg, exp: Experiment | None) -> Path:
    if arg:
        return Path(arg)
    if exp is not None and exp.out:
        return Path(exp.out)
    return Path(os.environ.get("DECSEARCH_OUT", "decsearch-out"))


def _seeds(arg, exp):
    if arg is None:
        return list(exp.seeds)
    try:
        seeds = [int(s) for s in arg.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"bad --seed-list {arg!r}") from None
    if not seeds:
        raise ConfigError("--seed-list is empty")
    return seeds


def cmd_solve(args) -> str:
    exp = load_experiment(args.config)
    cells = [Cell(exp.solver, exp.domain, exp.solver_config, None, None, s,
                  exp.final_eval_traj, exp.record_time) for s in _seeds(args.seed_list, exp)]
    results = run_cells(cells, args.jobs)
    return _finish(out_dir(args.out, exp), "solve", results, save_policies=True)


def cmd_compare_accel(args) -> str:
    exp = load_experiment(args.config)
    if exp.solver != "gdice":
        raise ConfigError("compare-accel needs solver 'gdice'")
    schemes = exp.schemes or [dict(s) for s in DEFAULT_SCHEMES]
    cells = [Cell("gdice", exp.domain, exp.solver_config, sch, None, s,
                  exp.final_eval_traj, exp.record_time)
             for sch in schemes for s in _seeds(args.seed_list, exp)]
    results = run_cells(cells, args.jobs)
    return _finish(out_dir(args.out, exp), "compare_accel", results, save_policies=False)


def cmd_sweep_discretization(args) -> str:
    exp = load_experiment(args.config)
    if exp.solver != "gdice":
        raise ConfigError("sweep-discretization needs solver 'gdice' for the discrete cells")
    seeds = _seeds(args.seed_list, exp)
    d_values = exp.d_values or list(range(2, 11))
    block = dict(exp.solver_config)
    block.setdefault("acceleration", {"kind": "max-entropy-injection", "alpha_ei": 0.03})
    cells = [Cell("gdice", exp.domain, block, None, d, s, exp.final_eval_traj, exp.record_time)
             for d in d_values for s in seeds]
    cells += [Cell("epscko", exp.domain, exp.epscko_config, None, None, s,
                   exp.final_eval_traj, exp.record_time) for s in seeds]
    results = run_cells(cells, args.jobs)
    return _finish(out_dir(args.out, exp), "sweep", results, save_policies=False)


def cmd_evaluate(args) -> str:
    try:
        fmt, joint = load_policy(args.policy)
    except FileNotFoundError:
        raise ConfigError(f"policy file not found: {args.policy}") from None
    domain = build_domain(load_domain_block(args.domain, Path.cwd()))
    if len(joint) != domain.num_robots:
        raise ConfigError(f"policy has {len(joint)} robots, domain has {domain.num_robots}")
    for i, p in enumerate(joint):
        if p.n_mas != domain.num_mas[i]:
            raise ConfigError(f"robot {i}: policy has {p.n_mas} MAs, domain has {domain.num_mas[i]}")
        grid = getattr(p, "grid", None)
        if grid is not None and grid.obs_dim != domain.obs_dim:
            raise ConfigError("policy grid and domain observation dimensions differ")
        for fn in getattr(p, "transitions", ()):
            if fn.n_basis and fn.basis.shape[1] != domain.obs_dim:
                raise ConfigError("policy kernel basis and domain observation dimensions differ")
    horizon = args.horizon if args.horizon is not None else getattr(domain, "horizon", None)
    if horizon is None:
        raise ConfigError("--horizon is required for this domain")
    value, err = evaluate(domain, joint, args.n_traj, horizon, args.seed)
    text = _csv_text(("policy", "format", "n_traj", "seed", "horizon", "value", "stderr"),
                     [[str(args.policy), fmt, str(args.n_traj), str(args.seed), str(horizon),
                       fmt_float(value), fmt_float(err)]])
    write_atomic(out_dir(args.out, None) / "evaluate.csv", text)
    return f"{value:.6f} +/- {err:.6f}\n"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="decsearch", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, helptext in (
            ("solve", cmd_solve, "run the configured solver for each seed"),
            ("compare-accel", cmd_compare_accel, "compare G-DICE acceleration schemes"),
            ("sweep-discretization", cmd_sweep_discretization,
             "G-DICE over discretization factors plus EPSCKO")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="experiment config (JSON)")
        p.add_argument("--seed-list", help="comma-separated seeds, overrides the config")
        p.add_argument("--out", help="output directory")
        p.add_argument("--jobs", type=int, default=1, help="worker processes")
        p.set_defaults(func=fn)
    p = sub.add_parser("evaluate", help="Monte Carlo value of a saved policy")
    p.add_argument("--policy", required=True)
    p.add_argument("--domain", required=True, help="domain config file (JSON)")
    p.add_argument("--n-traj", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--horizon", type=int)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "jobs", 1) < 1:
        print("decsearch: error: --jobs must be >= 1", file=sys.stderr)
        return 2
    if getattr(args, "n_traj", 1) < 1:
        print("decsearch: error: --n-traj must be >= 1", file=sys.stderr)
        return 2
    try:
        sys.stdout.write(args.func(args))
    except (ConfigError, PolicyFormatError) as exc:
        print(f"decsearch: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"decsearch: error: {exc}", file=sys.stderr)
        return 1
    return 0
