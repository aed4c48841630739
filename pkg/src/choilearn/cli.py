"""Batch experiment runner.

Subcommands: ``run`` (one experiment to a JSON report plus a CSV summary
row), ``sweep`` (a seeded grid to one CSV row per point), and ``validate``
(config schema check only).  Everything is deterministic given the config
and root seed; every output file embeds the tool version, a hash of the
resolved config, and the root seed.  See ``CONFIG_DOC`` for the schema.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import itertools
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .densesim import block_encoding_dilation, hamiltonian_matrix, pseudo_choi_exact, spectral_norm
from .errors import ConfigError, InternalInvariantError, PreconditionError
from .learner import BudgetSpec, find_coeff_clifford, find_coeff_pauli, find_coeff_unitary, shadow_sample_count, unitary_query_budget
from .paulis import HamiltonianModel, parse_pauli, random_model
from .rng import DOMAIN_SWEEP, _mix, substream
from .robustness import UnderspecifiedInstance, run_noisy, run_underspecified
from .shadows import ExactStateSource

CONFIG_DOC = """\
Config is a single JSON document:

{
  "mode": "exact" | "unitary" | "robustness" | "sweep",
  "seed": 0,                       # root seed (the --seed flag overrides)
  "model": {"n": 2, "terms": ["XI", "IZ"], "coeffs": [0.3, 0.4]}
        or {"generator": {"n": 2, "k": 2, "m": 6, "coeff_bound": 1.0, "seed": 7}},
  "flavor": "clifford" | "pauli",            # default "clifford"
  "budget": {
    "epsilon": 0.2, "delta": 0.1, "const": 1.0,
    "t": null,                    # unitary paths; default 1/(2*norm_bound)
    "eps_b": 0.0,                 # injected block-encoding error
    "n_override": null,           # explicit snapshot count
    "k_groups": null,             # median-of-means group count
    "dense_limit": false,         # infinite-shadow shortcut (exact expectations)
    "norm_bound": null            # ||H|| bound; default sum |c_m|
  },
  "robustness": {                  # mode "robustness" only
    "hidden_term": "ZZ", "chi": 0.5,        # hidden-term experiment, or
    "omega": 0.02, "perp_kind": "maximally-mixed"   # noisy-preparation experiment
  },
  "sweep": {                       # mode "sweep" only
    "base_mode": "exact" | "unitary" | "robustness",
    "axes": {"n_snapshots": [...], "t": [...], "epsilon": [...], "omega": [...]},
    "repeats": 1
  },
  "output": {"dir": "choi_learn_out"}
}
"""

_TOP_KEYS = {"mode", "seed", "model", "flavor", "budget", "robustness", "sweep", "output"}
_BUDGET_KEYS = {"epsilon", "delta", "const", "t", "eps_b", "n_override", "k_groups", "dense_limit", "norm_bound"}
_ROBUST_KEYS = {"hidden_term", "chi", "omega", "perp_kind"}
_SWEEP_KEYS = {"base_mode", "axes", "repeats"}
_AXIS_KEYS = {"n_snapshots", "t", "epsilon", "omega"}

EXIT_CONFIG = 2
EXIT_PRECONDITION = 3
EXIT_INTERNAL = 4


def _require(cond, message):
    if not cond:
        raise ConfigError(message)


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    return validate_config(doc)


def validate_config(doc: dict) -> dict:
    _require(isinstance(doc, dict), "config must be a JSON object")
    unknown = set(doc) - _TOP_KEYS
    _require(not unknown, f"unknown config keys: {sorted(unknown)}")
    mode = doc.get("mode")
    _require(mode in ("exact", "unitary", "robustness", "sweep"), f"invalid mode {mode!r}")
    _require("model" in doc, "config needs a model")
    flavor = doc.get("flavor", "clifford")
    _require(flavor in ("clifford", "pauli"), f"invalid flavor {flavor!r}")
    budget = doc.get("budget", {})
    _require(isinstance(budget, dict), "budget must be an object")
    unknown = set(budget) - _BUDGET_KEYS
    _require(not unknown, f"unknown budget keys: {sorted(unknown)}")
    if mode == "robustness":
        rb = doc.get("robustness", {})
        _require(isinstance(rb, dict), "robustness must be an object")
        unknown = set(rb) - _ROBUST_KEYS
        _require(not unknown, f"unknown robustness keys: {sorted(unknown)}")
        has_hidden = "hidden_term" in rb
        has_omega = float(rb.get("omega", 0.0)) > 0.0
        _require(has_hidden or has_omega, "robustness mode needs hidden_term or omega > 0")
        _require(not (has_hidden and has_omega), "choose hidden_term or omega, not both")
        if has_hidden:
            _require("chi" in rb, "hidden_term needs chi")
    if mode == "sweep":
        sw = doc.get("sweep")
        _require(isinstance(sw, dict), "sweep mode needs a sweep object")
        unknown = set(sw) - _SWEEP_KEYS
        _require(not unknown, f"unknown sweep keys: {sorted(unknown)}")
        _require(sw.get("base_mode") in ("exact", "unitary", "robustness"),
                 "sweep.base_mode must be exact, unitary or robustness")
        axes = sw.get("axes", {})
        _require(isinstance(axes, dict) and axes, "sweep.axes must be a non-empty object")
        unknown = set(axes) - _AXIS_KEYS
        _require(not unknown, f"unknown sweep axes: {sorted(unknown)}")
        for name, vals in axes.items():
            _require(isinstance(vals, list) and vals, f"sweep axis {name} must be a non-empty list")
    _require(_resolve_model(doc) is not None, "model did not resolve")
    return doc


def _resolve_model(doc: dict) -> HamiltonianModel:
    payload = doc["model"]
    _require(isinstance(payload, dict), "model must be an object")
    if "generator" in payload:
        gen = dict(payload["generator"])
        try:
            return random_model(
                int(gen["n"]), int(gen["k"]), int(gen["m"]), float(gen["coeff_bound"]),
                int(gen["seed"]), max_intersections=gen.get("max_intersections"),
            )
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad model generator: {exc}") from exc
    try:
        n = int(payload["n"])
        terms = tuple(parse_pauli(t, n) for t in payload["terms"])
        return HamiltonianModel(n, terms, np.array(payload["coeffs"], dtype=float))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad inline model: {exc}") from exc


def config_hash(doc: dict) -> str:
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _resolve_t(budget: dict, model: HamiltonianModel) -> float:
    norm_bound = budget.get("norm_bound")
    if norm_bound is None:
        norm_bound = model.one_norm()
    t = budget.get("t")
    if t is None:
        t = 1.0 / (2.0 * norm_bound) if norm_bound > 0 else 1.0
    t = float(t)
    true_norm = spectral_norm(hamiltonian_matrix(model))
    if true_norm > 0 and t > 1.0 / (2.0 * true_norm) * (1 + 1e-12):
        raise PreconditionError(f"t={t} exceeds 1/(2||H||)={1.0 / (2.0 * true_norm):.6g}")
    return t


def _snapshot_budget(budget: dict, model: HamiltonianModel, flavor: str, locality: int) -> int:
    if budget.get("n_override") is not None:
        return int(budget["n_override"])
    budget_spec = BudgetSpec.from_model(
        model,
        float(budget.get("epsilon", 0.2)),
        float(budget.get("delta", 0.1)),
        k=locality,
        const=float(budget.get("const", 1.0)),
    )
    return shadow_sample_count(budget_spec, flavor)


def _experiment_report(doc: dict, seed: int):
    """Run one non-sweep experiment; returns (report, model)."""
    mode = doc["mode"]
    model = _resolve_model(doc)
    flavor = doc.get("flavor", "clifford")
    budget = doc.get("budget", {})
    dense = bool(budget.get("dense_limit", False))
    k_groups = budget.get("k_groups")
    locality = max(t.weight for t in model.terms)
    if mode == "exact":
        source = ExactStateSource(pseudo_choi_exact(model).state)
        n_snap = 0 if dense else _snapshot_budget(budget, model, flavor, locality)
        recover = find_coeff_clifford if flavor == "clifford" else find_coeff_pauli
        report = recover(source, model.terms, n_snap, seed, k_groups=k_groups, dense_limit=dense)
    elif mode == "unitary":
        t = _resolve_t(budget, model)
        be = block_encoding_dilation(model, t, float(budget.get("eps_b", 0.0)), seed=seed)
        if budget.get("n_override") is not None:
            n_success = int(budget["n_override"])
        elif dense:
            n_success = 1
        else:
            budget_spec = BudgetSpec.from_model(
                model, float(budget.get("epsilon", 0.2)), float(budget.get("delta", 0.1)),
                t=t, k=locality, const=float(budget.get("const", 1.0)),
            )
            n_success = unitary_query_budget(budget_spec).n_success
        report = find_coeff_unitary(
            be, be.delta, model.terms, n_success, seed,
            flavor=flavor, k_groups=k_groups, dense_limit=dense,
        )
    elif mode == "robustness":
        rb = doc.get("robustness", {})
        if "hidden_term" in rb:
            inst = UnderspecifiedInstance(
                model, parse_pauli(rb["hidden_term"], model.n), float(rb["chi"])
            )
            full = inst.full_model()
            t = _resolve_t(budget, full)
            n_success = int(budget["n_override"]) if budget.get("n_override") is not None else (
                1 if dense else _snapshot_budget(budget, full, flavor, max(t2.weight for t2 in full.terms))
            )
            report = run_underspecified(
                inst, seed, t=t, n_success=n_success, flavor=flavor,
                k_groups=k_groups, dense_limit=dense, eps_b=float(budget.get("eps_b", 0.0)),
            )
            return report, model
        t = _resolve_t(budget, model)
        be = block_encoding_dilation(model, t, float(budget.get("eps_b", 0.0)), seed=seed)
        n_snap = int(budget["n_override"]) if budget.get("n_override") is not None else (
            0 if dense else _snapshot_budget(budget, model, flavor, locality)
        )
        report = run_noisy(
            be, model.terms, float(rb.get("omega", 0.0)), n_snap, seed,
            flavor=flavor, k_groups=k_groups, dense_limit=dense,
            perp_kind=rb.get("perp_kind", "maximally-mixed"),
        )
    else:
        raise ConfigError(f"mode {mode!r} is not a single experiment")
    report.attach_truth(model.coeffs)
    return report, model


def _provenance(doc: dict, seed: int) -> dict:
    return {
        "tool_version": __version__,
        "config_hash": config_hash(doc),
        "root_seed": seed,
    }


def _atomic_write(path: str, text: str):
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _fmt(value) -> str:
    """Full round-trip precision for CSV cells."""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: str, fieldnames: list[str], rows: list[dict]):
    lines = [",".join(fieldnames)]
    for row in rows:
        lines.append(",".join(_fmt(row.get(k, "")) for k in fieldnames))
    _atomic_write(path, "\n".join(lines) + "\n")


def run_experiment(doc: dict, seed: int, out_dir: str) -> int:
    os.makedirs(out_dir, exist_ok=True)
    report, model = _experiment_report(doc, seed)
    payload = {
        **_provenance(doc, seed),
        "config": doc,
        "model": json.loads(model.to_json()),
        "report": report.to_dict(),
    }
    _atomic_write(os.path.join(out_dir, "report.json"), json.dumps(payload, sort_keys=True) + "\n")
    row = report.csv_row()
    row.update(_provenance(doc, seed))
    fields = list(row.keys())
    _write_csv(os.path.join(out_dir, "summary.csv"), fields, [row])
    print(json.dumps({"status": "ok", "out": out_dir, **_provenance(doc, seed)}, sort_keys=True))
    return 0


def _sweep_points(doc: dict):
    axes = doc["sweep"]["axes"]
    names = sorted(axes)
    repeats = int(doc["sweep"].get("repeats", 1))
    for idx, values in enumerate(itertools.product(*(axes[k] for k in names))):
        for rep in range(repeats):
            yield idx, rep, dict(zip(names, values))


def _point_config(doc: dict, overrides: dict) -> dict:
    point = json.loads(json.dumps(doc))  # deep copy
    point["mode"] = doc["sweep"]["base_mode"]
    point.pop("sweep", None)
    budget = point.setdefault("budget", {})
    if "n_snapshots" in overrides:
        budget["n_override"] = int(overrides["n_snapshots"])
    if "t" in overrides:
        budget["t"] = float(overrides["t"])
    if "epsilon" in overrides:
        budget["epsilon"] = float(overrides["epsilon"])
    if "omega" in overrides:
        point.setdefault("robustness", {})["omega"] = float(overrides["omega"])
    return point


def _sweep_worker(args):
    doc, overrides, seed, idx, rep = args
    point = _point_config(doc, overrides)
    row = {f"axis_{k}": v for k, v in overrides.items()}
    row.update({"point": idx, "repeat": rep, "seed": seed})
    start = time.perf_counter()
    try:
        report, _ = _experiment_report(point, seed)
        row.update(
            {
                "status": "ok",
                "l2_error": report.l2_error,
                "linf_error": report.linf_error,
                "n_samples": report.samples_used,
                "n_queries": report.queries_used,
            }
        )
    except (PreconditionError, ConfigError) as exc:
        row.update({"status": f"error: {exc}", "l2_error": "", "linf_error": "",
                    "n_samples": "", "n_queries": ""})
    row["wall_ms"] = round(1000.0 * (time.perf_counter() - start), 3)
    return row


def run_sweep(doc: dict, seed: int, out_dir: str, threads: int = 1) -> int:
    os.makedirs(out_dir, exist_ok=True)
    tasks = []
    for idx, rep, overrides in _sweep_points(doc):
        point_seed = _mix(_mix(_mix(seed, DOMAIN_SWEEP), idx), rep)
        tasks.append((doc, overrides, point_seed, idx, rep))
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_sweep_worker, tasks))
    else:
        rows = [_sweep_worker(t) for t in tasks]
    prov = _provenance(doc, seed)
    for row in rows:
        row.update(prov)
    axis_names = sorted(doc["sweep"]["axes"])
    fields = [f"axis_{k}" for k in axis_names] + [
        "point", "repeat", "status", "l2_error", "linf_error",
        "n_samples", "n_queries", "wall_ms", "seed",
        "tool_version", "config_hash", "root_seed",
    ]
    _write_csv(os.path.join(out_dir, "sweep.csv"), fields, rows)
    print(json.dumps({"status": "ok", "points": len(rows), "out": out_dir, **prov}, sort_keys=True))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="choi-learn",
        description="Coefficient-learning experiments on encoded-Hamiltonian states",
        epilog=CONFIG_DOC,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", "sweep", "validate"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        if name != "validate":
            p.add_argument("--seed", type=int, default=None)
            p.add_argument("--threads", type=int, default=1)
            p.add_argument("--out", default="choi_learn_out")
    args = parser.parse_args(argv)
    try:
        doc = load_config(args.config)
        if args.command == "validate":
            print(json.dumps({"status": "valid", "config_hash": config_hash(doc)}, sort_keys=True))
            return 0
        seed = args.seed if args.seed is not None else int(doc.get("seed", 0))
        if args.command == "run":
            if doc["mode"] == "sweep":
                raise ConfigError("mode sweep requires the sweep subcommand")
            return run_experiment(doc, seed, args.out)
        if doc["mode"] != "sweep":
            raise ConfigError("sweep subcommand requires mode sweep")
        return run_sweep(doc, seed, args.out, threads=args.threads)
    except ConfigError as exc:
        print(json.dumps({"error": {"type": "config", "message": str(exc), "exit_code": EXIT_CONFIG}}))
        return EXIT_CONFIG
    except PreconditionError as exc:
        print(json.dumps({"error": {"type": "precondition", "message": str(exc), "exit_code": EXIT_PRECONDITION}}))
        return EXIT_PRECONDITION
    except InternalInvariantError as exc:
        print(json.dumps({"error": {"type": "internal", "message": str(exc), "exit_code": EXIT_INTERNAL}}))
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
