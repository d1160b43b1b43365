"""Experiment runner.

Every subcommand resolves its parameters as defaults < ``--config`` document <
command-line flags, validates them, runs, and writes into ``--out-dir``:

* ``samples.csv``  (``index,x_1..x_d``; sampling commands only)
* ``metrics.json`` (the result record)
* ``manifest.json`` (the fully resolved config; ``quadtilt run --config
  manifest.json`` replays the run bit for bit)
* ``trace.csv``    (optional per-step or per-trial trace)

Exit status: 0 success, 1 failed acceptance criteria, 2 invalid input,
3 refused because of a budget cap.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .base_dist import FiniteAtomBase, GaussianMixtureBase, base_from_dict, score_oracle
from .budget import Budget, BudgetExceeded
from .diffusion_sampler import default_schedule, unadjusted_sample_batch
from .hardness_demos import (
    MaxCutInstance,
    PartitionInstance,
    gibbs_chain,
    gibbs_flip_probability,
    laplacian,
    maxcut_optimal_mass,
    partition_decode,
    partition_mass,
    random_graph,
)
from .linear_tilt import tilted_score_fn
from .normalization import estimate_normalization
from .psd_tilt import PsdTiltSpec, psd_tilt_sample_batch
from .reference_oracle import SampleSet, empirical_w2, exact_tv, exact_w2_discrete, sign_pm

log = logging.getLogger("quadtilt")

EXIT_OK, EXIT_FAILED, EXIT_INVALID, EXIT_BUDGET = 0, 1, 2, 3
SEED_LIMIT = 2**64

COMMANDS = (
    "sample-base",
    "sample-linear-tilt",
    "sample-psd-tilt",
    "estimate-z",
    "verify",
    "partition-demo",
    "maxcut-check",
    "gibbs-demo",
    "accept",
)

DEFAULTS: dict[str, dict[str, Any]] = {
    "sample-base": {"base": None, "epsilon": 0.1, "num_samples": 512, "schedule": {}},
    "sample-linear-tilt": {"base": None, "v": None, "epsilon": 0.1, "num_samples": 512, "schedule": {}},
    "sample-psd-tilt": {"base": None, "L": None, "D": None, "eps_final": 0.3, "num_samples": 512},
    "estimate-z": {"base": None, "v": None, "epsilon": 0.1, "delta": 0.05},
    "verify": {"a": None, "b": None, "tolerance": 0.0, "floor": 0.0},
    "partition-demo": {"w": None, "dim": 6, "max_weight": 10, "trials": 100, "draws_per_trial": 1, "rule": "first", "trace": False},
    "maxcut-check": {"edges": None, "dim": 5, "edge_prob": 0.5},
    "gibbs-demo": {
        "lam": 4.0,
        "u": [1.0],
        "steps": 10_000,
        "mode": "atoms",
        "variance": 0.01,
        "psd_draws": 0,
        "eps_final": 0.3,
        "trace": False,
    },
    "accept": {"only": []},
}
BUDGETED = {"sample-base", "sample-linear-tilt", "sample-psd-tilt", "estimate-z", "gibbs-demo"}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending parameter."""


# ---------------------------------------------------------------------------
# config resolution
# ---------------------------------------------------------------------------


def _read_json(path: Path, what: str) -> dict:
    if not path.is_file():
        raise ConfigError(f"{what}: file {str(path)!r} does not exist")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what}: {path} is not valid JSON ({exc})") from None


def _read_matrix(path: Path) -> list[list[float]]:
    if not path.is_file():
        raise ConfigError(f"L_file: file {str(path)!r} does not exist")
    rows = [line.split() for line in path.read_text().splitlines() if line.strip() and not line.startswith("#")]
    try:
        return [[float(x) for x in row] for row in rows]
    except ValueError as exc:
        raise ConfigError(f"L_file: {exc}") from None


def _resolve_base(cfg: dict, rel: Path) -> dict:
    if cfg.get("base_file"):
        doc = _read_json(rel / cfg.pop("base_file"), "base_file")
    else:
        doc = cfg.get("base")
        cfg.pop("base_file", None)
    if doc is None:
        raise ConfigError("base: no base given (use 'base' or 'base_file')")
    try:
        if "hypercube" in doc:
            spec = doc["hypercube"]
            spec = {"dim": spec} if isinstance(spec, int) else spec
            base = FiniteAtomBase.hypercube(int(spec["dim"]), tuple(spec.get("values", (-1.0, 1.0))))
        else:
            base = base_from_dict(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"base: {exc}") from None
    return base.to_dict()


def resolve_config(command: str, file_cfg: dict, overrides: dict, rel: Path) -> dict:
    """Merge defaults, the config document and flag overrides; inline referenced files."""
    cfg = json.loads(json.dumps(DEFAULTS[command]))
    for source in (file_cfg, overrides):
        for key, val in source.items():
            if key in ("command", "version"):
                continue
            if key == "schedule" and isinstance(val, dict):
                cfg.setdefault("schedule", {}).update(val)
            elif key == "budget" and isinstance(val, dict):
                cfg.setdefault("budget", {}).update(val)
            else:
                cfg[key] = val
    if "base" in cfg or "base_file" in cfg:
        cfg["base"] = _resolve_base(cfg, rel)
    if cfg.get("L_file"):
        cfg["L"] = _read_matrix(rel / cfg.pop("L_file"))
    cfg.pop("L_file", None)
    cap = cfg.setdefault("cap_samples", None)
    if cap is not None and (isinstance(cap, bool) or not isinstance(cap, int) or cap < 1):
        raise ConfigError(f"cap_samples: must be a positive integer, got {cap!r}")
    if command in BUDGETED:
        try:
            cfg["budget"] = Budget(**cfg.get("budget", {})).to_dict()
        except TypeError as exc:
            raise ConfigError(f"budget: {exc}") from None
        except ValueError as exc:
            raise ConfigError(f"budget: {exc}") from None
    for key in ("a", "b"):
        if command == "verify" and cfg.get(key) is not None:
            path = rel / cfg[key]
            if not path.is_file():
                raise ConfigError(f"{key}: file {str(path)!r} does not exist")
            cfg[key] = str(path.resolve())
    return cfg


def _tol(cfg: dict, key: str, upper: float = 1.0) -> float:
    val = cfg.get(key)
    if not isinstance(val, (int, float)) or not (0 < val < upper):
        raise ConfigError(f"{key}: must lie in (0, {upper}), got {val!r}")
    return float(val)


def _count(cfg: dict, key: str, minimum: int = 1) -> int:
    val = cfg.get(key)
    if isinstance(val, bool) or not isinstance(val, int) or val < minimum:
        raise ConfigError(f"{key}: must be an integer >= {minimum}, got {val!r}")
    return val


def _vector(cfg: dict, key: str, dim: int | None = None) -> np.ndarray:
    val = cfg.get(key)
    try:
        arr = np.asarray(val, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: not a numeric vector") from None
    if arr.ndim != 1 or not np.all(np.isfinite(arr)):
        raise ConfigError(f"{key}: must be a finite 1-D vector, got {val!r}")
    if dim is not None and len(arr) != dim:
        raise ConfigError(f"{key}: has length {len(arr)}, base dimension is {dim}")
    return arr


def _budget(cfg: dict) -> Budget:
    return Budget(**cfg["budget"])


def _base(cfg: dict):
    return base_from_dict(cfg["base"])


def _check_sample_cap(cfg: dict, n: int):
    cap = cfg.get("cap_samples")
    if cap is not None and n > cap:
        raise BudgetExceeded(f"num_samples={n} exceeds the sample cap {cap}")


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def write_samples(path: Path, samples: np.ndarray):
    """CSV ``index,x_1..x_d`` with shortest round-trip float formatting."""
    samples = np.atleast_2d(samples)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index"] + [f"x_{j + 1}" for j in range(samples.shape[1])])
        for i, row in enumerate(samples):
            w.writerow([i] + [repr(float(x)) for x in row])


def read_samples(path: Path) -> np.ndarray:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2 or rows[0][0] != "index":
        raise ConfigError(f"{path}: not a samples CSV (expected header 'index,x_1,...')")
    return np.array([[float(x) for x in r[1:]] for r in rows[1:]])


def _write_json(path: Path, doc):
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _write_trace(path: Path, header: list[str], rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(x) if isinstance(x, float) else x for x in row])


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _schedule(cfg: dict, dim: int, norm_bound: float):
    eps = _tol(cfg, "epsilon")
    sched = default_schedule(eps, dim, norm_bound, max_steps=cfg["budget"]["max_steps"])
    over = cfg.get("schedule") or {}
    unknown = set(over) - {"num_steps", "sigma_min", "sigma_max"}
    if unknown:
        raise ConfigError(f"schedule: unknown keys {sorted(unknown)}")
    try:
        sched = replace(sched, **over)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"schedule: {exc}") from None
    cfg["schedule"] = {"num_steps": sched.num_steps, "sigma_min": sched.sigma_min, "sigma_max": sched.sigma_max}
    return sched


def cmd_sample_base(cfg, seed, out):
    base = _base(cfg)
    n = _count(cfg, "num_samples")
    _check_sample_cap(cfg, n)
    sched = _schedule(cfg, base.dim, base.norm_bound)
    x = unadjusted_sample_batch(score_oracle(base), sched, n, np.random.default_rng(seed))
    write_samples(out / "samples.csv", x)
    return {"num_samples": n, "schedule": sched.to_dict(), "max_norm": float(np.max(np.linalg.norm(x, axis=1)))}


def cmd_sample_linear_tilt(cfg, seed, out):
    base = _base(cfg)
    v = _vector(cfg, "v", base.dim)
    n = _count(cfg, "num_samples")
    _check_sample_cap(cfg, n)
    sched = _schedule(cfg, base.dim, base.norm_bound)
    x = unadjusted_sample_batch(tilted_score_fn(score_oracle(base), v), sched, n, np.random.default_rng(seed))
    write_samples(out / "samples.csv", x)
    return {"num_samples": n, "schedule": sched.to_dict(), "max_norm": float(np.max(np.linalg.norm(x, axis=1)))}


def cmd_sample_psd_tilt(cfg, seed, out):
    base = _base(cfg)
    n = _count(cfg, "num_samples")
    _check_sample_cap(cfg, n)
    if cfg.get("L") is None:
        raise ConfigError("L: no factor matrix given (use 'L' or 'L_file')")
    try:
        L = np.atleast_2d(np.asarray(cfg["L"], dtype=float))
    except (TypeError, ValueError):
        raise ConfigError("L: not a numeric matrix") from None
    if L.ndim != 2 or L.shape[1] != base.dim:
        raise ConfigError(f"L: expected r x {base.dim} matrix, got shape {L.shape}")
    eps_final = _tol(cfg, "eps_final", 0.5)
    try:
        if isinstance(base, FiniteAtomBase):
            spec = PsdTiltSpec.for_base(base, L, eps_final, cfg.get("D"))
        else:
            if cfg.get("D") is None:
                raise ConfigError("D: required for Gaussian-mixture bases")
            spec = PsdTiltSpec(L, cfg["D"], max(1.0, base.norm_bound), eps_final)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"L/D/eps_final: {exc}") from None
    cfg["D"] = spec.D
    run = psd_tilt_sample_batch(score_oracle(base), spec, n, seed, _budget(cfg))
    write_samples(out / "samples.csv", run.samples)
    return {**run.diagnostics(), "rank": spec.rank, "spectral_norm": spec.spectral_norm, "num_samples": n}


def cmd_estimate_z(cfg, seed, out):
    base = _base(cfg)
    v = _vector(cfg, "v", base.dim)
    eps = _tol(cfg, "epsilon", 0.5)
    delta = _tol(cfg, "delta", 0.5)
    score = score_oracle(base)
    est = estimate_normalization(score, v, eps, delta, max(1.0, base.norm_bound), seed, _budget(cfg))
    return est.to_dict()


def _load_measure(path: str):
    p = Path(path)
    if p.suffix == ".json":
        base = base_from_dict(_read_json(p, "verify"))
        if not isinstance(base, FiniteAtomBase):
            raise ConfigError(f"{path}: only finite-atom bases can be compared")
        return base
    return SampleSet(read_samples(p))


def cmd_verify(cfg, seed, out):
    if cfg.get("a") is None or cfg.get("b") is None:
        raise ConfigError("a/b: verify needs two inputs (sample CSVs or base JSON files)")
    a, b = _load_measure(cfg["a"]), _load_measure(cfg["b"])
    tol, floor = float(cfg["tolerance"]), float(cfg["floor"])
    if tol < 0 or floor < 0:
        raise ConfigError("tolerance/floor: must be nonnegative")
    both_samples = isinstance(a, SampleSet) and isinstance(b, SampleSet)
    records = []
    if both_samples:
        res = empirical_w2(a, b)
        records.append({"metric": "w2", "value": res.value, "floor": floor, "sliced": res.sliced})
    else:
        records.append({"metric": "w2", "value": exact_w2_discrete(a, b), "floor": floor, "sliced": False})
        if not (isinstance(a, SampleSet) or isinstance(b, SampleSet)):
            records.append({"metric": "tv", "value": exact_tv(a, b), "floor": 0.0})
    for rec in records:
        rec["tolerance"] = tol
        rec["pass"] = bool(rec["value"] <= tol + rec["floor"] + 1e-12)
    return {"records": records, "pass": all(r["pass"] for r in records)}


def cmd_partition_demo(cfg, seed, out):
    # separate streams so replaying with the resolved w reproduces the draws
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    if cfg.get("w") is not None:
        w = cfg["w"]
    else:
        w = np.random.default_rng(np.random.SeedSequence([seed, 0])).integers(1, _count(cfg, "max_weight") + 1, size=_count(cfg, "dim")).tolist()
    try:
        inst = PartitionInstance(np.asarray(w))
    except ValueError as exc:
        raise ConfigError(f"w: {exc}") from None
    cfg["w"] = inst.w.tolist()
    trials = _count(cfg, "trials")
    k = _count(cfg, "draws_per_trial")
    if cfg["rule"] not in ("first", "any", "majority"):
        raise ConfigError(f"rule: unknown decode rule {cfg['rule']!r}")
    tilted = inst.tilted()
    mass = partition_mass(inst)
    decoded, rows = 0, []
    for t in range(trials):
        draws = tilted.sample(k, rng)
        yes = partition_decode(draws, inst.w, cfg["rule"])
        decoded += yes
        rows.append([t, int(sign_pm(draws[0]) @ inst.w), int(yes)])
    if cfg["trace"]:
        _write_trace(out / "trace.csv", ["trial", "first_residual", "decoded_yes"], rows)
    return {
        "w": inst.w.tolist(),
        "beta": inst.beta,
        "solution_mass": mass.value,
        "no_solution": mass.no_solution,
        "trials": trials,
        "decoded_yes_fraction": decoded / trials,
    }


def cmd_maxcut_check(cfg, seed, out):
    if cfg.get("edges") is not None:
        try:
            inst = MaxCutInstance(tuple(tuple(e) for e in cfg["edges"]), _count(cfg, "dim"))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"edges: {exc}") from None
    else:
        inst = random_graph(_count(cfg, "dim"), np.random.default_rng(seed), float(cfg["edge_prob"]))
    cfg["edges"] = [list(e) for e in inst.edges]
    if inst.dim > 20:
        raise BudgetExceeded(f"dim={inst.dim}: exhaustive check limited to 20 vertices")
    lap = laplacian(inst.edges, inst.dim)
    mismatches = 0
    best = 0
    for mask in range(2**inst.dim):
        x = np.array([(mask >> j) & 1 for j in range(inst.dim)], dtype=float)
        direct = sum(1 for a, b in inst.edges if x[a] != x[b])
        mismatches += float(x @ inst.A @ x) / inst.beta != direct
        best = max(best, direct)
    return {
        "dim": inst.dim,
        "edges": cfg["edges"],
        "beta": inst.beta,
        "subsets_checked": 2**inst.dim,
        "mismatches": mismatches,
        "min_eigenvalue": float(np.linalg.eigvalsh(inst.A).min()) if inst.dim else 0.0,
        "max_cut": best,
        "optimal_mass": maxcut_optimal_mass(inst),
        "laplacian_trace": int(np.trace(lap)),
    }


def cmd_gibbs_demo(cfg, seed, out):
    u = _vector(cfg, "u")
    lam = float(cfg["lam"])
    if lam < 0:
        raise ConfigError(f"lam: must be nonnegative, got {lam}")
    if cfg["mode"] not in ("atoms", "mixture"):
        raise ConfigError(f"mode: must be 'atoms' or 'mixture', got {cfg['mode']!r}")
    steps = _count(cfg, "steps")
    summary = gibbs_chain(lam, u, steps, seed, mode=cfg["mode"], variance=float(cfg["variance"]), keep_trace=cfg["trace"])
    if cfg["trace"]:
        _write_trace(out / "trace.csv", ["step", "z", "u_dot_x"], ([k, float(z), float(p)] for k, (z, p) in enumerate(summary.trace)))
    unorm = float(np.linalg.norm(u))
    rec = {**summary.to_dict(), "steps": steps}
    if cfg["mode"] == "atoms":
        rec["expected_flips"] = steps * gibbs_flip_probability(lam, unorm)
    n_psd = _count(cfg, "psd_draws", minimum=0)
    if n_psd:
        _check_sample_cap(cfg, n_psd)
        base = FiniteAtomBase.uniform(np.vstack([-u, u]))
        spec = PsdTiltSpec.for_base(base, math.sqrt(2 * lam) * u[None, :], _tol(cfg, "eps_final", 0.5))
        run = psd_tilt_sample_batch(score_oracle(base), spec, n_psd, seed, _budget(cfg))
        write_samples(out / "samples.csv", run.samples)
        rec["psd_positive_fraction"] = float(np.mean(run.samples @ u > 0))
        rec["psd"] = run.diagnostics()
    return rec


def cmd_accept(cfg, seed, out):
    from .acceptance import run_all

    only = [int(i) for i in cfg.get("only") or []]
    results = run_all(only or None, stream=sys.stdout)
    return {
        "criteria": [
            {"number": r.number, "name": r.name, "pass": r.passed, "detail": r.detail, "seconds": r.seconds}
            for r in results
        ],
        "pass": all(r.passed for r in results),
    }


HANDLERS = {
    "sample-base": cmd_sample_base,
    "sample-linear-tilt": cmd_sample_linear_tilt,
    "sample-psd-tilt": cmd_sample_psd_tilt,
    "estimate-z": cmd_estimate_z,
    "verify": cmd_verify,
    "partition-demo": cmd_partition_demo,
    "maxcut-check": cmd_maxcut_check,
    "gibbs-demo": cmd_gibbs_demo,
    "accept": cmd_accept,
}


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(",", " ").split()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="64-bit run seed (default 0)")
    common.add_argument("--out-dir", default=argparse.SUPPRESS, help="output directory (default ./quadtilt-out)")
    common.add_argument("--config", default=argparse.SUPPRESS, help="JSON config or manifest document")
    common.add_argument("--cap-samples", type=int, default=argparse.SUPPRESS, help="refuse runs requesting more output samples than this")
    common.add_argument("--cap-grid", type=int, default=argparse.SUPPRESS, help="cap on auxiliary grid size")
    common.add_argument("--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(
        prog="quadtilt", description=__doc__.split("\n")[0], parents=[common], allow_abbrev=False
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        return sub.add_parser(name, parents=[common], help=help_text, allow_abbrev=False)

    def add_sampling(p, tilt: bool):
        p.add_argument("--base-file", help="base distribution JSON")
        p.add_argument("--epsilon", type=float)
        p.add_argument("--num-samples", type=int)
        p.add_argument("--num-steps", type=int, help="override the schedule's step count")
        p.add_argument("--sigma-min", type=float)
        p.add_argument("--sigma-max", type=float)
        if tilt:
            p.add_argument("--v", type=_floats, help="tilt vector, comma separated")

    add_sampling(add("sample-base", "draw from the base with the diffusion sampler"), tilt=False)
    add_sampling(add("sample-linear-tilt", "draw from a linear tilt"), tilt=True)

    p = add("sample-psd-tilt", "draw from a PSD quadratic tilt")
    p.add_argument("--base-file")
    p.add_argument("--L-file", dest="L_file", help="factor matrix, whitespace-separated rows")
    p.add_argument("--D", type=float, dest="D")
    p.add_argument("--eps-final", type=float)
    p.add_argument("--num-samples", type=int)

    p = add("estimate-z", "estimate a linear-tilt normalizing constant")
    p.add_argument("--base-file")
    p.add_argument("--v", type=_floats)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--delta", type=float)

    p = add("verify", "compare two sample CSVs or base JSON files")
    p.add_argument("a", nargs="?")
    p.add_argument("b", nargs="?")
    p.add_argument("--tolerance", type=float)
    p.add_argument("--floor", type=float)

    p = add("partition-demo", "PARTITION hardness construction")
    p.add_argument("--w", type=lambda s: [int(x) for x in _floats(s)])
    p.add_argument("--dim", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--rule", choices=["first", "any", "majority"])
    p.add_argument("--trace", action="store_true", default=None)

    p = add("maxcut-check", "MAX-CUT construction check")
    p.add_argument("--dim", type=int)
    p.add_argument("--edge-prob", type=float)

    p = add("gibbs-demo", "Gibbs metastability demo")
    p.add_argument("--lam", type=float)
    p.add_argument("--u", type=_floats)
    p.add_argument("--steps", type=int)
    p.add_argument("--mode", choices=["atoms", "mixture"])
    p.add_argument("--psd-draws", type=int)
    p.add_argument("--trace", action="store_true", default=None)

    p = add("accept", "run the acceptance suite")
    p.add_argument("--only", type=lambda s: [int(x) for x in s.split(",")], help="comma separated criterion numbers")

    add("run", "replay the command named in --config (e.g. a manifest)")
    return parser


_FLAG_KEYS = {
    "base_file", "epsilon", "num_samples", "v", "L_file", "D", "eps_final", "delta", "a", "b",
    "tolerance", "floor", "w", "dim", "trials", "rule", "trace", "edge_prob", "lam", "u", "steps",
    "mode", "psd_draws", "only",
}


def _overrides(ns: argparse.Namespace) -> dict:
    out = {k: v for k, v in vars(ns).items() if k in _FLAG_KEYS and v is not None}
    sched = {k: getattr(ns, k) for k in ("num_steps", "sigma_min", "sigma_max") if getattr(ns, k, None) is not None}
    if sched:
        out["schedule"] = sched
    budget = {}
    if getattr(ns, "cap_samples", None) is not None:
        out["cap_samples"] = ns.cap_samples
    if getattr(ns, "cap_grid", None) is not None:
        budget["max_grid"] = ns.cap_grid
    if budget:
        out["budget"] = budget
    return out


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(ns, "verbose", False) else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        file_cfg: dict = {}
        rel = Path.cwd()
        if getattr(ns, "config", None):
            cfg_path = Path(ns.config)
            file_cfg = _read_json(cfg_path, "config")
            if not isinstance(file_cfg, dict):
                raise ConfigError("config: top level must be an object")
            rel = cfg_path.resolve().parent
        command = ns.command
        if command == "run":
            command = file_cfg.get("command")
            if command not in HANDLERS:
                raise ConfigError(f"command: config names unknown command {command!r}")
        elif file_cfg.get("command") not in (None, command):
            raise ConfigError(f"command: config is for {file_cfg['command']!r}, not {command!r}")
        seed = getattr(ns, "seed", None)
        seed = file_cfg.get("seed", 0) if seed is None else seed
        if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < SEED_LIMIT:
            raise ConfigError(f"seed: must be an integer in [0, 2^64), got {seed!r}")
        out = Path(getattr(ns, "out_dir", None) or file_cfg.get("out_dir") or "quadtilt-out")
        cfg = resolve_config(command, file_cfg, _overrides(ns), rel)
        out.mkdir(parents=True, exist_ok=True)
        metrics = HANDLERS[command](cfg, seed, out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except BudgetExceeded as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID

    manifest = {"command": command, "seed": seed, "version": __version__, **cfg}
    _write_json(out / "metrics.json", {"command": command, "seed": seed, **metrics})
    _write_json(out / "manifest.json", manifest)
    if command != "accept":
        print(json.dumps(metrics, sort_keys=True))
    if command == "accept" and not metrics["pass"]:
        return EXIT_FAILED
    return EXIT_OK
