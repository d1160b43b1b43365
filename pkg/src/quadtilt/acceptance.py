"""Acceptance suite: every exit criterion as a runnable check.

Each criterion returns a :class:`CriterionResult`; ``run_all`` prints one
PASS/FAIL line per criterion. The pytest module and the ``accept`` CLI
subcommand both drive this file.
"""

from __future__ import annotations

import itertools
import json
import math
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .base_dist import (
    FiniteAtomBase,
    exact_linear_tilt,
    exact_quadratic_tilt,
    log_mgf,
    noised_log_density,
    noised_score,
    score_oracle,
)
from .budget import Budget
from .hardness_demos import (
    MaxCutInstance,
    PartitionInstance,
    gibbs_chain,
    gibbs_flip_probability,
    laplacian,
    partition_decode,
    partition_mass,
    random_graph,
)
from .linear_tilt import lin_tilt_sample_batch, tilted_score
from .normalization import estimate_normalization
from .psd_tilt import (
    PsdTiltSpec,
    build_grid,
    discretized_mixture_exact,
    grid_log_weights,
    psd_tilt_sample_batch,
)
from .reference_oracle import (
    SampleSet,
    empirical_w2,
    exact_tv,
    rounding_mass_bound,
    sampling_floor,
    tv_unnormalized_bound,
)

# Gibbs flip threshold at lam = 4, |u| = 1, 1e4 steps. Frozen from the exact
# per-step flip probability 3.588e-3 (35.9 expected flips, sd ~6) plus 4 sd.
GIBBS_FLIP_THRESHOLD = 60

# Instance shared by the linear-tilt and PSD criteria.
ATOMS_2D = np.array([[1.0, 0.0], [0.0, 0.8], [-0.6, -0.6], [0.3, -0.9]])
ATOM_WEIGHTS_2D = np.array([0.1, 0.2, 0.3, 0.4])
PSD_FACTORS = [np.array([[1.3, -0.9]]), np.array([[0.8, 1.4]]), np.array([[-1.5, -0.5]])]

EST_BUDGET = Budget(max_draws=12_000, estimation_steps=200)
PSD_BUDGET = Budget(max_draws=640, estimation_steps=100)


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float
    limit: float | None

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        lim = f" (limit {self.limit:.0f}s)" if self.limit else ""
        return f"[{status}] {self.number:2d}. {self.name}: {self.detail} [{self.seconds:.1f}s{lim}]"


class SupportLog:
    """Largest ``||x|| / radius`` seen over every sampler output in the suite."""

    def __init__(self):
        self.worst = 0.0
        self.count = 0

    def record(self, samples: np.ndarray, radius: float):
        ratio = float(np.max(np.linalg.norm(np.atleast_2d(samples), axis=1))) / radius
        self.worst = max(self.worst, ratio)
        self.count += len(np.atleast_2d(samples))


SUPPORT = SupportLog()


def base_2d() -> FiniteAtomBase:
    return FiniteAtomBase.from_weights(ATOMS_2D, ATOM_WEIGHTS_2D)


def random_atom_base(rng: np.random.Generator, max_atoms: int = 8, max_dim: int = 4) -> FiniteAtomBase:
    d = int(rng.integers(1, max_dim + 1))
    k = int(rng.integers(1, max_atoms + 1))
    locs = rng.standard_normal((k, d))
    weights = rng.dirichlet(np.ones(k))
    return FiniteAtomBase.from_weights(locs, np.maximum(weights, 1e-6))


def random_in_ball(rng: np.random.Generator, d: int, radius: float) -> np.ndarray:
    x = rng.standard_normal(d)
    return x / np.linalg.norm(x) * radius * rng.uniform() ** (1.0 / d)


# ---------------------------------------------------------------------------
# criteria
# ---------------------------------------------------------------------------


def crit_tilted_score_identity():
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(100):
        base = random_atom_base(rng)
        v = random_in_ball(rng, base.dim, 3.0)
        sigma = rng.uniform(0.05, 0.95)
        x = random_in_ball(rng, base.dim, 2 * base.norm_bound)
        got = tilted_score(score_oracle(base), v, sigma, x)
        want = noised_score(exact_linear_tilt(base, v), sigma, x)
        worst = max(worst, float(np.max(np.abs(got - want))))
    return worst <= 1e-9, f"max error {worst:.2e} (tol 1e-9)"


def crit_score_finite_difference():
    rng = np.random.default_rng(2)
    h = 1e-5
    worst = 0.0
    for _ in range(100):
        base = random_atom_base(rng, max_dim=3)
        sigma = rng.uniform(0.05, 0.95)
        x = random_in_ball(rng, base.dim, 2 * base.norm_bound)
        fd = np.array(
            [
                (noised_log_density(base, sigma, x + h * e) - noised_log_density(base, sigma, x - h * e)) / (2 * h)
                for e in np.eye(base.dim)
            ]
        )
        worst = max(worst, float(np.max(np.abs(fd - noised_score(base, sigma, x)))))
    return worst <= 1e-6, f"max error {worst:.2e} (tol 1e-6, h=1e-5)"


def crit_normalization_calibration():
    base = FiniteAtomBase.hypercube(4)
    score = score_oracle(base)
    rng = np.random.default_rng(3)
    good = 0
    errs = []
    limited = False
    for trial in range(20):
        v = random_in_ball(rng, 4, 1.5)
        est = estimate_normalization(score, v, 0.1, 0.05, base.norm_bound, seed=trial, budget=EST_BUDGET)
        truth = float(np.sum(np.log(np.cosh(v))))
        err = abs(math.expm1(est.log_value - truth))
        errs.append(err)
        good += err <= 0.1
        limited |= est.budget_limited
    return good >= 18, f"{good}/20 within 10% (max rel err {max(errs):.3f}, budget_limited={limited})"


def crit_linear_tilt_accuracy():
    base = base_2d()
    score = score_oracle(base)
    rng = np.random.default_rng(4)
    ok = 0
    rows = []
    for seed in range(5):
        v = random_in_ball(rng, 2, 2.0)
        target = exact_linear_tilt(base, v)
        x = lin_tilt_sample_batch(score, v, 0.05, base.norm_bound, 512, seed)
        SUPPORT.record(x, base.norm_bound)
        ref = target.sample(512, np.random.default_rng(1000 + seed))
        w2 = empirical_w2(SampleSet(x), SampleSet(ref)).value
        floor = sampling_floor(target.sample, 512, seed)
        ok += w2 <= 0.05 + floor
        rows.append(f"{w2:.3f}<={0.05 + floor:.3f}")
    return ok >= 4, f"{ok}/5 seeds pass ({', '.join(rows)})"


def _psd_spec(L) -> tuple[FiniteAtomBase, PsdTiltSpec]:
    base = base_2d()
    return base, PsdTiltSpec.for_base(base, L, 0.3)


def crit_psd_end_to_end():
    base, spec = _psd_spec(PSD_FACTORS[0])
    assert spec.D <= 2
    score = score_oracle(base)
    target = exact_quadratic_tilt(base, spec.quadratic_form)
    R = spec.D + 2 * math.sqrt(1) + 2 * math.sqrt(math.log(54 / 0.3))
    gamma = 0.3 / (54 * spec.D)
    ok = 0
    rows = []
    diag_ok = True
    limited = False
    for seed in range(5):
        run = psd_tilt_sample_batch(score, spec, 512, seed, PSD_BUDGET)
        SUPPORT.record(run.samples, spec.norm_bound)
        diag = run.diagnostics()
        diag_ok &= diag["R"] == R and diag["gamma"] == gamma
        diag_ok &= diag["grid_size"] == int(np.sum(np.abs(np.arange(-math.ceil(R / gamma), math.ceil(R / gamma) + 1) * gamma) <= R))
        limited |= diag["budget_limited"]
        ref = target.sample(512, np.random.default_rng(2000 + seed))
        w2 = empirical_w2(SampleSet(run.samples), SampleSet(ref)).value
        floor = sampling_floor(target.sample, 512, 100 + seed)
        ok += w2 <= 0.3 + floor
        rows.append(f"{w2:.3f}<={0.3 + floor:.3f}")
    detail = f"{ok}/5 seeds pass ({', '.join(rows)}); grid diagnostics exact={diag_ok}; budget_limited={limited}"
    return ok >= 4 and diag_ok, detail


def crit_oracle_mode_decomposition():
    worst = 0.0
    bound = None
    for L in PSD_FACTORS:
        base, spec = _psd_spec(L)
        grid = build_grid(spec)
        eps = spec.eps_final**2 / (162 * spec.norm_bound)
        bound = 18 * eps
        q = discretized_mixture_exact(base, spec, grid)
        target = exact_quadratic_tilt(base, spec.quadratic_form)
        tv = exact_tv(q, target)
        # the oracle-mode grid weights must induce the same x-marginal
        weights = grid_log_weights(None, spec, grid, 0, log_normalizer=lambda V, b=base: log_mgf(b, V))
        logits = base.log_weights[None, :] + (grid.points @ spec.L) @ base.locations.T
        cond = np.exp(logits - logsumexp(logits, axis=1, keepdims=True))
        marginal = weights.weights @ cond
        tv = max(tv, 0.5 * float(np.sum(np.abs(marginal - target.weights))))
        worst = max(worst, tv)
    return worst <= bound, f"max TV {worst:.2e} <= 18*eps = {bound:.2e}"


def _yes_instance(rng, d):
    while True:
        w = rng.integers(1, 11, size=d)
        inst = PartitionInstance(w)
        if inst.solutions_mask().any():
            return inst


def crit_partition_mass():
    rng = np.random.default_rng(7)
    worst = 1.0
    for i in range(200):
        inst = _yes_instance(rng, (4, 6, 8)[i % 3])
        worst = min(worst, partition_mass(inst).value)
    return worst >= 200 / 201, f"min q_w(S_w) = {worst:.12f} >= 200/201"


def crit_rounding_lemma():
    rng = np.random.default_rng(8)
    violations = 0
    for _ in range(200):
        d = int(rng.integers(1, 7))
        cube = np.array(list(itertools.product((-1.0, 1.0), repeat=d)))
        support = cube[rng.random(len(cube)) < 0.5]
        if len(support) == 0:
            support = cube[:1]
        mu = FiniteAtomBase.from_weights(support, rng.dirichlet(np.ones(len(support))) + 1e-9)
        n = int(rng.integers(1, 41))
        scale = rng.choice([0.05, 0.3, 1.0, 3.0])
        nu = cube[rng.integers(len(cube), size=n)] + scale * rng.standard_normal((n, d))
        S = cube[rng.random(len(cube)) < 0.5]
        violations += not rounding_mass_bound(mu, SampleSet(nu), S).holds
    return violations == 0, f"{violations} violations in 200 triples"


def crit_partition_decoder():
    rng = np.random.default_rng(9)
    yes = 0
    for trial in range(100):
        inst = _yes_instance(rng, (4, 6, 8)[trial % 3])
        draw = inst.tilted().sample(1, np.random.default_rng(trial))
        yes += partition_decode(draw, inst.w)
    no_wrong = 0
    n_no = 0
    while n_no < 100:
        d = (4, 6, 8)[n_no % 3]
        w = rng.integers(1, 11, size=d)
        inst = PartitionInstance(w)
        if inst.solutions_mask().any():
            continue
        draws = inst.tilted().sample(20, np.random.default_rng(500 + n_no))
        no_wrong += partition_decode(draws, w, rule="any")
        n_no += 1
    return yes >= 90 and no_wrong == 0, f"YES decoded {yes}/100; NO instances decoded YES {no_wrong}/100"


def crit_maxcut_construction():
    rng = np.random.default_rng(10)
    mismatches = 0
    min_eig = np.inf
    for _ in range(50):
        d = int(rng.integers(1, 6))
        inst = random_graph(d, rng)
        min_eig = min(min_eig, float(np.linalg.eigvalsh(inst.A).min()))
        lap = laplacian(inst.edges, d)
        beta = d + 100
        for bits in itertools.product((0, 1), repeat=d):
            x = np.array(bits, dtype=np.int64)
            direct = sum(1 for a, b in inst.edges if x[a] != x[b])
            quad_int = int(x @ (beta * lap) @ x)
            from_float = float(x @ inst.A @ x) / inst.beta
            mismatches += quad_int % beta != 0 or quad_int // beta != direct or from_float != direct
    return mismatches == 0 and min_eig >= -1e-9, f"{mismatches} mismatches; min eigenvalue {min_eig:.2e}"


def crit_gibbs_metastability():
    u = np.array([0.6, 0.8])
    summary = gibbs_chain(4.0, u, 10_000, seed=11)
    expected = 10_000 * gibbs_flip_probability(4.0)
    base = FiniteAtomBase.uniform(np.vstack([-u, u]))
    spec = PsdTiltSpec.for_base(base, math.sqrt(8.0) * u[None, :], 0.3)
    run = psd_tilt_sample_batch(score_oracle(base), spec, 1000, 11, PSD_BUDGET)
    SUPPORT.record(run.samples, spec.norm_bound)
    frac = float(np.mean(run.samples @ u > 0))
    passed = summary.flips <= GIBBS_FLIP_THRESHOLD and 0.4 <= frac <= 0.6
    detail = (
        f"Gibbs flips {summary.flips} (exact expectation {expected:.1f}, threshold {GIBBS_FLIP_THRESHOLD}); "
        f"PSD sampler +u fraction {frac:.3f} in [0.4, 0.6]"
    )
    return passed, detail


def crit_tv_unnormalized():
    rng = np.random.default_rng(12)
    violations = 0
    for _ in range(500):
        n = int(rng.integers(1, 30))
        f = rng.exponential(size=n) * (rng.random(n) < 0.8)
        if f.sum() == 0:
            f[0] = 1.0
        g = np.abs(f + rng.choice([0.01, 0.3, 3.0]) * rng.standard_normal(n))
        if g.sum() == 0:
            g[0] = 1.0
        tv, bound = tv_unnormalized_bound(f, g)
        violations += tv > bound + 1e-12
    return violations == 0, f"{violations} violations in 500 pairs"


def _cli(args: list[str]) -> subprocess.CompletedProcess:
    return subprocess.run([sys.executable, "-m", "quadtilt", *args], capture_output=True, text=True)


def crit_support_and_determinism():
    # fresh sampler runs so the check is meaningful when run alone
    base = base_2d()
    x = lin_tilt_sample_batch(score_oracle(base), np.array([3.0, -2.0]), 0.1, base.norm_bound, 256, 0)
    SUPPORT.record(x, base.norm_bound)
    support_ok = SUPPORT.worst <= 1 + 1e-12

    configs = {
        "sample-base": {"base": base.to_dict(), "epsilon": 0.2, "num_samples": 64},
        "sample-linear-tilt": {"base": base.to_dict(), "v": [1.0, -0.5], "epsilon": 0.2, "num_samples": 64},
        "estimate-z": {
            "base": {"hypercube": {"dim": 2}},
            "v": [0.5, 0.0],
            "epsilon": 0.2,
            "delta": 0.1,
            "budget": {"max_draws": 200, "estimation_steps": 20},
        },
        "sample-psd-tilt": {
            "base": base.to_dict(),
            "L": [[0.5, -0.3]],
            "eps_final": 0.45,
            "num_samples": 16,
            "budget": {"max_draws": 4, "estimation_steps": 8, "max_steps": 200},
        },
    }
    mismatched = []
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        for cmd, cfg in configs.items():
            cfg_path = tmp / f"{cmd}.json"
            cfg_path.write_text(json.dumps(cfg))
            first, again, replay = tmp / f"{cmd}-1", tmp / f"{cmd}-2", tmp / f"{cmd}-3"
            for out in (first, again):
                res = _cli(["--seed", "5", "--out-dir", str(out), "--config", str(cfg_path), cmd])
                if res.returncode != 0:
                    return False, f"{cmd} failed: {res.stderr.strip()[-300:]}"
            res = _cli(["--out-dir", str(replay), "--config", str(first / "manifest.json"), "run"])
            if res.returncode != 0:
                return False, f"replay of {cmd} failed: {res.stderr.strip()[-300:]}"
            for name in ("samples.csv", "metrics.json"):
                files = [d / name for d in (first, again, replay)]
                if files[0].exists() and not (files[0].read_bytes() == files[1].read_bytes() == files[2].read_bytes()):
                    mismatched.append(f"{cmd}/{name}")
            if (first / "samples.csv").exists():
                pts = np.loadtxt(first / "samples.csv", delimiter=",", skiprows=1)[:, 1:]
                SUPPORT.record(pts, base.norm_bound)
    support_ok = SUPPORT.worst <= 1 + 1e-12
    passed = support_ok and not mismatched
    detail = (
        f"{SUPPORT.count} outputs, max ||x||/C = {SUPPORT.worst:.12f}; "
        f"bitwise mismatches: {mismatched or 'none'}"
    )
    return passed, detail


CRITERIA: list[tuple[int, str, Callable, float]] = [
    (1, "tilted-score identity", crit_tilted_score_identity, 5),
    (2, "score vs finite differences", crit_score_finite_difference, 5),
    (3, "normalization estimator calibration", crit_normalization_calibration, 120),
    (4, "linear-tilt sampling accuracy", crit_linear_tilt_accuracy, 120),
    (5, "PSD sampler end-to-end", crit_psd_end_to_end, 600),
    (6, "oracle-mode discretization error", crit_oracle_mode_decomposition, 60),
    (7, "PARTITION mass bound", crit_partition_mass, 30),
    (8, "rounding lemma sweep", crit_rounding_lemma, 60),
    (9, "PARTITION decoder", crit_partition_decoder, 30),
    (10, "MAX-CUT construction", crit_maxcut_construction, 30),
    (11, "Gibbs metastability contrast", crit_gibbs_metastability, 300),
    (12, "TV of unnormalized densities", crit_tv_unnormalized, 10),
    (13, "support and determinism", crit_support_and_determinism, None),
]


def run_criterion(number: int) -> CriterionResult:
    _, name, fn, limit = next(c for c in CRITERIA if c[0] == number)
    start = time.perf_counter()
    passed, detail = fn()
    elapsed = time.perf_counter() - start
    if limit is not None and elapsed > limit:
        passed = False
        detail += f"; exceeded runtime limit {limit}s"
    return CriterionResult(number, name, bool(passed), detail, elapsed, limit)


def run_all(only: list[int] | None = None, stream=sys.stdout) -> list[CriterionResult]:
    results = []
    for number, *_ in CRITERIA:
        if only and number not in only:
            continue
        res = run_criterion(number)
        print(res.line(), file=stream, flush=True)
        results.append(res)
    return results
