"""Telescoping Monte Carlo estimate of ``Z(v) = E_p[exp(<x, v>)]``.

The path ``0 -> v`` is cut into ``N >= C ||v||`` stages. Stage ``n`` draws
``M`` samples from the tilt by ``(n - 1) v / N`` and averages
``exp(<x, v / N>)``, an unbiased-up-to-sampler-error estimate of
``Z(n v / N) / Z((n - 1) v / N)``. The product of the stage ratios telescopes to
``Z(v)``. Everything is accumulated in log space.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .base_dist import ScoreFn
from .budget import DEFAULT_BUDGET, Budget
from .linear_tilt import lin_tilt_sample_batch

E = math.e


@dataclass(frozen=True)
class StagePlan:
    num_stages: int
    stage_epsilon: float
    required_samples: int


@dataclass(frozen=True)
class NormalizationEstimate:
    log_value: float
    num_stages: int
    samples_per_stage: int
    epsilon: float
    delta: float
    budget_limited: bool = False
    required_samples_per_stage: int = 0

    @property
    def value(self) -> float:
        return math.exp(self.log_value)

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["N"] = doc.pop("num_stages")
        doc["M"] = doc.pop("samples_per_stage")
        return doc


def stage_plan(v_norm: float, epsilon: float, delta: float, norm_bound: float) -> StagePlan:
    """Stage count, per-stage sampler tolerance and Hoeffding sample size.

    ``N = max(1, ceil(C ||v||))``, ``eps' = eps / (2 (1 + e) e N)`` and
    ``M = ceil(e^2 ln(2N / delta) / (2 eps'^2))``; the latter is what Hoeffding
    needs for summands in ``[0, e]`` with deviation ``eps'`` and failure
    probability ``delta / N``.
    """
    if not (0 < epsilon < 0.5):
        raise ValueError(f"epsilon must lie in (0, 1/2), got {epsilon}")
    if not (0 < delta < 0.5):
        raise ValueError(f"delta must lie in (0, 1/2), got {delta}")
    if norm_bound < 1:
        raise ValueError(f"norm_bound must be >= 1, got {norm_bound}")
    n_stages = max(1, math.ceil(norm_bound * v_norm - 1e-12))
    eps_prime = epsilon / (2 * (1 + E) * E * n_stages)
    m = math.ceil(E**2 * math.log(2 * n_stages / delta) / (2 * eps_prime**2))
    return StagePlan(n_stages, eps_prime, m)


def _stage_rng(seed: int, n_stages: int, stage: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, n_stages, stage]))


def estimate_log_normalization_batch(
    score_fn: ScoreFn,
    vs,
    epsilon: float,
    delta: float,
    norm_bound: float,
    seed: int,
    budget: Budget = DEFAULT_BUDGET,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Estimate ``log Z(v)`` for every row of ``vs`` (shape ``(G, d)``).

    Rows sharing a stage count are run together as one batch of chains drawing
    from a substream keyed by ``(seed, N, stage)``. Results are deterministic
    given the seed and the row order.

    Returns:
        ``(log_values, num_stages, samples_per_stage, budget_limited)``, each of
        length ``G``.
    """
    vs = np.atleast_2d(np.asarray(vs, dtype=float))
    g = vs.shape[0]
    norms = np.linalg.norm(vs, axis=1)
    plans = [stage_plan(float(nv), epsilon, delta, norm_bound) for nv in norms]
    stages = np.array([p.num_stages for p in plans])
    log_vals = np.zeros(g)
    m_used = np.zeros(g, dtype=np.int64)
    limited = np.zeros(g, dtype=bool)

    for n_stages in np.unique(stages):
        n_stages = int(n_stages)
        rows = np.flatnonzero(stages == n_stages)
        plan = plans[rows[0]]
        m = min(plan.required_samples, max(1, budget.max_draws // n_stages))
        m_used[rows] = m
        limited[rows] = m < plan.required_samples
        if np.all(norms[rows] == 0):
            continue
        step = vs[rows] / n_stages  # (G_n, d)
        for stage in range(1, n_stages + 1):
            tilt = np.repeat((stage - 1) * step, m, axis=0)
            x = lin_tilt_sample_batch(
                score_fn,
                tilt,
                plan.stage_epsilon,
                norm_bound,
                len(tilt),
                _stage_rng(seed, n_stages, stage),
                max_steps=budget.inner_steps,
            )
            expo = np.einsum("ij,ij->i", x, np.repeat(step, m, axis=0)).reshape(len(rows), m)
            if np.any(expo > 1.0 + 1e-9):
                raise AssertionError("stage summand exceeds e; sampler left the norm ball")
            # log of the stage mean, computed stably
            top = expo.max(axis=1, keepdims=True)
            log_vals[rows] += top[:, 0] + np.log(np.mean(np.exp(expo - top), axis=1))
    return log_vals, stages, m_used, limited


def estimate_normalization(
    score_fn: ScoreFn,
    v,
    epsilon: float,
    delta: float,
    norm_bound: float,
    seed: int,
    budget: Budget = DEFAULT_BUDGET,
) -> NormalizationEstimate:
    """Estimate ``log E_p[exp(<x, v>)]`` to relative accuracy ``epsilon`` w.p. ``1 - delta``.

    The guarantee needs the uncapped sample size; when ``budget.max_draws``
    forces a smaller ``M`` the result is marked ``budget_limited``.
    """
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if v.ndim != 1 or not np.all(np.isfinite(v)):
        raise ValueError("v must be a finite vector")
    plan = stage_plan(float(np.linalg.norm(v)), epsilon, delta, norm_bound)
    log_vals, stages, m_used, limited = estimate_log_normalization_batch(
        score_fn, v[None, :], epsilon, delta, norm_bound, seed, budget
    )
    return NormalizationEstimate(
        log_value=float(log_vals[0]),
        num_stages=int(stages[0]),
        samples_per_stage=int(m_used[0]),
        epsilon=epsilon,
        delta=delta,
        budget_limited=bool(limited[0]),
        required_samples_per_stage=plan.required_samples,
    )
