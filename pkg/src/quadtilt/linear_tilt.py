"""Sampling from linear tilts ``p(x; v) ∝ p(x) exp(<x, v>)``.

The noised score of a linearly tilted base is the base score evaluated at a
shifted point plus a constant:

    s*_sigma(x) = v / sqrt(1 - sigma^2) + s_sigma(x + sigma^2 / sqrt(1 - sigma^2) v)

so the diffusion sampler can be run on the tilt directly. An affine reward
``<b, x> + c`` is the same tilt with ``v = b``; the constant drops out.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from .base_dist import ScoreFn, clamp_sigma
from .budget import DEFAULT_BUDGET, Budget
from .diffusion_sampler import default_schedule, unadjusted_sample_batch


@dataclass(frozen=True, eq=False)
class LinearTiltSpec:
    v: np.ndarray
    epsilon: float
    norm_bound: float

    def __post_init__(self):
        v = np.atleast_1d(np.asarray(self.v, dtype=float))
        if v.ndim != 1 or not np.all(np.isfinite(v)):
            raise ValueError("v must be a finite vector")
        if not (0 < self.epsilon < 1):
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not self.norm_bound > 0:
            raise ValueError("norm_bound must be positive")
        object.__setattr__(self, "v", v)

    @property
    def dim(self) -> int:
        return self.v.shape[0]


def tilted_score(score_fn: ScoreFn, v, sigma: float, x) -> np.ndarray:
    """Score of the sigma-noised linear tilt, from the base score oracle.

    ``v`` may be a single vector or a per-row array broadcastable against ``x``.
    """
    sigma = clamp_sigma(sigma)
    v = np.asarray(v, dtype=float)
    x = np.asarray(x, dtype=float)
    if not (np.all(np.isfinite(v)) and np.all(np.isfinite(x))):
        raise ValueError("tilted_score: non-finite input")
    t = math.sqrt(1.0 - sigma * sigma)
    return v / t + score_fn(sigma, x + (sigma * sigma / t) * v)


def tilted_score_fn(score_fn: ScoreFn, v) -> ScoreFn:
    """Bind ``v``: returns ``(sigma, x) -> tilted_score(score_fn, v, sigma, x)``."""
    return functools.partial(tilted_score, score_fn, np.asarray(v, dtype=float))


def lin_tilt_sample_batch(
    score_fn: ScoreFn,
    v,
    epsilon: float,
    norm_bound: float,
    n: int,
    rng,
    *,
    max_steps: int | None = None,
) -> np.ndarray:
    """``n`` draws from the tilt by ``v``, shape ``(n, d)``.

    ``v`` is either one tilt of shape ``(d,)`` or one tilt per draw, ``(n, d)``.
    """
    v = np.asarray(v, dtype=float)
    dim = v.shape[-1]
    if v.ndim == 2 and v.shape[0] != n:
        raise ValueError(f"got {v.shape[0]} tilt vectors for {n} draws")
    steps = DEFAULT_BUDGET.max_steps if max_steps is None else max_steps
    schedule = default_schedule(epsilon, dim, norm_bound, max_steps=steps)
    return unadjusted_sample_batch(tilted_score_fn(score_fn, v), schedule, n, rng)


def lin_tilt_sample(score_fn: ScoreFn, spec: LinearTiltSpec, seed: int, budget: Budget = DEFAULT_BUDGET) -> np.ndarray:
    """One W2-approximate draw from ``p(.; spec.v)``, inside the ``norm_bound`` ball."""
    return lin_tilt_sample_batch(
        score_fn, spec.v, spec.epsilon, spec.norm_bound, 1, np.random.default_rng(seed), max_steps=budget.max_steps
    )[0]
