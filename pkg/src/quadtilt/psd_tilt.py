"""Sampling from PSD quadratic tilts ``p*(x) ∝ p(x) exp(||L x||^2 / 2)``.

A Gaussian integral over an auxiliary ``z in R^r`` linearizes the reward:

    exp(||L x||^2 / 2) ∝ ∫ exp(-||z||^2 / 2 + <L x, z>) dz,

so ``p*`` is the x-marginal of a lifted law whose conditional ``x | z`` is the
linear tilt ``p(.; L^T z)`` and whose z-marginal is ``∝ Z(z) exp(-||z||^2 / 2)``
with ``Z(z) = E_p[exp(<L x, z>)]``. The sampler discretizes ``z`` on a lattice
ball, estimates ``Z`` on the lattice, draws ``z`` and then draws ``x | z`` with
the linear-tilt sampler. Cost grows like ``(R / gamma)^r``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .base_dist import FiniteAtomBase, ScoreFn
from .budget import DEFAULT_BUDGET, Budget, BudgetExceeded
from .linear_tilt import lin_tilt_sample_batch
from .normalization import estimate_log_normalization_batch

log = logging.getLogger(__name__)

GRID_WARN = 100_000


@dataclass(frozen=True, eq=False)
class PsdTiltSpec:
    """Reward ``||L x||^2 / 2`` with ``D >= sup ||L x||`` over the support."""

    L: np.ndarray
    D: float
    norm_bound: float
    eps_final: float
    spectral_norm: float = field(init=False)

    def __post_init__(self):
        L = np.atleast_2d(np.asarray(self.L, dtype=float))
        if L.ndim != 2 or not np.all(np.isfinite(L)):
            raise ValueError("L must be a finite r x d matrix")
        r, d = L.shape
        if r > d:
            raise ValueError(f"rank r={r} exceeds dimension d={d}")
        if not self.D >= 1:
            raise ValueError(f"D must be >= 1, got {self.D}")
        if not self.norm_bound >= 1:
            raise ValueError(f"norm_bound must be >= 1, got {self.norm_bound}")
        if not (0 < self.eps_final < 0.5):
            raise ValueError(f"eps_final must lie in (0, 1/2), got {self.eps_final}")
        L.setflags(write=False)
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "D", float(self.D))
        object.__setattr__(self, "norm_bound", float(self.norm_bound))
        object.__setattr__(self, "spectral_norm", float(np.linalg.norm(L, 2)))

    @classmethod
    def for_base(cls, base: FiniteAtomBase, L, eps_final: float, D: float | None = None) -> "PsdTiltSpec":
        """Build for a finite-atom base; ``D`` defaults to the tightest bound ``max ||L x_i||``."""
        L = np.atleast_2d(np.asarray(L, dtype=float))
        if D is None:
            D = max(1.0, float(np.max(np.linalg.norm(base.locations @ L.T, axis=1))))
        return cls(L, D, max(1.0, base.norm_bound), eps_final)

    @property
    def rank(self) -> int:
        return self.L.shape[0]

    @property
    def dim(self) -> int:
        return self.L.shape[1]

    @property
    def quadratic_form(self) -> np.ndarray:
        """``A = L^T L / 2`` so that the reward is ``x^T A x``."""
        return 0.5 * self.L.T @ self.L


@dataclass(frozen=True, eq=False)
class GridSpec:
    radius: float
    spacing: float
    rank: int
    points: np.ndarray

    def __len__(self):
        return self.points.shape[0]

    def diagnostics(self) -> dict:
        return {"R": self.radius, "gamma": self.spacing, "grid_size": len(self)}


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    """Atoms with normalized log-weights."""

    points: np.ndarray
    log_weights: np.ndarray
    budget_limited: bool = False

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        logw = np.asarray(self.log_weights, dtype=float)
        if len(pts) != len(logw) or len(pts) == 0:
            raise ValueError("points and log_weights must have equal nonzero length")
        logw = logw - logsumexp(logw)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "log_weights", logw)

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def sample_indices(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Gumbel-max draws; never exponentiates the log-weights."""
        out = np.empty(n, dtype=np.int64)
        chunk = max(1, 2_000_000 // len(self.log_weights))
        for start in range(0, n, chunk):
            k = min(chunk, n - start)
            g = rng.gumbel(size=(k, len(self.log_weights)))
            out[start : start + k] = np.argmax(self.log_weights[None, :] + g, axis=1)
        return out

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.points[self.sample_indices(n, rng)]


def grid_parameters(spec: PsdTiltSpec) -> tuple[float, float]:
    """Lattice-ball radius and spacing: ``R = D + 2 sqrt(r) + 2 sqrt(ln(54/eps))``, ``gamma = eps / (54 D)``."""
    r = spec.rank
    radius = spec.D + 2 * math.sqrt(r) + 2 * math.sqrt(math.log(54 / spec.eps_final))
    spacing = spec.eps_final / (54 * spec.D)
    return radius, spacing


def _ball_volume(r: int, radius: float) -> float:
    return math.pi ** (r / 2) / math.gamma(r / 2 + 1) * radius**r


def lattice_ball(radius: float, spacing: float, rank: int, max_points: int) -> np.ndarray:
    """All ``z in spacing * Z^rank`` with ``||z|| <= radius``, in lexicographic order."""
    scaled = radius / spacing
    if _ball_volume(rank, scaled) > 1.1 * max_points + 10 * (2 * scaled + 1) ** (rank - 1):
        raise BudgetExceeded(
            f"grid for R={radius:.6g}, gamma={spacing:.6g}, r={rank} would have about "
            f"{_ball_volume(rank, scaled):.3g} points (cap {max_points})"
        )
    limit = scaled * scaled
    prefix = np.zeros((1, 0), dtype=np.int64)
    for _ in range(rank):
        rem = limit - np.sum(prefix.astype(float) ** 2, axis=1)
        half = np.floor(np.sqrt(np.maximum(rem, 0.0)) + 1e-9).astype(np.int64)
        counts = 2 * half + 1
        base = np.repeat(prefix, counts, axis=0)
        offsets = np.concatenate([np.arange(-h, h + 1) for h in half])
        prefix = np.column_stack([base, offsets])
    pts = spacing * prefix.astype(float)
    pts = pts[np.linalg.norm(pts, axis=1) <= radius]
    if len(pts) > max_points:
        raise BudgetExceeded(f"grid for R={radius:.6g}, gamma={spacing:.6g}, r={rank} has {len(pts)} points (cap {max_points})")
    return pts


def build_grid(spec: PsdTiltSpec, max_points: int = DEFAULT_BUDGET.max_grid) -> GridSpec:
    radius, spacing = grid_parameters(spec)
    pts = lattice_ball(radius, spacing, spec.rank, max_points)
    if len(pts) > GRID_WARN:
        log.warning("auxiliary grid has %d points; cost grows like (R/gamma)^r", len(pts))
    return GridSpec(radius, spacing, spec.rank, pts)


def inner_tolerances(spec: PsdTiltSpec, grid_size: int) -> tuple[float, float, float]:
    """``(eps1, delta1, eps2)`` for the estimation and final draw."""
    c = spec.norm_bound
    eps1 = spec.eps_final**2 / (72 * c)
    delta1 = spec.eps_final**2 / (72 * c * grid_size)
    eps2 = spec.eps_final / 3
    return eps1, delta1, eps2


def grid_log_weights(
    score_fn: ScoreFn,
    spec: PsdTiltSpec,
    grid: GridSpec,
    seed: int,
    budget: Budget = DEFAULT_BUDGET,
    log_normalizer: Callable[[np.ndarray], np.ndarray] | None = None,
) -> DiscreteDistribution:
    """Normalized log-weights ``log Z_hat(z) - ||z||^2 / 2`` over the grid.

    ``log_normalizer`` maps tilt vectors ``(G, d)`` to exact ``log Z`` values and
    replaces Monte Carlo estimation when given (used to isolate discretization
    error from estimation error).
    """
    vs = grid.points @ spec.L  # row g is L^T z_g
    if log_normalizer is not None:
        log_z = np.asarray(log_normalizer(vs), dtype=float)
        limited = False
    else:
        eps1, delta1, _ = inner_tolerances(spec, len(grid))
        log_z, _, _, lim = estimate_log_normalization_batch(
            score_fn, vs, eps1, delta1, spec.norm_bound, seed, budget
        )
        limited = bool(np.any(lim))
    logw = log_z - 0.5 * np.sum(grid.points**2, axis=1)
    return DiscreteDistribution(grid.points, logw, budget_limited=limited)


def _substream(seed: int, tag: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, tag]))


@dataclass
class PsdTiltRun:
    samples: np.ndarray
    z: np.ndarray
    grid: GridSpec
    weights: DiscreteDistribution

    def diagnostics(self) -> dict:
        return {**self.grid.diagnostics(), "budget_limited": self.weights.budget_limited}


def psd_tilt_sample_batch(
    score_fn: ScoreFn,
    spec: PsdTiltSpec,
    n: int,
    seed: int,
    budget: Budget = DEFAULT_BUDGET,
    *,
    grid: GridSpec | None = None,
    weights: DiscreteDistribution | None = None,
    log_normalizer: Callable[[np.ndarray], np.ndarray] | None = None,
) -> PsdTiltRun:
    """``n`` draws sharing one grid-weight estimate.

    With ``n = 1`` this is exactly one run of the sampler; for larger ``n`` the
    grid weights are estimated once and reused, so draws are independent given
    the weights.
    """
    if grid is None:
        grid = build_grid(spec, budget.max_grid)
    if weights is None:
        weights = grid_log_weights(score_fn, spec, grid, seed, budget, log_normalizer)
    z = weights.sample(n, _substream(seed, 1))
    _, _, eps2 = inner_tolerances(spec, len(grid))
    x = lin_tilt_sample_batch(
        score_fn, z @ spec.L, eps2, spec.norm_bound, n, _substream(seed, 2), max_steps=budget.max_steps
    )
    return PsdTiltRun(x, z, grid, weights)


def psd_tilt_sample(score_fn: ScoreFn, spec: PsdTiltSpec, seed: int, budget: Budget = DEFAULT_BUDGET) -> np.ndarray:
    """One W2-approximate draw from the PSD tilt, inside the ``norm_bound`` ball."""
    return psd_tilt_sample_batch(score_fn, spec, 1, seed, budget).samples[0]


def discretized_mixture_exact(
    base: FiniteAtomBase, spec: PsdTiltSpec, grid: GridSpec, max_terms: int = DEFAULT_BUDGET.max_exact_terms
) -> FiniteAtomBase:
    """Exact finite-atom form of the lattice mixture ``∝ sum_z Z(z) e^{-|z|^2/2} p(.; L^T z)``.

    Since ``p(x_i; L^T z) = w_i e^{<L x_i, z>} / Z(z)``, atom ``i`` gets weight
    ``w_i sum_z exp(-||z||^2 / 2 + <L x_i, z>)``.
    """
    terms = len(grid) * len(base)
    if terms > max_terms * len(base):
        raise BudgetExceeded(f"exact lattice mixture needs {terms} terms (cap {max_terms * len(base)})")
    proj = base.locations @ spec.L.T  # (n_atoms, r)
    half_sq = 0.5 * np.sum(grid.points**2, axis=1)
    acc = np.full(len(base), -np.inf)
    chunk = max(1, 2_000_000 // len(base))
    for start in range(0, len(grid), chunk):
        pts = grid.points[start : start + chunk]
        block = proj @ pts.T - half_sq[None, start : start + chunk]
        acc = np.logaddexp(acc, logsumexp(block, axis=1))
    return FiniteAtomBase.from_log_weights(base.locations, base.log_weights + acc, base.norm_bound)
