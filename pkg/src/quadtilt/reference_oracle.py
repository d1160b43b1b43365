"""Ground-truth metrics: exact TV, exact and empirical W2, and checkable lemmas."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np
from scipy import sparse
from scipy.optimize import linear_sum_assignment, linprog

from .base_dist import FiniteAtomBase
from .psd_tilt import DiscreteDistribution

EXACT_ASSIGNMENT_MAX = 512
SLICED_PROJECTIONS = 128
SLICED_SEED = 20240917


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Equally weighted sample points, shape ``(n, d)``."""

    points: np.ndarray
    seed_provenance: int | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or len(pts) == 0:
            raise ValueError("a sample set needs at least one point")
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class W2Result:
    value: float
    sliced: bool = False

    def __float__(self):
        return self.value


def _weighted(obj) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(obj, FiniteAtomBase):
        return obj.locations, obj.weights
    if isinstance(obj, DiscreteDistribution):
        return obj.points, obj.weights
    if isinstance(obj, SampleSet):
        return obj.points, np.full(len(obj), 1.0 / len(obj))
    pts, w = obj
    return np.atleast_2d(np.asarray(pts, dtype=float)), np.asarray(w, dtype=float)


def _canonical(points: np.ndarray) -> list[tuple]:
    # +0.0 folds -0.0 into one key
    return [tuple(row) for row in (np.round(points, 12) + 0.0)]


def exact_tv(p, q) -> float:
    """``(1/2) sum |p_i - q_i|`` over the union of the two atom sets.

    Atoms are matched after rounding locations to 1e-12; an atom present in
    only one of the two measures counts as mass zero in the other.
    """
    xp, wp = _weighted(p)
    xq, wq = _weighted(q)
    if xp.shape[1] != xq.shape[1]:
        raise ValueError(f"cannot align supports of dimension {xp.shape[1]} and {xq.shape[1]}")
    mass: dict[tuple, list[float]] = {}
    for key, w in zip(_canonical(xp), wp):
        mass.setdefault(key, [0.0, 0.0])[0] += w
    for key, w in zip(_canonical(xq), wq):
        mass.setdefault(key, [0.0, 0.0])[1] += w
    return 0.5 * math.fsum(abs(a - b) for a, b in mass.values())


def _sq_costs(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.sum((x[:, None, :] - y[None, :, :]) ** 2, axis=-1)


def transport_cost(xa, wa, xb, wb, max_terms: int = 1_000_000) -> float:
    """Minimal expected squared distance over couplings of two finite measures (exact LP)."""
    n, m = len(wa), len(wb)
    if n * m > max_terms:
        raise ValueError(f"transport problem has {n * m} variables (cap {max_terms})")
    cost = _sq_costs(xa, xb)
    if n == 1 or m == 1:
        w = wb if n == 1 else wa
        return float(np.dot(cost.reshape(-1), w / w.sum()))
    rows = sparse.kron(sparse.eye(n), np.ones((1, m)))
    cols = sparse.kron(np.ones((1, n)), sparse.eye(m))
    a_eq = sparse.vstack([rows, cols]).tocsr()
    b_eq = np.concatenate([wa / wa.sum(), wb / wb.sum()])
    res = linprog(cost.reshape(-1), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return max(0.0, float(res.fun))


def exact_w2_discrete(p, q, max_terms: int = 1_000_000) -> float:
    """Exact W2 between two finite measures (atoms or sample sets)."""
    xp, wp = _weighted(p)
    xq, wq = _weighted(q)
    return math.sqrt(transport_cost(xp, wp, xq, wq, max_terms))


def _sliced_w2(a: np.ndarray, b: np.ndarray) -> float:
    rng = np.random.default_rng(SLICED_SEED)
    dirs = rng.standard_normal((SLICED_PROJECTIONS, a.shape[1]))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    levels = (np.arange(max(len(a), len(b))) + 0.5) / max(len(a), len(b))
    total = 0.0
    for u in dirs:
        qa = np.quantile(a @ u, levels, method="inverted_cdf")
        qb = np.quantile(b @ u, levels, method="inverted_cdf")
        total += np.mean((qa - qb) ** 2)
    return math.sqrt(total / len(dirs))


def empirical_w2(a: SampleSet, b: SampleSet) -> W2Result:
    """W2 between two empirical measures.

    Equal sizes up to 512 use an optimal assignment; other pairs up to 512^2
    cost entries use the exact transport LP. Larger inputs fall back to the
    sliced estimate (root-mean of 1-D W2^2 over 128 fixed random directions),
    flagged ``sliced=True``.
    """
    a = a if isinstance(a, SampleSet) else SampleSet(a)
    b = b if isinstance(b, SampleSet) else SampleSet(b)
    if a.points.shape[1] != b.points.shape[1]:
        raise ValueError("sample sets have different dimensions")
    if len(a) == len(b) and len(a) <= EXACT_ASSIGNMENT_MAX:
        cost = _sq_costs(a.points, b.points)
        r, c = linear_sum_assignment(cost)
        return W2Result(math.sqrt(max(0.0, float(cost[r, c].mean()))))
    if len(a) * len(b) <= EXACT_ASSIGNMENT_MAX**2:
        return W2Result(exact_w2_discrete(a, b))
    return W2Result(_sliced_w2(a.points, b.points), sliced=True)


def sampling_floor(
    exact_draws: Callable[[int, np.random.Generator], np.ndarray],
    n: int,
    seed: int,
    repeats: int = 50,
    quantile: float = 0.95,
) -> float:
    """Quantile of W2 between two independent ``n``-draw exact sample sets.

    This is the spread of the empirical-W2 statistic when the two laws are
    equal, i.e. the part of any empirical-W2 tolerance that is pure sampling
    noise.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xF100]))
    vals = [
        empirical_w2(SampleSet(exact_draws(n, rng)), SampleSet(exact_draws(n, rng))).value
        for _ in range(repeats)
    ]
    return float(np.quantile(vals, quantile))


def sign_pm(x: np.ndarray) -> np.ndarray:
    """Coordinatewise sign with ``sign(0) = +1``."""
    return np.where(np.asarray(x) >= 0, 1.0, -1.0)


@dataclass(frozen=True)
class RoundingCheck:
    lhs: float
    rhs: float
    w2: float

    @property
    def holds(self) -> bool:
        return self.lhs >= self.rhs - 1e-12


def rounding_mass_bound(mu: FiniteAtomBase, nu, S: Iterable) -> RoundingCheck:
    """Check ``nu(R_S) >= mu(S) - W2(mu, nu)^2`` for ``mu`` on sign vectors.

    ``R_S`` is the set of points whose coordinatewise sign lies in ``S``;
    ``nu`` is a sample set (or any finite measure) and W2 is computed exactly.
    """
    if not np.all(np.abs(mu.locations) == 1.0):
        raise ValueError("mu must be supported on {-1, +1}^d")
    keys = {tuple(float(c) for c in s) for s in S}
    xs, ws = _weighted(nu)
    in_s = np.array([tuple(row) in keys for row in sign_pm(xs)], dtype=bool)
    lhs = float(np.sum(ws[in_s]) / np.sum(ws))
    mu_in = np.array([tuple(row) in keys for row in mu.locations], dtype=bool)
    mu_s = float(np.sum(mu.weights[mu_in]))
    w2 = exact_w2_discrete(mu, (xs, ws))
    return RoundingCheck(lhs, mu_s - w2**2, w2)


def chi2_tail_check(dim: int, eps: float, n_draws: int, seed: int) -> tuple[float, float, bool]:
    """Empirical ``Pr[||Z|| > 2 sqrt(d) + 2 sqrt(ln(1/eps))]`` versus ``eps``.

    Returns ``(frequency, allowed, holds)`` where ``allowed`` adds three
    binomial standard deviations to ``eps``.
    """
    rng = np.random.default_rng(seed)
    thresh = 2 * math.sqrt(dim) + 2 * math.sqrt(math.log(1 / eps))
    norms = np.linalg.norm(rng.standard_normal((n_draws, dim)), axis=1)
    freq = float(np.mean(norms > thresh))
    allowed = eps + 3 * math.sqrt(eps * (1 - eps) / n_draws)
    return freq, allowed, freq <= allowed


def tv_unnormalized_bound(f, g) -> tuple[float, float]:
    """``(TV(f/|f|, g/|g|), 2 sum|f - g| / sum f)`` for nonnegative weight vectors."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    tv = 0.5 * float(np.sum(np.abs(f / f.sum() - g / g.sum())))
    return tv, 2.0 * float(np.sum(np.abs(f - g))) / float(f.sum())
