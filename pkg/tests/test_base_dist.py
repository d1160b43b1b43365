import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import logsumexp
from scipy.stats import multivariate_normal

from quadtilt.base_dist import (
    FiniteAtomBase,
    GaussianMixtureBase,
    base_from_dict,
    clamp_sigma,
    exact_linear_tilt,
    exact_quadratic_tilt,
    log_mgf,
    noised_log_density,
    noised_score,
)

sigmas = st.floats(0.05, 0.95)

FOUR = FiniteAtomBase.from_weights(
    [[1.0, 0.0], [0.0, 0.8], [-0.6, -0.6], [0.3, -0.9]], [0.1, 0.2, 0.3, 0.4]
)
CUBE4 = FiniteAtomBase.hypercube(4)
coords = st.floats(-2.0, 2.0)


def _log_density_by_scipy(base, sigma, x):
    # independent oracle: scipy Gaussian log-pdfs combined with logsumexp
    t = math.sqrt(1 - sigma**2)
    terms = [math.log(w) + multivariate_normal(mean=t * loc, cov=sigma**2).logpdf(x) for loc, w in zip(base.locations, base.weights)]
    return float(logsumexp(terms))


def test_validation_rejects_bad_inputs():
    with pytest.raises(ValueError):
        FiniteAtomBase.from_weights([[0.0], [0.0]], [0.5, 0.5])
    with pytest.raises(ValueError):
        FiniteAtomBase(np.array([[0.0], [1.0]]), np.array([0.0, 0.0]), 1.0)
    with pytest.raises(ValueError):
        FiniteAtomBase(np.array([[2.0]]), np.array([0.0]), 1.0)
    with pytest.raises(ValueError):
        FiniteAtomBase.from_weights([[np.nan]], [1.0])


def test_clamp_sigma():
    assert clamp_sigma(0.0) == 1e-6
    assert clamp_sigma(1.0) == 1 - 1e-6
    with pytest.raises(ValueError):
        clamp_sigma(float("nan"))


def test_point_mass_score_is_linear():
    # delta at 0: q_sigma = N(0, sigma^2 I), score = -x / sigma^2
    base = FiniteAtomBase.from_weights([[0.0, 0.0]], [1.0], norm_bound=1.0)
    x = np.array([0.3, -1.2])
    np.testing.assert_allclose(noised_score(base, 0.5, x), -x / 0.25, rtol=1e-14)


def test_symmetric_two_atoms_tanh():
    base = FiniteAtomBase.hypercube(1)
    # score at x, sigma: (t tanh(t x / s^2) - x) / s^2 with t = sqrt(1 - s^2)
    s, x = 0.6, 0.5
    t = 0.8
    want = (t * math.tanh(t * x / s**2) - x) / s**2
    assert noised_score(base, s, np.array([x]))[0] == pytest.approx(want, abs=1e-13)


@settings(max_examples=60, deadline=None)
@given(sigma=sigmas, x=st.lists(coords, min_size=2, max_size=2))
def test_log_density_matches_scipy(sigma, x):
    want = _log_density_by_scipy(FOUR, sigma, np.array(x))
    assert noised_log_density(FOUR, sigma, np.array(x)) == pytest.approx(want, rel=1e-10, abs=1e-10)


@settings(max_examples=60, deadline=None)
@given(sigma=st.floats(0.1, 0.95), x=st.lists(coords, min_size=2, max_size=2))
def test_score_is_gradient_of_log_density(sigma, x):
    x = np.array(x)
    h = 1e-5
    fd = [
        (noised_log_density(FOUR, sigma, x + h * e) - noised_log_density(FOUR, sigma, x - h * e)) / (2 * h)
        for e in np.eye(2)
    ]
    np.testing.assert_allclose(noised_score(FOUR, sigma, x), fd, atol=1e-6)


def test_score_batch_matches_rows(four_atoms):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((7, 2))
    batch = noised_score(four_atoms, 0.4, x)
    for i in range(7):
        np.testing.assert_allclose(batch[i], noised_score(four_atoms, 0.4, x[i]), rtol=1e-13, atol=1e-13)


def test_score_stable_far_from_atoms(four_atoms):
    s = noised_score(four_atoms, 1e-6, np.array([[50.0, -50.0]]))
    assert np.all(np.isfinite(s))


def test_gaussian_mixture_score_and_density():
    gm = GaussianMixtureBase.from_weights([[0.0, 1.0], [1.0, -1.0]], [0.05, 0.2], [0.3, 0.7])
    sigma, x = 0.5, np.array([0.2, 0.4])
    t2 = 0.75
    dens = sum(
        w * multivariate_normal(mean=math.sqrt(t2) * m, cov=t2 * v + sigma**2).pdf(x)
        for m, v, w in zip(gm.means, gm.variances, gm.weights)
    )
    assert noised_log_density(gm, sigma, x) == pytest.approx(math.log(dens), rel=1e-12)
    h = 1e-5
    fd = [(noised_log_density(gm, sigma, x + h * e) - noised_log_density(gm, sigma, x - h * e)) / (2 * h) for e in np.eye(2)]
    np.testing.assert_allclose(noised_score(gm, sigma, x), fd, atol=1e-7)


def test_exact_linear_tilt_weights(four_atoms):
    v = np.array([1.2, -0.7])
    tilted = exact_linear_tilt(four_atoms, v)
    raw = four_atoms.weights * np.exp(four_atoms.locations @ v)
    np.testing.assert_allclose(tilted.weights, raw / raw.sum(), rtol=1e-13)


@settings(max_examples=40, deadline=None)
@given(
    v1=st.lists(st.floats(-3, 3), min_size=2, max_size=2),
    v2=st.lists(st.floats(-3, 3), min_size=2, max_size=2),
)
def test_linear_tilts_compose(v1, v2):
    v1, v2 = np.array(v1), np.array(v2)
    a = exact_linear_tilt(exact_linear_tilt(FOUR, v1), v2)
    b = exact_linear_tilt(FOUR, v1 + v2)
    np.testing.assert_allclose(a.log_weights, b.log_weights, atol=1e-12)


def test_zero_tilts_are_identity(four_atoms):
    np.testing.assert_allclose(exact_linear_tilt(four_atoms, np.zeros(2)).log_weights, four_atoms.log_weights, atol=1e-15)
    np.testing.assert_allclose(exact_quadratic_tilt(four_atoms, np.zeros((2, 2))).log_weights, four_atoms.log_weights, atol=1e-15)


def test_quadratic_tilt_rejects_asymmetric(four_atoms):
    with pytest.raises(ValueError):
        exact_quadratic_tilt(four_atoms, np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_quadratic_tilt_weights(four_atoms):
    A = np.array([[0.5, 0.2], [0.2, -0.3]])
    got = exact_quadratic_tilt(four_atoms, A).weights
    raw = four_atoms.weights * np.exp(np.einsum("ni,ij,nj->n", four_atoms.locations, A, four_atoms.locations))
    np.testing.assert_allclose(got, raw / raw.sum(), rtol=1e-13)


@settings(max_examples=50, deadline=None)
@given(v=st.lists(st.floats(-3, 3), min_size=4, max_size=4))
def test_log_mgf_hypercube_is_log_cosh_sum(v):
    v = np.array(v)
    assert log_mgf(CUBE4, v) == pytest.approx(float(np.sum(np.log(np.cosh(v)))), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(
    a=st.lists(st.floats(-3, 3), min_size=2, max_size=2),
    b=st.lists(st.floats(-3, 3), min_size=2, max_size=2),
    lam=st.floats(0, 1),
)
def test_log_mgf_is_convex(a, b, lam):
    a, b = np.array(a), np.array(b)
    mid = log_mgf(FOUR, lam * a + (1 - lam) * b)
    assert mid <= lam * log_mgf(FOUR, a) + (1 - lam) * log_mgf(FOUR, b) + 1e-12


def test_log_mgf_batched(four_atoms):
    vs = np.array([[0.0, 0.0], [1.0, 2.0], [-3.0, 0.5]])
    batch = log_mgf(four_atoms, vs)
    assert abs(batch[0]) < 1e-15
    for v, got in zip(vs, batch):
        assert got == pytest.approx(float(logsumexp(four_atoms.log_weights + four_atoms.locations @ v)), abs=1e-13)


def test_sampling_frequencies(four_atoms):
    draws = four_atoms.sample(200_000, np.random.default_rng(3))
    idx = [np.flatnonzero(np.all(four_atoms.locations == d, axis=1))[0] for d in draws[:5]]
    assert all(0 <= i < 4 for i in idx)
    freq = np.array([np.mean(np.all(draws == loc, axis=1)) for loc in four_atoms.locations])
    np.testing.assert_allclose(freq, four_atoms.weights, atol=0.005)


@pytest.mark.parametrize(
    "base",
    [
        FiniteAtomBase.from_weights([[1.0, 0.0], [0.1, 0.3]], [0.3, 0.7]),
        GaussianMixtureBase.from_weights([[0.0], [2.0]], [0.1, 0.3], [0.25, 0.75]),
    ],
)
def test_serialization_round_trip_is_exact(base):
    back = base_from_dict(base.to_dict())
    assert type(back) is type(base)
    np.testing.assert_array_equal(back.log_weights, base.log_weights)
    assert back.to_dict() == base.to_dict()


def test_hypercube_norm_bound():
    assert FiniteAtomBase.hypercube(3).norm_bound == pytest.approx(math.sqrt(3))
    assert len(FiniteAtomBase.hypercube(3, (0.0, 1.0))) == 8
