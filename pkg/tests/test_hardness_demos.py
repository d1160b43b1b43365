import itertools
import math

import numpy as np
import pytest

from quadtilt.hardness_demos import (
    MaxCutInstance,
    PartitionInstance,
    gibbs_chain,
    gibbs_flip_probability,
    laplacian,
    maxcut_decode,
    maxcut_optimal_mass,
    maxcut_tilted,
    maxcut_value,
    partition_decode,
    partition_mass,
    random_graph,
)


def test_partition_small_instance_mass():
    # w = (1, 1): solutions (1, -1), (-1, 1); the others have (w^T x)^2 = 4 and beta = 7
    inst = PartitionInstance(np.array([1, 1]))
    assert inst.beta == 7.0
    assert partition_mass(inst).value == pytest.approx(1 / (1 + math.exp(-28)), rel=1e-15)


def test_partition_no_instance_flag():
    inst = PartitionInstance(np.array([1, 2]))
    mass = partition_mass(inst)
    assert mass.no_solution and mass.value == 0.0


def test_partition_rejects_bad_weights():
    with pytest.raises(ValueError):
        PartitionInstance(np.array([1.5, 2.0]))
    with pytest.raises(ValueError):
        PartitionInstance(np.array([], dtype=int))


def test_partition_quadratic_form():
    inst = PartitionInstance(np.array([3, 1, 2]))
    x = np.array([1.0, -1.0, -1.0])
    assert x @ inst.A @ x == -inst.beta * (3 - 1 - 2) ** 2
    assert np.all(np.linalg.eigvalsh(inst.A) <= 1e-9)


def test_partition_decoder_rules():
    w = np.array([1, 1, 2])
    good, bad = np.array([0.3, 0.0, -0.9]), np.array([1.0, 1.0, 1.0])
    # sign(0) = +1 makes the first row decode to (1, 1, -1)
    assert partition_decode(good[None], w)
    assert not partition_decode(np.vstack([bad, good]), w)
    assert partition_decode(np.vstack([bad, good]), w, rule="any")
    assert not partition_decode(np.vstack([bad, good]), w, rule="majority")
    with pytest.raises(ValueError):
        partition_decode(good[None], w, rule="vote")


def test_maxcut_triangle():
    inst = MaxCutInstance(((0, 1), (1, 2), (0, 2)), 3)
    assert inst.beta == 103.0
    assert maxcut_value(inst, [0]) == 2
    assert maxcut_value(inst, []) == 0
    assert maxcut_value(inst, [0, 1, 2]) == 0
    assert maxcut_decode(np.array([[0.9, 0.1, 0.4]]), inst, 2)
    assert not maxcut_decode(np.array([[0.9, 0.6, 0.7]]), inst, 1)


def test_maxcut_exhaustive_random_graphs():
    rng = np.random.default_rng(0)
    for _ in range(20):
        d = int(rng.integers(1, 6))
        inst = random_graph(d, rng)
        lap = laplacian(inst.edges, d)
        assert np.all(lap.sum(axis=1) == 0)
        for bits in itertools.product((0, 1), repeat=d):
            subset = [i for i, b in enumerate(bits) if b]
            brute = sum(1 for a, b in inst.edges if bits[a] != bits[b])
            assert maxcut_value(inst, subset) == brute


def test_maxcut_optimal_mass():
    inst = MaxCutInstance(((0, 1), (1, 2), (2, 3), (3, 0)), 4)
    assert maxcut_optimal_mass(inst) >= 0.99
    assert len(maxcut_tilted(inst)) == 16


def test_maxcut_rejects_bad_edges():
    with pytest.raises(ValueError):
        MaxCutInstance(((0, 0),), 2)
    with pytest.raises(ValueError):
        MaxCutInstance(((0, 5),), 2)


def test_flip_probability_limits():
    assert gibbs_flip_probability(0.0) == pytest.approx(0.5)
    assert gibbs_flip_probability(4.0) == pytest.approx(3.588e-3, rel=1e-3)
    assert gibbs_flip_probability(8.0) < gibbs_flip_probability(4.0)


def test_flip_probability_matches_simulation():
    rng = np.random.default_rng(5)
    a = math.sqrt(2 * 2.0)
    z = a + rng.standard_normal(400_000)
    p_leave = np.mean(rng.random(len(z)) >= 1 / (1 + np.exp(-2 * a * z)))
    assert p_leave == pytest.approx(gibbs_flip_probability(2.0), rel=0.03)


def test_gibbs_untilted_mixes():
    s = gibbs_chain(0.0, [1.0], 10_000, 0)
    assert abs(s.flips - 5000) < 300
    assert abs(s.positive_fraction - 0.5) < 0.05


def test_gibbs_strong_tilt_is_stuck():
    s = gibbs_chain(4.0, [0.6, 0.8], 10_000, 1)
    expected = 10_000 * gibbs_flip_probability(4.0)
    assert abs(s.flips - expected) < 5 * math.sqrt(expected)
    # with lam = 10 the chain essentially never leaves
    assert gibbs_chain(10.0, [1.0], 10_000, 1).flips <= 2


def test_gibbs_mixture_mode_and_trace():
    s = gibbs_chain(4.0, [1.0], 2000, 3, mode="mixture", keep_trace=True)
    assert s.trace.shape == (2000, 2)
    assert s.flips < 60
    assert set(s.to_dict()) == {"positive_fraction", "flips", "final_x", "final_z"}
    with pytest.raises(ValueError):
        gibbs_chain(-1.0, [1.0], 10, 0)
