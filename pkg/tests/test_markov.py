from math import gcd

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lsainfer.errors import GenerationError, NumericError, ValidationError
from lsainfer.markov import (ArOneProcess, FiniteChain, check_ergodicity, iid_chain, random_ergodic_chain,
                             sample_trajectory, stationary_distribution, TrajectorySampler)
from lsainfer.rng import generator


def test_stationary_symmetric():
    np.testing.assert_allclose(stationary_distribution([[0.5, 0.5], [0.5, 0.5]]), [0.5, 0.5], atol=1e-15)


def test_stationary_two_state():
    # exact rational solve: (2/3, 1/3)
    np.testing.assert_allclose(stationary_distribution([[0.9, 0.1], [0.2, 0.8]]), [2 / 3, 1 / 3], atol=1e-14)


def test_stationary_three_cycle_is_solved_even_though_periodic():
    pi = stationary_distribution([[0, 1, 0], [0, 0, 1], [1, 0, 0]])
    np.testing.assert_allclose(pi, [1 / 3] * 3, atol=1e-14)
    assert check_ergodicity([[0, 1, 0], [0, 0, 1], [1, 0, 0]]) == {"irreducible": True, "aperiodic": False}


def test_stationary_power_iteration_branch():
    chain = random_ergodic_chain(250, seed=3)
    pi = chain.stationary
    assert np.abs(pi @ chain.transition - pi).sum() <= 1e-10
    assert abs(pi.sum() - 1) <= 1e-12


@pytest.mark.parametrize("bad", [
    [[0.5, 0.4], [0.3, 0.7]],
    [[0.5, -0.5], [1.0, 0.0]],
    [[0.5, 0.5, 0.0]],
    [[np.nan, 1.0], [0.5, 0.5]],
])
def test_stationary_rejects_non_stochastic(bad):
    with pytest.raises(ValidationError):
        stationary_distribution(bad)


def test_stationary_reducible_raises_numeric():
    with pytest.raises(NumericError):
        stationary_distribution(np.eye(2))


@pytest.mark.parametrize("p, expected", [
    ([[0, 1], [1, 0]], {"irreducible": True, "aperiodic": False}),
    (np.eye(2), {"irreducible": False, "aperiodic": True}),
    ([[0.5, 0.5], [0.5, 0.5]], {"irreducible": True, "aperiodic": True}),
])
def test_check_ergodicity_examples(p, expected):
    assert check_ergodicity(p) == expected


def _brute_force(p):
    n = p.shape[0]
    pos = (p > 0).astype(int)
    reach = np.linalg.matrix_power(np.eye(n, dtype=int) + pos, n)
    irreducible = bool(np.all(reach > 0))
    aperiodic = True
    power = np.eye(n, dtype=int)
    returns = [0] * n
    for t in range(1, 2 * n * n + 1):
        power = np.minimum(power @ pos, 1)
        for i in range(n):
            if power[i, i]:
                returns[i] = gcd(returns[i], t)
    for i in range(n):
        if returns[i] not in (0, 1):
            aperiodic = False
    return {"irreducible": irreducible, "aperiodic": aperiodic}


@st.composite
def half_matrices(draw):
    n = draw(st.integers(1, 5))
    rows = []
    for _ in range(n):
        cols = draw(st.lists(st.integers(0, n - 1), min_size=1, max_size=2, unique=True))
        row = np.zeros(n)
        row[cols] = 1.0 / len(cols)
        rows.append(row)
    return np.array(rows)


@settings(max_examples=400, deadline=None)
@given(half_matrices())
def test_check_ergodicity_matches_brute_force(p):
    assert check_ergodicity(p) == _brute_force(p)


def test_finite_chain_invariants_and_readonly():
    chain = random_ergodic_chain(10, seed=7)
    np.testing.assert_allclose(chain.transition.sum(axis=1), 1.0, atol=1e-12)
    assert np.abs(chain.stationary @ chain.transition - chain.stationary).sum() <= 1e-10
    with pytest.raises(ValueError):
        chain.transition[0, 0] = 0.3


def test_finite_chain_rejects_wrong_stationary():
    with pytest.raises(ValidationError):
        FiniteChain([[0.9, 0.1], [0.2, 0.8]], [0.5, 0.5])


def test_random_chain_deterministic():
    a = random_ergodic_chain(6, seed=11)
    b = random_ergodic_chain(6, seed=11)
    assert np.array_equal(a.transition, b.transition)


@pytest.mark.parametrize("seed", range(5))
def test_random_two_state_chain_is_ergodic(seed):
    chain = random_ergodic_chain(2, seed=seed)
    assert check_ergodicity(chain.transition) == {"irreducible": True, "aperiodic": True}


def test_random_chain_validates_size():
    with pytest.raises(ValidationError):
        random_ergodic_chain(1, seed=0)


def test_random_chain_cap_raises_generation_error():
    class Always:
        def uniform(self, *args, size=None):
            return np.eye(size[0])
    with pytest.raises(GenerationError):
        random_ergodic_chain(3, None, max_draws=3, rng=Always())


def test_sample_trajectory_deterministic_chain():
    chain = FiniteChain([[0, 1], [1, 0]], [0.5, 0.5])
    np.testing.assert_array_equal(sample_trajectory(chain, start=0, length=4, seed=1), [0, 1, 0, 1])


def test_sample_trajectory_same_seed():
    chain = random_ergodic_chain(5, seed=2)
    a = sample_trajectory(chain, "stationary", 1000, seed=9)
    b = sample_trajectory(chain, "stationary", 1000, seed=9)
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("start", [-1, 2, "first"])
def test_sample_trajectory_invalid_start(start):
    chain = FiniteChain([[0.9, 0.1], [0.2, 0.8]])
    with pytest.raises(ValidationError):
        sample_trajectory(chain, start, 10, seed=0)


def test_occupancy_two_state_chain():
    chain = FiniteChain([[0.9, 0.1], [0.2, 0.8]])
    x = sample_trajectory(chain, 0, 1_000_000, seed=4)
    assert abs(np.mean(x == 0) - 2 / 3) <= 0.01


def test_occupancy_generated_chain():
    chain = random_ergodic_chain(10, seed=5)
    x = sample_trajectory(chain, "stationary", 1_000_000, seed=6)
    freq = np.bincount(x, minlength=10) / x.size
    assert np.abs(freq - chain.stationary).max() <= 0.01


def test_sampler_chunking_invariant():
    chain = random_ergodic_chain(4, seed=8)
    one = TrajectorySampler(chain, "stationary", generator(3, 0)).next_chunk(5000)
    s = TrajectorySampler(chain, "stationary", generator(3, 0))
    parts = np.concatenate([s.next_chunk(k) for k in (1, 17, 982, 4000)])
    np.testing.assert_array_equal(one, parts)


def test_iid_chain_rows_equal():
    chain = iid_chain([0.2, 0.3, 0.5])
    assert chain.is_iid()
    np.testing.assert_allclose(chain.stationary, [0.2, 0.3, 0.5])


def test_ar_one_zero_correlation_is_standard_normal():
    proc = ArOneProcess(3, 0.0)
    x = proc.sample(200_000, np.random.default_rng(0))
    np.testing.assert_allclose(x.mean(axis=0), 0.0, atol=0.01)
    np.testing.assert_allclose(x.std(axis=0), 1.0, atol=0.01)
    lag = np.mean(x[1:] * x[:-1], axis=0)
    np.testing.assert_allclose(lag, 0.0, atol=0.01)


def test_ar_one_stationary_variance_and_lag():
    proc = ArOneProcess(1, 0.5)
    x = proc.sample(400_000, np.random.default_rng(1))[:, 0]
    assert abs(x.var() - 1.0) < 0.02
    assert abs(np.corrcoef(x[1:], x[:-1])[0, 1] - 0.5) < 0.01


@pytest.mark.parametrize("rho", [1.0, -1.0, 1.5])
def test_ar_one_rejects_nonstationary(rho):
    with pytest.raises(ValidationError):
        ArOneProcess(2, rho)
