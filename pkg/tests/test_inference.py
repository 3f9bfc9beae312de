import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from lsainfer.errors import DegenerateError, LengthError, NumericError, PlanError, ValidationError
from lsainfer.inference import (BatchMeans, BatchPlan, batch_means, confidence_intervals, covariance_estimator,
                                default_batch_count, diminishing_batch_bounds, diminishing_layout, infer,
                                normal_quantile, overall_mean)

Z975 = 1.9599639845400542355  # mpmath oracle, see tests/oracles.py


def means_of(values, counts=None):
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    counts = np.full(values.shape[0], 10) if counts is None else np.asarray(counts)
    return BatchMeans(values, counts)


def test_batch_means_hand_trace():
    plan = BatchPlan(burn_in=2, batch_size=4, discard=1, batch_count=2)
    bm = batch_means(np.arange(1.0, 11.0), plan)
    np.testing.assert_allclose(bm.means[:, 0], [5.0, 9.0])
    np.testing.assert_array_equal(bm.counts, [3, 3])
    assert overall_mean(bm)[0] == 7.0


def test_batch_means_constant_stream():
    plan = BatchPlan(3, 5, 2, 4)
    bm = batch_means(np.full((plan.total_steps, 2), 1.5), plan)
    assert np.all(bm.means == 1.5)


def test_batch_means_degenerate_plan_is_full_average():
    x = np.random.default_rng(0).standard_normal(1000)
    bm = batch_means(x, BatchPlan(0, 1000, 0, 1))
    np.testing.assert_allclose(bm.means[0, 0], x.mean(), rtol=1e-13)


def test_batch_means_short_stream():
    plan = BatchPlan(2, 4, 1, 2)
    with pytest.raises(LengthError) as info:
        batch_means(np.arange(8.0), plan)
    assert info.value.needed == 10 and info.value.available == 8


def test_batch_means_from_iterable_matches_array():
    x = np.random.default_rng(1).standard_normal((9000, 2))
    plan = BatchPlan(100, 1000, 50, 8)
    a = batch_means(x, plan)
    b = batch_means(iter(x), plan)
    np.testing.assert_allclose(a.means, b.means, rtol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 50), st.integers(1, 40), st.integers(1, 8), st.data())
def test_streaming_matches_materialized_reference(b, n, k, data):
    n0 = data.draw(st.integers(0, n - 1))
    plan = BatchPlan(b, n, n0, k)
    x = np.random.default_rng(b * 1000 + n).standard_normal(1000)
    if plan.total_steps > 1000:
        return
    ref = [np.mean([x[i] for i in range(b + j * n + n0, b + (j + 1) * n)]) for j in range(k)]
    acc_means = batch_means(x, plan).means[:, 0]
    np.testing.assert_allclose(acc_means, ref, rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize("kwargs", [dict(burn_in=-1, batch_size=3), dict(burn_in=0, batch_size=0),
                                    dict(burn_in=0, batch_size=3, discard=3)])
def test_plan_validation(kwargs):
    with pytest.raises(ValidationError):
        BatchPlan(**kwargs)


def test_default_plan():
    plan = BatchPlan.default(100_000)
    assert plan.batch_count == default_batch_count(100_000) == 32
    assert plan.batch_size == 100_000 // 33 and plan.burn_in == plan.batch_size
    assert plan.total_steps <= 100_000
    with pytest.raises(PlanError):
        BatchPlan.default(10, batch_count=20)


def test_overall_mean_examples():
    np.testing.assert_allclose(overall_mean(means_of([5.0, 9.0])), [7.0])
    np.testing.assert_allclose(overall_mean(means_of([3.0], [4])), [3.0])
    a = means_of([[1.0, 2.0], [3.0, -1.0], [0.5, 0.5]])
    b = means_of([[0.5, 0.5], [1.0, 2.0], [3.0, -1.0]])
    np.testing.assert_array_equal(overall_mean(a), overall_mean(b))


def test_covariance_examples():
    np.testing.assert_allclose(covariance_estimator(means_of([0.0, 2.0])), [[10.0]])
    np.testing.assert_allclose(covariance_estimator(means_of([4.0, 4.0, 4.0])), [[0.0]])
    np.testing.assert_allclose(covariance_estimator(means_of([[0.0, 0.0], [2.0, 2.0]])), [[10.0, 10.0], [10.0, 10.0]])


def test_covariance_needs_two_batches():
    with pytest.raises(DegenerateError):
        covariance_estimator(means_of([1.0]))


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 12), st.integers(1, 4)), elements=st.floats(-100, 100)),
       st.floats(-5, 5), st.floats(-5, 5))
def test_covariance_permutation_and_affine(m, c, shift):
    bm = means_of(m)
    sig = covariance_estimator(bm)
    perm = np.random.default_rng(0).permutation(m.shape[0])
    scale = max(1.0, np.abs(m).max()) ** 2
    np.testing.assert_array_equal(covariance_estimator(means_of(m[perm])), sig)
    moved = covariance_estimator(means_of(c * m + shift))
    np.testing.assert_allclose(moved, c * c * sig, rtol=1e-7, atol=1e-7 * scale * max(1.0, c * c))
    np.testing.assert_allclose(sig, sig.T, rtol=0, atol=0)
    assert np.linalg.eigvalsh(sig).min() >= -1e-10 * scale * m.shape[0]


def test_normal_quantile():
    assert normal_quantile(0.5) == 0.0
    assert abs(normal_quantile(0.975) - Z975) <= 1e-8
    assert abs(normal_quantile(0.025) + Z975) <= 1e-8
    for p in (0.0, 1.0, -0.1, 1.2):
        with pytest.raises(ValidationError):
            normal_quantile(p)


def test_confidence_interval_examples():
    lo, hi = confidence_intervals([0.0], [[1.0]], 0.05, 100)
    np.testing.assert_allclose([lo[0], hi[0]], [-0.19599639845400542, 0.19599639845400542], rtol=1e-12)
    lo, hi = confidence_intervals([3.0], [[0.0]], 0.05, 100)
    assert lo[0] == hi[0] == 3.0
    w1 = np.diff(confidence_intervals([0.0], [[2.0]], 0.05, 50))
    w4 = np.diff(confidence_intervals([0.0], [[2.0]], 0.05, 200))
    np.testing.assert_allclose(w1 / w4, 2.0, rtol=1e-14)


def test_confidence_interval_negative_diagonal():
    lo, hi = confidence_intervals([1.0], [[-1e-13]], 0.05, 10)
    assert lo[0] == hi[0] == 1.0
    with pytest.raises(NumericError):
        confidence_intervals([1.0], [[-1e-6]], 0.05, 10)


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-6, 1e3), st.integers(1, 10**6), st.floats(0.001, 0.5))
def test_half_width_identity(var, size, q):
    lo, hi = confidence_intervals([0.0], [[var]], q, size)
    z = normal_quantile(1 - q / 2)
    np.testing.assert_allclose((hi - lo) * np.sqrt(size) / (2 * z), np.sqrt(var), rtol=1e-12)


def test_infer_report_invariants():
    rng = np.random.default_rng(2)
    bm = means_of(rng.standard_normal((20, 3)))
    rep = infer(bm, 0.1)
    assert rep.level == pytest.approx(0.9)
    assert np.all(rep.ci_lower <= rep.point_estimate) and np.all(rep.point_estimate <= rep.ci_upper)
    np.testing.assert_allclose(rep.covariance, rep.covariance.T)
    d = rep.to_dict()
    assert set(d) >= {"point_estimate", "covariance", "ci_lower", "ci_upper", "level", "plan"}


def test_diminishing_hand_example():
    np.testing.assert_array_equal(diminishing_batch_bounds(10_000, 9, 0.5),
                                  [100, 400, 900, 1600, 2500, 3600, 4900, 6400, 8100, 10000])


def test_diminishing_single_batch():
    e = diminishing_batch_bounds(10_000, 1, 0.5)
    np.testing.assert_array_equal(e, [round((100 / 2) ** 2), 10_000])


@settings(max_examples=100, deadline=None)
@given(st.integers(1000, 10**6), st.integers(1, 30), st.sampled_from([0.3, 0.5, 0.7]))
def test_diminishing_bounds_properties(t, k, beta):
    if t < (k + 1) ** (1 / (1 - beta)):
        return
    e = diminishing_batch_bounds(t, k, beta)
    assert e[-1] == t and e.size == k + 1
    assert np.all(np.diff(e) > 0)
    lengths = np.diff(e)
    assert np.all(np.diff(lengths) >= -1)  # rounding can shave one step off a neighbour


def test_diminishing_beyond_precondition_still_increasing():
    # T = 2e5, K = 1000 violates T >= (K+1)^2; rounding repair keeps the layout valid
    layout = diminishing_layout(200_000, 1000, 0.5)
    assert layout.batch_count == 1000 and layout.total_steps == 200_000
    assert np.all(layout.counts >= 1)


def test_diminishing_validation():
    with pytest.raises(ValidationError):
        diminishing_batch_bounds(1000, 5, 1.0)
    with pytest.raises(PlanError):
        diminishing_batch_bounds(5, 10, 0.5)
