import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from morphoclass.central import (
    band_depth_array,
    functional_median,
    mean_shape,
    modified_band_depth,
    pointwise_median,
)
from morphoclass.errors import InsufficientSampleError, InvalidInputError
from morphoclass.geometry import AlignmentState, ShapeSample
from oracles import band_depth_bruteforce
from strategies import seeds


def aligned(array):
    return ShapeSample.from_array(array, state=AlignmentState.ALIGNED)


def test_mean_of_identical_and_two_members(rng):
    x = rng.normal(size=(5, 2))
    assert np.allclose(mean_shape(aligned(np.stack([x] * 3))).points, x)
    y = rng.normal(size=(5, 2))
    assert np.allclose(mean_shape(aligned(np.stack([x, y]))).points, (x + y) / 2)


def test_mean_matches_summation(rng):
    arr = rng.normal(size=(5, 4, 2))
    expected = sum(arr[i] for i in range(5)) / 5
    assert np.allclose(mean_shape(aligned(arr)).points, expected, atol=1e-15)


def test_central_patterns_reject_raw_and_empty(rng):
    with pytest.raises(InvalidInputError):
        mean_shape(ShapeSample.from_array(rng.normal(size=(3, 4, 2))))
    with pytest.raises(InsufficientSampleError):
        pointwise_median(ShapeSample((), AlignmentState.ALIGNED))


def test_pointwise_median_conventions(rng):
    x = rng.normal(size=(4, 2))
    assert np.allclose(pointwise_median(aligned(np.stack([x] * 3))).points, x)
    vals = np.array([1.0, 2.0, 3.0, 100.0])
    arr = np.zeros((4, 3, 2))
    arr[:, 0, 0] = vals
    assert pointwise_median(aligned(arr)).points[0, 0] == 2.5


def test_pointwise_median_robust_to_outlier(rng):
    arr = rng.normal(size=(7, 4, 2))
    arr[0] += 1000
    med = pointwise_median(aligned(arr)).points
    rest = arr[1:]
    assert np.all(med >= rest.min(axis=0)) and np.all(med <= rest.max(axis=0))


def nested_curves():
    k = 5
    a = np.zeros((k, 2))
    b = np.ones((k, 2))
    c = 2 * np.ones((k, 2))
    return np.stack([a, b, c])


def test_nested_curves_depths():
    arr = nested_curves()
    d = modified_band_depth(aligned(arr))
    oracle = 0.5 * (band_depth_bruteforce(arr[:, :, 0]) + band_depth_bruteforce(arr[:, :, 1]))
    assert np.allclose(d.depths, [2 / 3, 1.0, 2 / 3])
    assert np.allclose(d.depths, oracle)
    assert d.deepest_index == 1
    assert np.array_equal(functional_median(aligned(arr)).points, arr[1])


def test_identical_members_tie_to_first(rng):
    x = rng.normal(size=(4, 2))
    s = ShapeSample.from_array(np.stack([x] * 4), ids=list("abcd"), state=AlignmentState.ALIGNED)
    d = modified_band_depth(s)
    assert np.all(d.depths == 1.0)
    assert d.deepest_index == 0
    assert functional_median(s).id == "a"


def test_random_curves_match_bruteforce(rng):
    arr = rng.normal(size=(6, 7, 2))
    d = modified_band_depth(aligned(arr)).depths
    oracle = 0.5 * (band_depth_bruteforce(arr[:, :, 0]) + band_depth_bruteforce(arr[:, :, 1]))
    assert np.allclose(d, oracle, atol=1e-12)


def test_band_depth_needs_two():
    with pytest.raises(InsufficientSampleError):
        band_depth_array(np.zeros((1, 3)))


@settings(max_examples=40)
@given(seeds, st.integers(2, 9), st.integers(2, 8))
def test_depth_range_and_permutation_equivariance(seed, n, k):
    rng = np.random.default_rng(seed)
    arr = rng.normal(size=(n, k, 2))
    d = modified_band_depth(aligned(arr)).depths
    assert np.all(d > 0) and np.all(d <= 1)
    perm = rng.permutation(n)
    dp = modified_band_depth(aligned(arr[perm])).depths
    assert np.allclose(dp, d[perm], atol=1e-15)


@settings(max_examples=30)
@given(seeds)
def test_functional_median_is_a_member(seed):
    rng = np.random.default_rng(seed)
    arr = rng.normal(size=(9, 5, 2))
    med = functional_median(aligned(arr))
    assert any(np.array_equal(med.points, a) for a in arr)


def test_duplicated_extreme_moves_mean_not_median(rng):
    changed_mean = changed_median = 0
    for trial in range(30):
        arr = rng.normal(size=(15, 6, 2))
        arr[0] += 8.0
        before_mean = mean_shape(aligned(arr)).points
        before_med = functional_median(aligned(arr)).points
        more = np.concatenate([arr, arr[:1]])
        changed_mean += np.max(np.abs(mean_shape(aligned(more)).points - before_mean)) > 0.1
        changed_median += not np.array_equal(functional_median(aligned(more)).points, before_med)
    assert changed_mean == 30
    assert changed_median < changed_mean
