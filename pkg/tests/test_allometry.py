import math

import numpy as np
import pytest
from hypothesis import given, settings

from morphoclass.alignment import fgpa, fopa
from morphoclass.allometry import (
    AllometricModel,
    fit_allometry,
    fit_allometry_array,
    residualize,
    residualize_new,
)
from morphoclass.errors import (
    InsufficientSampleError,
    InvalidInputError,
    SingularRegressorError,
    TemplateMismatchError,
)
from morphoclass.geometry import AlignmentState, LandmarkConfiguration, ShapeSample, centroid_sizes
from oracles import ols_normal_equations
from strategies import seeds


def aligned_sample(array):
    return ShapeSample.from_array(array, state=AlignmentState.ALIGNED)


def test_null_relation_slopes_within_three_se(rng):
    n, p = 200, 10
    ls = rng.uniform(0, 2, n)
    coords = rng.normal(size=(n, p))
    m = fit_allometry_array(coords, ls)
    assert np.all(np.abs(m.slopes) < 3 * m.slope_se + 1e-12) or np.mean(
        np.abs(m.slopes) < 3 * m.slope_se) >= 0.9


def test_perfect_linear_fit_leaves_zero_residuals(rng):
    ls = rng.uniform(0, 3, 12)
    a, b = rng.normal(size=8), rng.normal(size=8)
    arr = (a + np.outer(ls, b)).reshape(12, 4, 2)
    s = aligned_sample(arr)
    m = fit_allometry(s, ls)
    assert np.max(np.abs(residualize(s, ls, m).array)) < 1e-12


def test_coefficients_match_normal_equations():
    rng = np.random.default_rng(4)
    ls = rng.normal(size=4)
    Y = rng.normal(size=(4, 6))
    m = fit_allometry_array(Y, ls)
    a, b = ols_normal_equations(ls, Y)
    assert np.allclose(m.intercepts, a, atol=1e-12)
    assert np.allclose(m.slopes, b, atol=1e-12)


def test_fit_errors(rng):
    s = aligned_sample(rng.normal(size=(5, 3, 2)))
    with pytest.raises(SingularRegressorError):
        fit_allometry(s, np.full(5, 1.3))
    with pytest.raises(InsufficientSampleError):
        fit_allometry(aligned_sample(rng.normal(size=(2, 3, 2))), [0.0, 1.0])
    with pytest.raises(InvalidInputError):
        fit_allometry(ShapeSample.from_array(rng.normal(size=(5, 3, 2))), rng.normal(size=5))


def test_identity_model(rng):
    s = aligned_sample(rng.normal(size=(4, 3, 2)))
    zero = AllometricModel(np.zeros(6), np.zeros(6), 4)
    out = residualize(s, rng.normal(size=4), zero)
    assert np.array_equal(out.array, s.array)
    assert out.alignment_state is AlignmentState.RESIDUAL


def test_template_mismatch(rng):
    s = aligned_sample(rng.normal(size=(4, 3, 2)))
    with pytest.raises(TemplateMismatchError):
        residualize(s, np.zeros(4), AllometricModel(np.zeros(8), np.zeros(8), 4))


@settings(max_examples=30)
@given(seeds)
def test_training_residuals_centred_and_uncorrelated(seed):
    rng = np.random.default_rng(seed)
    raw = rng.normal(size=(15, 5, 2)) * rng.uniform(0.5, 5, (15, 1, 1)) + np.arange(10).reshape(5, 2)
    res = fgpa(ShapeSample.from_array(raw))
    ls = np.log(centroid_sizes(raw))
    m = fit_allometry(res.aligned, ls)
    r = residualize(res.aligned, ls, m).flat()
    assert np.max(np.abs(r.mean(axis=0))) < 1e-10
    lc = ls - ls.mean()
    corr_num = lc @ (r - r.mean(axis=0))
    assert np.max(np.abs(corr_num)) / (np.linalg.norm(lc) * np.linalg.norm(r, axis=0).max()) < 1e-8


def test_new_individual_same_as_training(rng):
    raw = rng.normal(size=(8, 4, 2)) * rng.uniform(1, 3, (8, 1, 1))
    res = fgpa(ShapeSample.from_array(raw))
    ls = np.log(centroid_sizes(raw))
    m = fit_allometry(res.aligned, ls)
    train_resid = residualize(res.aligned, ls, m)
    new = residualize_new(res.aligned[2], LandmarkConfiguration(raw[2]), m)
    assert np.allclose(new.points, train_resid[2].points, atol=1e-14)


def test_scaling_raw_new_shifts_by_slope_log2(rng):
    m = AllometricModel(rng.normal(size=8), rng.normal(size=8), 10)
    aligned = LandmarkConfiguration(rng.normal(size=(4, 2)))
    raw = LandmarkConfiguration(rng.normal(size=(4, 2)))
    a = residualize_new(aligned, raw, m).flatten()
    b = residualize_new(aligned, LandmarkConfiguration(2 * raw.points), m).flatten()
    assert np.allclose(a - b, m.slopes * math.log(2), atol=1e-12)


def test_zero_slopes_subtract_intercepts(rng):
    m = AllometricModel(rng.normal(size=8), np.zeros(8), 10)
    aligned = LandmarkConfiguration(rng.normal(size=(4, 2)))
    out = residualize_new(aligned, LandmarkConfiguration(rng.normal(size=(4, 2))), m)
    assert np.allclose(out.flatten(), aligned.flatten() - m.intercepts)


@settings(max_examples=30)
@given(seeds)
def test_residualize_new_is_affine_in_log_size(seed):
    rng = np.random.default_rng(seed)
    m = AllometricModel(rng.normal(size=10), rng.normal(size=10), 10)
    aligned = LandmarkConfiguration(rng.normal(size=(5, 2)))
    raw = rng.normal(size=(5, 2))
    sizes = rng.uniform(0.1, 10, 3)
    outs = [residualize_new(aligned, LandmarkConfiguration(s * raw), m).flatten() for s in sizes]
    for s, o in zip(sizes[1:], outs[1:]):
        assert np.allclose(outs[0] - o, m.slopes * math.log(s / sizes[0]), atol=1e-10)


def test_fold_replay_matches_refit(rng):
    raw = rng.normal(size=(10, 5, 2)) * rng.uniform(1, 4, (10, 1, 1))
    held = 3
    train = np.delete(raw, held, axis=0)
    res = fgpa(ShapeSample.from_array(train))
    ls = np.log(centroid_sizes(train))
    m = fit_allometry(res.aligned, ls)
    target = LandmarkConfiguration(res.aligned.array.mean(axis=0))
    aligned_new = fopa(LandmarkConfiguration(raw[held]), target).aligned
    resid = residualize_new(aligned_new, LandmarkConfiguration(raw[held]), m)
    expected = aligned_new.flatten() - m.intercepts - m.slopes * math.log(centroid_sizes(raw[held][None])[0])
    assert np.allclose(resid.flatten(), expected, atol=1e-12)


def test_adjust_differs_from_residual_by_constant(rng):
    ls = rng.uniform(0, 2, 9)
    Y = rng.normal(size=(9, 6))
    m = fit_allometry_array(Y, ls)
    pure = Y - m.predict(ls)
    adj = m.adjust(Y, ls)
    diff = adj - pure
    assert np.allclose(diff, diff[0], atol=1e-12)
    assert np.allclose(diff[0], Y.mean(axis=0), atol=1e-12)
