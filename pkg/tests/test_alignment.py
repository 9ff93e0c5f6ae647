import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from morphoclass.alignment import GPA_MAX_ITER, GPA_TOLERANCE, fgpa, fopa
from morphoclass.errors import DegenerateConfigurationError, TemplateMismatchError
from morphoclass.geometry import LandmarkConfiguration, ShapeSample
from oracles import fopa_grid, rotation, similarity
from strategies import point_sets, seeds, similarity_params


def best_global_rotation(a, b):
    """Rotation R minimising ||a @ R - b|| over whole stacks (no scaling)."""
    A, B = a.reshape(-1, 2), b.reshape(-1, 2)
    u, _, vt = np.linalg.svd(A.T @ B)
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1, d]) @ vt


def equal_modulo_rotation(a, b, atol):
    R = best_global_rotation(a, b)
    return np.max(np.abs(a @ R - b)) < atol


def sample_of(arr):
    return ShapeSample.from_array(arr)


def test_self_alignment_is_identity(rng):
    x = LandmarkConfiguration(rng.normal(size=(7, 2)))
    res = fopa(x, x)
    assert res.transform.rotation_angle == pytest.approx(0, abs=1e-12)
    assert res.transform.scale == pytest.approx(1, abs=1e-12)
    assert np.allclose(res.transform.translation, 0, atol=1e-12)
    assert res.residual_ss < 1e-24


def test_exact_recovery_of_known_transform(rng):
    x = rng.normal(size=(8, 2))
    y = similarity(x, 2.0, math.radians(30), (3, -1))
    res = fopa(y, x)
    assert res.transform.scale == pytest.approx(0.5, abs=1e-10)
    assert res.transform.rotation_angle == pytest.approx(math.radians(-30), abs=1e-10)
    assert res.residual_ss < 1e-18
    assert np.allclose(res.aligned.points, x, atol=1e-10)


@given(point_sets(k_min=3, k_max=10), similarity_params())
def test_recovery_property(pts, params):
    scale, theta, t = params
    res = fopa(similarity(pts, scale, theta, t), pts)
    assert np.allclose(res.aligned.points, pts, atol=1e-8 * max(1.0, np.abs(pts).max()))


def test_aligned_equals_transform_applied(rng):
    x, y = rng.normal(size=(2, 6, 2))
    res = fopa(x, y)
    assert np.allclose(res.transform.apply(x), res.aligned.points, atol=1e-12)
    assert res.residual_ss == pytest.approx(np.sum((res.aligned.points - y) ** 2), rel=1e-12)
    assert res.transform.scale > 0
    assert np.linalg.det(res.transform.rotation) == pytest.approx(1.0)


def test_optimal_against_angle_grid():
    rng = np.random.default_rng(11)
    x, y = rng.normal(size=(2, 8, 2))
    res = fopa(x, y)
    grid = fopa_grid(x, y)
    assert res.residual_ss <= grid * (1 + 1e-12)
    assert (grid - res.residual_ss) / res.residual_ss <= 1e-6


def test_optimality_spot_check(rng):
    x, y = rng.normal(size=(2, 8, 2))
    best = fopa(x, y).residual_ss
    s = rng.uniform(0.01, 5, 1000)
    th = rng.uniform(0, 2 * np.pi, 1000)
    t = rng.uniform(-3, 3, (1000, 2))
    for si, ti, tt in zip(s, th, t):
        assert best <= np.sum((similarity(x, si, ti, tt) - y) ** 2) + 1e-12


def test_fopa_errors(rng):
    with pytest.raises(TemplateMismatchError):
        fopa(rng.normal(size=(4, 2)), rng.normal(size=(5, 2)))
    with pytest.raises(DegenerateConfigurationError):
        fopa(np.ones((4, 2)), rng.normal(size=(4, 2)))


def test_fgpa_identical_members(rng):
    x = rng.normal(size=(6, 2))
    res = fgpa(sample_of(np.stack([x] * 4)))
    assert np.sum((res.aligned.array - res.mean_shape.points) ** 2) < 1e-20


def test_fgpa_similarity_copies_coincide(rng):
    x = rng.normal(size=(6, 2))
    copies = np.stack([similarity(x, s, th, (tx, -tx))
                       for s, th, tx in zip([1, 3, 0.2, 7], [0, 1, 2, 4], [0, 5, -3, 9])])
    res = fgpa(sample_of(copies))
    assert np.max(np.abs(res.aligned.array - res.aligned.array[0])) < 1e-8


def test_fgpa_fixed_point(rng):
    raw = rng.normal(size=(3, 6, 2))
    res = fgpa(sample_of(raw))
    mean_size = math.sqrt(np.sum((res.mean_shape.points - res.mean_shape.points.mean(0)) ** 2))
    for member in res.aligned:
        to_ref = fopa(member, LandmarkConfiguration(res.reference))
        assert to_ref.transform.rotation_angle == pytest.approx(0, abs=1e-6)
        assert to_ref.transform.scale == pytest.approx(1, abs=1e-6)
        assert np.allclose(to_ref.transform.translation, 0, atol=1e-6)
        to_mean = fopa(member, res.mean_shape)
        assert to_mean.transform.rotation_angle == pytest.approx(0, abs=1e-6)
        assert np.allclose(to_mean.transform.translation, 0, atol=1e-6)
        # the mean of the fits is the reference shrunk by a common factor
        assert to_mean.transform.scale == pytest.approx(mean_size, abs=1e-6)


def test_fgpa_result_invariants(rng):
    res = fgpa(sample_of(rng.normal(size=(10, 7, 2))))
    assert np.allclose(res.mean_shape.points, res.aligned.array.mean(axis=0), atol=1e-10)
    assert res.final_change <= GPA_TOLERANCE or res.iterations == GPA_MAX_ITER
    assert res.aligned.alignment_state.value == "aligned"


@settings(max_examples=25)
@given(seeds, st.integers(3, 12), st.integers(3, 9))
def test_fgpa_idempotent(seed, n, k):
    rng = np.random.default_rng(seed)
    raw = rng.normal(size=(n, k, 2)) + rng.normal(size=(1, k, 2)) * 2
    first = fgpa(sample_of(raw)).aligned.array
    second = fgpa(sample_of(first)).aligned.array
    assert equal_modulo_rotation(second, first, 1e-8)


@settings(max_examples=25)
@given(seeds, st.integers(3, 12), st.integers(3, 9))
def test_fgpa_similarity_invariant(seed, n, k):
    rng = np.random.default_rng(seed)
    raw = rng.normal(size=(n, k, 2)) + rng.normal(size=(1, k, 2)) * 2
    moved = np.stack([similarity(x, rng.uniform(0.1, 10), rng.uniform(0, 2 * np.pi),
                                 rng.uniform(-5, 5, 2)) for x in raw])
    a = fgpa(sample_of(raw)).aligned.array
    b = fgpa(sample_of(moved)).aligned.array
    assert equal_modulo_rotation(b, a, 1e-8)


def test_fgpa_names_degenerate_member(rng):
    raw = rng.normal(size=(3, 4, 2))
    raw[1] = 2.0
    s = ShapeSample.from_array(raw, ids=["a", "bad-one", "c"])
    with pytest.raises(DegenerateConfigurationError, match="bad-one"):
        fgpa(s)


def test_rotation_helper_matches_transform():
    from morphoclass.alignment import SimilarityTransform

    t = SimilarityTransform(0.4, 1.0, (0.0, 0.0))
    assert np.allclose(t.rotation, rotation(0.4))
