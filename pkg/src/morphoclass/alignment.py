"""Full ordinary and full generalized Procrustes analysis.

Rotations are proper (no reflections) and scaling is always allowed. The
array-level functions (``opa_array``, ``gpa_array``) are what the pipeline
uses inside its loops; ``fopa``/``fgpa`` wrap them for the sample types.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import (
    DegenerateConfigurationError,
    InsufficientSampleError,
    TemplateMismatchError,
)
from .geometry import (
    DEGENERACY_THRESHOLD,
    AlignmentState,
    LandmarkConfiguration,
    ShapeSample,
    centroid_sizes,
)

GPA_TOLERANCE = 1e-10
GPA_MAX_ITER = 200
#: the SS criterion is flat at the optimum, so the reference itself must also
#: settle (Frobenius change) before stopping
GPA_REFERENCE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class SimilarityTransform:
    """``x -> scale * x @ R(rotation_angle) + translation`` for row-vector points."""

    rotation_angle: float
    scale: float
    translation: tuple[float, float]

    @property
    def rotation(self) -> np.ndarray:
        c, s = math.cos(self.rotation_angle), math.sin(self.rotation_angle)
        return np.array([[c, s], [-s, c]])

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return self.scale * pts @ self.rotation + np.asarray(self.translation)


class FopaResult(NamedTuple):
    aligned: LandmarkConfiguration
    transform: SimilarityTransform
    residual_ss: float


@dataclass(frozen=True, eq=False)
class GpaResult:
    aligned: ShapeSample
    mean_shape: LandmarkConfiguration
    iterations: int
    final_change: float
    #: unit-size reference the members were fitted to at convergence
    reference: np.ndarray


def _rotation_batch(cross: np.ndarray):
    """Optimal proper rotations and the matching trace terms for a stack of
    ``2x2`` cross-covariance matrices ``X^T Y``."""
    u, s, vt = np.linalg.svd(cross)
    det = np.sign(np.linalg.det(u @ vt))
    det[det == 0] = 1.0
    d = np.ones(cross.shape[:-1])
    d[..., -1] = det
    rot = (u * d[..., None, :]) @ vt
    trace = np.sum(s * d, axis=-1)
    return rot, trace


def opa_array(source: np.ndarray, target: np.ndarray):
    """Vectorised full OPA of ``source`` (``(n, k, 2)`` or ``(k, 2)``) onto
    ``target`` (``(k, 2)``).

    Returns ``(aligned, scale, rotation, translation)``. Sources must be
    non-degenerate; no check is made here.
    """
    single = source.ndim == 2
    src = source[None] if single else source
    src_c = src.mean(axis=1, keepdims=True)
    tgt_c = target.mean(axis=0)
    xs = src - src_c
    yt = target - tgt_c
    cross = np.einsum("nki,kj->nij", xs, yt)
    rot, trace = _rotation_batch(cross)
    scale = trace / np.sum(xs**2, axis=(1, 2))
    aligned = scale[:, None, None] * (xs @ rot) + tgt_c
    translation = tgt_c - scale[:, None] * np.einsum("ni,nij->nj", src_c[:, 0, :], rot)
    if single:
        return aligned[0], scale[0], rot[0], translation[0]
    return aligned, scale, rot, translation


def fopa(source: LandmarkConfiguration, target: LandmarkConfiguration) -> FopaResult:
    """Align ``source`` to ``target`` by the least-squares similarity transform."""
    src = source.points if isinstance(source, LandmarkConfiguration) else np.asarray(source, float)
    tgt = target.points if isinstance(target, LandmarkConfiguration) else np.asarray(target, float)
    if src.shape != tgt.shape:
        raise TemplateMismatchError(
            f"source has {src.shape[0]} landmarks, target has {tgt.shape[0]}"
        )
    for name, pts in (("source", src), ("target", tgt)):
        if centroid_sizes(pts[None])[0] < DEGENERACY_THRESHOLD:
            raise DegenerateConfigurationError(f"{name} configuration is degenerate")
    aligned, scale, rot, t = opa_array(src, tgt)
    transform = SimilarityTransform(
        rotation_angle=math.atan2(rot[0, 1], rot[0, 0]),
        scale=float(scale),
        translation=(float(t[0]), float(t[1])),
    )
    residual = float(np.sum((aligned - tgt) ** 2))
    if isinstance(source, LandmarkConfiguration):
        out = source.with_points(aligned)
    else:
        out = LandmarkConfiguration(aligned)
    return FopaResult(out, transform, residual)


def _unit(config: np.ndarray):
    # re-centre too: rounding in the centroid would otherwise be amplified by
    # every normalisation when the fits are much smaller than unit size
    c = config - config.mean(axis=0)
    norm = float(np.sqrt(np.sum(c**2)))
    return c / norm if norm > 1e-8 else None


def gpa_array(raw: np.ndarray, tol: float = GPA_TOLERANCE, max_iter: int = GPA_MAX_ITER):
    """Full GPA on an ``(n, k, 2)`` stack.

    Every member is centred and scaled to unit size, then repeatedly fitted
    (full OPA) to a unit-size reference, which is re-estimated as the
    normalised mean of the fits. Stops when the total Procrustes sum of
    squares changes by less than ``tol`` and the reference has stopped
    moving, or after ``max_iter`` iterations.

    Returns ``(fits, reference, iterations, final_change)``.
    """
    sizes = centroid_sizes(raw)
    z = (raw - raw.mean(axis=1, keepdims=True)) / sizes[:, None, None]
    ref = _unit(z.mean(axis=0))
    # orientations can cancel in the mean; fall back to the first member
    if ref is None:
        ref = z[0]
    prev = math.inf
    change = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        fits = opa_array(z, ref)[0]
        mean = fits.mean(axis=0)
        ss = float(np.sum((fits - mean) ** 2))
        new_ref = _unit(mean)
        if new_ref is None:
            new_ref = ref
        moved = float(np.sqrt(np.sum((new_ref - ref) ** 2)))
        ref = new_ref
        change = abs(prev - ss)
        prev = ss
        if change < tol and moved < GPA_REFERENCE_TOLERANCE:
            break
    fits = opa_array(z, ref)[0]
    return fits, ref, it, change


def fgpa(sample: ShapeSample, tol: float = GPA_TOLERANCE, max_iter: int = GPA_MAX_ITER) -> GpaResult:
    """Full generalized Procrustes analysis of a sample.

    The returned ``mean_shape`` is the arithmetic mean of the aligned
    members; it is slightly smaller than unit size because each fit is
    shrunk by the cosine of its Procrustes distance to the reference.
    """
    if len(sample) < 2:
        raise InsufficientSampleError("fgpa needs at least 2 configurations")
    raw = sample.array
    sizes = centroid_sizes(raw)
    bad = np.flatnonzero(sizes < DEGENERACY_THRESHOLD)
    if bad.size:
        raise DegenerateConfigurationError(
            f"configuration {sample[int(bad[0])].id!r} is degenerate (all points coincident)"
        )
    fits, ref, iters, change = gpa_array(raw, tol, max_iter)
    aligned = sample.with_array(fits, AlignmentState.ALIGNED)
    mean = LandmarkConfiguration(fits.mean(axis=0), id="mean")
    ref.setflags(write=False)
    return GpaResult(aligned, mean, iters, change, ref)
