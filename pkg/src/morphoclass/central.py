"""Central patterns of an aligned sample: mean, pointwise median, and the
functional median (deepest member under modified band depth)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientSampleError, InvalidInputError
from .geometry import AlignmentState, LandmarkConfiguration, ShapeSample


@dataclass(frozen=True, eq=False)
class DepthRanking:
    depths: np.ndarray
    #: 0-based position in the sample; ties go to the lowest position
    deepest_index: int


def _check_aligned(sample: ShapeSample):
    if len(sample) == 0:
        raise InsufficientSampleError("empty sample")
    if sample.alignment_state is AlignmentState.RAW:
        raise InvalidInputError("central patterns are defined on aligned or residual samples")


def mean_shape(sample: ShapeSample) -> LandmarkConfiguration:
    _check_aligned(sample)
    return LandmarkConfiguration(sample.array.mean(axis=0), id="mean")


def pointwise_median(sample: ShapeSample) -> LandmarkConfiguration:
    _check_aligned(sample)
    return LandmarkConfiguration(np.median(sample.array, axis=0), id="pointwise-median")


def band_depth_array(curves: np.ndarray) -> np.ndarray:
    """Modified band depth (bands of two curves, inclusive) for ``(n, m)`` curves
    observed at ``m`` domain points.

    For every point, the pairs ``{j, l}`` (among all ``n`` curves, the curve
    itself included) whose band misses a value are exactly the pairs lying
    strictly above it or strictly below it, so the containing count is
    ``C(n,2) - C(above,2) - C(below,2)``. That makes the computation
    ``O(n m log n)`` and exact.
    """
    n, m = curves.shape
    if n < 2:
        raise InsufficientSampleError("band depth needs at least 2 curves")
    srt = np.sort(curves, axis=0)
    below = np.empty((n, m), dtype=np.int64)
    above = np.empty((n, m), dtype=np.int64)
    for t in range(m):
        below[:, t] = np.searchsorted(srt[:, t], curves[:, t], side="left")
        above[:, t] = n - np.searchsorted(srt[:, t], curves[:, t], side="right")
    pairs = n * (n - 1) // 2
    inside = pairs - above * (above - 1) // 2 - below * (below - 1) // 2
    return inside.sum(axis=1) / (m * pairs)


def band_depth_configs(array: np.ndarray) -> np.ndarray:
    """Average of the per-axis band depths of an ``(n, k, 2)`` stack."""
    return 0.5 * (band_depth_array(array[:, :, 0]) + band_depth_array(array[:, :, 1]))


def modified_band_depth(sample: ShapeSample) -> DepthRanking:
    if len(sample) < 2:
        raise InsufficientSampleError("band depth needs at least 2 configurations")
    depths = band_depth_configs(sample.array)
    depths.setflags(write=False)
    return DepthRanking(depths, int(np.argmax(depths)))


def functional_median(sample: ShapeSample) -> LandmarkConfiguration:
    """The deepest member itself (never a synthetic configuration)."""
    _check_aligned(sample)
    return sample[modified_band_depth(sample).deepest_index]
