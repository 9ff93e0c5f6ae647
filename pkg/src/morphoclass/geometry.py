"""Landmark configurations, samples, and the size/centering primitives.

Coordinates are stored as ``(k, 2)`` float64 arrays. Landmark indices
exposed to users are 1-based; arrays are indexed from 0 internally.
"""

from __future__ import annotations

import enum
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field, replace
from functools import cached_property
from types import MappingProxyType
from typing import Any

import numpy as np

from .errors import (
    DegenerateConfigurationError,
    InsufficientSampleError,
    InvalidInputError,
    TemplateMismatchError,
)

#: centroid size below this is treated as "all points coincident"
DEGENERACY_THRESHOLD = 1e-12


class AlignmentState(str, enum.Enum):
    RAW = "raw"
    ALIGNED = "aligned"
    RESIDUAL = "allometric-residual"


def _as_points(points) -> np.ndarray:
    arr = np.array(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise InvalidInputError(f"expected a (k, 2) coordinate array, got shape {arr.shape}")
    if arr.shape[0] < 2:
        raise InvalidInputError("a configuration needs at least 2 landmarks")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("configuration contains non-finite coordinates")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LandmarkConfiguration:
    """One individual's ``k`` planar landmarks plus identity and metadata."""

    points: np.ndarray
    id: str = ""
    label: str | None = None
    covariates: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "points", _as_points(self.points))
        object.__setattr__(self, "id", str(self.id))
        object.__setattr__(self, "covariates", MappingProxyType(dict(self.covariates)))

    def __reduce__(self):
        # mappingproxy does not pickle; rebuild through the constructor
        return (type(self), (self.points, self.id, self.label, dict(self.covariates)))

    @property
    def k(self) -> int:
        return self.points.shape[0]

    def flatten(self) -> np.ndarray:
        """Return the ``2k`` vector ``(x1, y1, x2, y2, ...)``."""
        return self.points.reshape(-1).copy()

    @classmethod
    def from_flat(cls, vector, **kwargs) -> LandmarkConfiguration:
        v = np.asarray(vector, dtype=np.float64)
        if v.ndim != 1 or v.size % 2:
            raise InvalidInputError("flat vector must have even length 2k")
        return cls(v.reshape(-1, 2), **kwargs)

    def with_points(self, points) -> LandmarkConfiguration:
        return replace(self, points=points)

    def same_as(self, other: LandmarkConfiguration) -> bool:
        """Exact equality of coordinates and metadata."""
        return (
            self.id == other.id
            and self.label == other.label
            and dict(self.covariates) == dict(other.covariates)
            and self.points.shape == other.points.shape
            and bool(np.array_equal(self.points, other.points))
        )


def _points_of(config) -> np.ndarray:
    if isinstance(config, LandmarkConfiguration):
        return config.points
    return _as_points(config)


@dataclass(frozen=True, eq=False)
class ShapeSample:
    """An ordered collection of configurations sharing one landmark template."""

    configurations: tuple[LandmarkConfiguration, ...]
    alignment_state: AlignmentState = AlignmentState.RAW

    def __post_init__(self):
        configs = tuple(self.configurations)
        if configs:
            k = configs[0].k
            for c in configs:
                if c.k != k:
                    raise TemplateMismatchError(
                        f"configuration {c.id!r} has {c.k} landmarks, expected {k}"
                    )
        object.__setattr__(self, "configurations", configs)
        object.__setattr__(self, "alignment_state", AlignmentState(self.alignment_state))

    def __len__(self) -> int:
        return len(self.configurations)

    def __iter__(self):
        return iter(self.configurations)

    def __getitem__(self, i):
        return self.configurations[i]

    @property
    def template_size(self) -> int:
        if not self.configurations:
            raise InsufficientSampleError("empty sample has no template")
        return self.configurations[0].k

    @cached_property
    def array(self) -> np.ndarray:
        """Stacked coordinates, shape ``(n, k, 2)`` (read-only)."""
        if not self.configurations:
            raise InsufficientSampleError("empty sample")
        arr = np.stack([c.points for c in self.configurations])
        arr.setflags(write=False)
        return arr

    @property
    def ids(self) -> list[str]:
        return [c.id for c in self.configurations]

    @property
    def labels(self) -> list[str | None]:
        return [c.label for c in self.configurations]

    def flat(self) -> np.ndarray:
        """Design matrix of flattened configurations, shape ``(n, 2k)``."""
        return self.array.reshape(len(self), -1).copy()

    def subset(self, indices: Sequence[int]) -> ShapeSample:
        return ShapeSample(tuple(self.configurations[i] for i in indices), self.alignment_state)

    def with_array(self, array, state: AlignmentState | str | None = None) -> ShapeSample:
        """Same members (ids, labels, covariates) with new coordinates."""
        arr = np.asarray(array, dtype=np.float64)
        if arr.shape[0] != len(self):
            raise InvalidInputError("coordinate array does not match sample size")
        configs = tuple(c.with_points(a) for c, a in zip(self.configurations, arr))
        return ShapeSample(configs, self.alignment_state if state is None else state)

    @classmethod
    def from_array(
        cls,
        array,
        ids=None,
        labels=None,
        covariates=None,
        state: AlignmentState | str = AlignmentState.RAW,
    ) -> ShapeSample:
        arr = np.asarray(array, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[2] != 2:
            raise InvalidInputError(f"expected (n, k, 2) array, got {arr.shape}")
        n = arr.shape[0]
        ids = [str(i + 1) for i in range(n)] if ids is None else list(ids)
        labels = [None] * n if labels is None else list(labels)
        covariates = [{}] * n if covariates is None else list(covariates)
        if not (len(ids) == len(labels) == len(covariates) == n):
            raise InvalidInputError("ids/labels/covariates length does not match sample size")
        configs = tuple(
            LandmarkConfiguration(a, id=i, label=lab, covariates=cov)
            for a, i, lab, cov in zip(arr, ids, labels, covariates)
        )
        return cls(configs, state)

    def same_as(self, other: ShapeSample) -> bool:
        return (
            self.alignment_state == other.alignment_state
            and len(self) == len(other)
            and all(a.same_as(b) for a, b in zip(self, other))
        )


def centroid(config) -> np.ndarray:
    """Arithmetic mean of the landmarks."""
    return _points_of(config).mean(axis=0)


def centroid_size(config) -> float:
    """Square root of the summed squared distances of the landmarks to their centroid."""
    pts = _points_of(config)
    size = float(np.sqrt(np.sum((pts - pts.mean(axis=0)) ** 2)))
    if size < DEGENERACY_THRESHOLD:
        name = getattr(config, "id", "")
        raise DegenerateConfigurationError(
            f"configuration {name!r} has all points coincident" if name else
            "configuration has all points coincident"
        )
    return size


def center_and_scale(config) -> LandmarkConfiguration:
    """Translate to the origin and rescale to unit centroid size."""
    if not isinstance(config, LandmarkConfiguration):
        config = LandmarkConfiguration(config)
    size = centroid_size(config)
    pts = config.points
    return config.with_points((pts - pts.mean(axis=0)) / size)


def centroid_sizes(array: np.ndarray) -> np.ndarray:
    """Vectorised centroid sizes of an ``(n, k, 2)`` stack (no degeneracy check)."""
    centered = array - array.mean(axis=1, keepdims=True)
    return np.sqrt(np.sum(centered**2, axis=(1, 2)))


def drop_landmarks(sample: ShapeSample, removed: Sequence[int]) -> ShapeSample:
    """Remove 1-based landmark indices from every member."""
    if not removed:
        return sample
    k = sample.template_size
    keep = keep_indices(k, removed)
    return sample.with_array(sample.array[:, keep, :])


def keep_indices(k: int, removed: Sequence[int]) -> np.ndarray:
    bad = [r for r in removed if not 1 <= r <= k]
    if bad:
        raise TemplateMismatchError(f"landmark indices {bad} outside template 1..{k}")
    drop = {r - 1 for r in removed}
    keep = np.array([i for i in range(k) if i not in drop], dtype=int)
    if keep.size < 2:
        raise InvalidInputError("fewer than 2 landmarks would remain")
    return keep
