"""Allometric regression of aligned coordinates on log centroid size."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    InsufficientSampleError,
    InvalidInputError,
    SingularRegressorError,
    TemplateMismatchError,
)
from .geometry import (
    AlignmentState,
    LandmarkConfiguration,
    ShapeSample,
    centroid_size,
)


@dataclass(frozen=True, eq=False)
class AllometricModel:
    """Per-coordinate OLS fits ``coord = intercept + slope * log(CS)``.

    Coefficient vectors follow the flattened ``(x1, y1, x2, y2, ...)`` order.
    """

    intercepts: np.ndarray
    slopes: np.ndarray
    trained_on_n: int
    slope_se: np.ndarray | None = None
    #: mean training log size; the pipeline standardises shapes to it
    mean_log_size: float | None = None

    def __post_init__(self):
        for name in ("intercepts", "slopes", "slope_se"):
            v = getattr(self, name)
            if v is None:
                continue
            arr = np.array(v, dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.intercepts.shape != self.slopes.shape:
            raise InvalidInputError("intercepts and slopes differ in length")

    @property
    def p(self) -> int:
        return self.intercepts.size

    def predict(self, log_sizes) -> np.ndarray:
        ls = np.asarray(log_sizes, dtype=np.float64)
        return self.intercepts + np.multiply.outer(ls, self.slopes)

    def adjust(self, flat, log_sizes) -> np.ndarray:
        """Shape predicted at the mean training size: ``residual + fit(mean size)``.

        Differs from the pure residual only by a constant vector, so it keeps
        the sample in the aligned coordinate frame.
        """
        if self.mean_log_size is None:
            raise InvalidInputError("model was fitted without a mean log size")
        ls = np.asarray(log_sizes, dtype=np.float64)
        return np.asarray(flat, dtype=np.float64) - np.multiply.outer(
            ls - self.mean_log_size, self.slopes
        )

    def same_as(self, other: AllometricModel) -> bool:
        return (
            self.trained_on_n == other.trained_on_n
            and self.mean_log_size == other.mean_log_size
            and np.array_equal(self.intercepts, other.intercepts)
            and np.array_equal(self.slopes, other.slopes)
        )


def fit_allometry_array(coords: np.ndarray, log_sizes: np.ndarray) -> AllometricModel:
    """OLS of each column of ``coords`` (``(n, p)``) on ``log_sizes``."""
    n = coords.shape[0]
    if n < 3:
        raise InsufficientSampleError("allometric regression needs at least 3 individuals")
    ls = np.asarray(log_sizes, dtype=np.float64)
    if ls.shape != (n,):
        raise InvalidInputError("one log size per individual is required")
    lc = ls - ls.mean()
    sxx = float(lc @ lc)
    if sxx <= 1e-24 * max(1.0, float(ls @ ls)):
        raise SingularRegressorError("log centroid sizes are constant; slope is not identifiable")
    means = coords.mean(axis=0)
    slopes = (lc @ (coords - means)) / sxx
    intercepts = means - slopes * ls.mean()
    resid = coords - intercepts - np.multiply.outer(ls, slopes)
    sigma2 = np.sum(resid**2, axis=0) / (n - 2) if n > 2 else np.full(slopes.shape, np.nan)
    se = np.sqrt(sigma2 / sxx)
    return AllometricModel(intercepts, slopes, n, se, float(ls.mean()))


def fit_allometry(aligned: ShapeSample, log_sizes) -> AllometricModel:
    if aligned.alignment_state is not AlignmentState.ALIGNED:
        raise InvalidInputError("allometric regression expects an aligned sample")
    return fit_allometry_array(aligned.flat(), np.asarray(log_sizes, dtype=np.float64))


def residualize(aligned: ShapeSample, log_sizes, model: AllometricModel) -> ShapeSample:
    """Replace every member by ``observed - (intercept + slope * log_size)``."""
    flat = aligned.flat()
    if flat.shape[1] != model.p:
        raise TemplateMismatchError(
            f"model has {model.p} coefficients, sample has {flat.shape[1]} coordinates"
        )
    resid = flat - model.predict(log_sizes)
    return aligned.with_array(resid.reshape(aligned.array.shape), AlignmentState.RESIDUAL)


def residualize_new(
    aligned_new: LandmarkConfiguration,
    raw_new: LandmarkConfiguration,
    model: AllometricModel,
) -> LandmarkConfiguration:
    """Size-correct a new individual with frozen training coefficients.

    The log centroid size comes from the raw (pre-alignment) configuration,
    since alignment rescales to the reference.
    """
    flat = aligned_new.flatten()
    if flat.size != model.p:
        raise TemplateMismatchError(
            f"model has {model.p} coefficients, configuration has {flat.size} coordinates"
        )
    ls = np.log(centroid_size(raw_new))
    return aligned_new.with_points((flat - model.predict(ls)).reshape(-1, 2))
