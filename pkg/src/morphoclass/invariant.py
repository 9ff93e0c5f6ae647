"""Alignment-free shape analysis: arm ratio variables and EDMA (form
matrices, form difference matrices, the T statistic, bootstrap tests,
log-T distances and classical MDS)."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateConfigurationError,
    InsufficientSampleError,
    InvalidInputError,
    SmallSampleWarning,
    TemplateMismatchError,
)
from .geometry import DEGENERACY_THRESHOLD, LandmarkConfiguration, ShapeSample

RATIO_TEMPLATE_K = 20

# 1-based landmark pairs averaged into each arm measurement
UPPER_ARM_LENGTH = ((1, 17), (4, 18))
FOREARM_LENGTH = ((17, 19), (18, 20))
UPPER_ARM_WIDTH = ((1, 4), (11, 12), (13, 14), (15, 16))
FOREARM_WIDTH = ((5, 6), (7, 8), (9, 10), (19, 20))

DEFAULT_BOOTSTRAP = 1000
DEFAULT_CONFIDENCE = 0.95
DEFAULT_MDS_DIMS = 40


@dataclass(frozen=True)
class RatioVector:
    r1: float
    r2: float
    r3: float
    r4: float

    def as_array(self) -> np.ndarray:
        return np.array([self.r1, self.r2, self.r3, self.r4])


def _points(config) -> np.ndarray:
    if isinstance(config, LandmarkConfiguration):
        return config.points
    return LandmarkConfiguration(config).points


def _mean_length(pts, pairs, name):
    d = [float(np.hypot(*(pts[a - 1] - pts[b - 1]))) for a, b in pairs]
    value = sum(d) / len(d)
    if value < DEGENERACY_THRESHOLD:
        raise DegenerateConfigurationError(f"{name} is zero (coincident landmarks)")
    return value


def ratios(config) -> RatioVector:
    pts = _points(config)
    if pts.shape[0] != RATIO_TEMPLATE_K:
        raise TemplateMismatchError(
            f"ratio variables need the {RATIO_TEMPLATE_K}-landmark template, got {pts.shape[0]}"
        )
    ual = _mean_length(pts, UPPER_ARM_LENGTH, "upper arm length")
    fl = _mean_length(pts, FOREARM_LENGTH, "forearm length")
    uaw = _mean_length(pts, UPPER_ARM_WIDTH, "upper arm width")
    fw = _mean_length(pts, FOREARM_WIDTH, "forearm width")
    return RatioVector(ual / fl, uaw / fw, uaw / ual, fw / fl)


def form_matrix(config) -> np.ndarray:
    """``k x k`` table of inter-landmark Euclidean distances."""
    pts = _points(config)
    diff = pts[:, None, :] - pts[None, :, :]
    return np.sqrt(np.sum(diff**2, axis=-1))


def form_matrices(array: np.ndarray) -> np.ndarray:
    diff = array[:, :, None, :] - array[:, None, :, :]
    return np.sqrt(np.sum(diff**2, axis=-1))


@dataclass(frozen=True, eq=False)
class FormDifferenceMatrix:
    #: elementwise numerator/denominator ratios; the diagonal is NaN
    ratios: np.ndarray
    T: float

    @property
    def log_T(self) -> float:
        return math.log(self.T)


def _offdiag(k):
    return np.triu_indices(k, 1)


def fdm(numerator, denominator) -> FormDifferenceMatrix:
    num = np.asarray(numerator, dtype=np.float64)
    den = np.asarray(denominator, dtype=np.float64)
    if num.shape != den.shape or num.ndim != 2 or num.shape[0] != num.shape[1]:
        raise TemplateMismatchError(f"form matrices differ in shape: {num.shape} vs {den.shape}")
    iu = _offdiag(num.shape[0])
    if np.any(den[iu] <= DEGENERACY_THRESHOLD) or np.any(num[iu] <= DEGENERACY_THRESHOLD):
        raise DegenerateConfigurationError("form matrix has a zero inter-landmark distance")
    with np.errstate(invalid="ignore", divide="ignore"):
        r = num / den
    np.fill_diagonal(r, np.nan)
    vals = r[iu]
    r.setflags(write=False)
    return FormDifferenceMatrix(r, float(vals.max() / vals.min()))


def _log_T(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """log T between rows of off-diagonal distance vectors (broadcasting)."""
    d = np.log(u) - np.log(v)
    return d.max(axis=-1) - d.min(axis=-1)


def _distance_vectors(sample_or_array) -> np.ndarray:
    arr = sample_or_array.array if isinstance(sample_or_array, ShapeSample) else sample_or_array
    fms = form_matrices(np.asarray(arr, dtype=np.float64))
    iu = _offdiag(fms.shape[1])
    vec = fms[:, iu[0], iu[1]]
    if np.any(vec <= DEGENERACY_THRESHOLD):
        bad = int(np.flatnonzero(np.any(vec <= DEGENERACY_THRESHOLD, axis=1))[0])
        raise DegenerateConfigurationError(f"member {bad} has coincident landmarks")
    return vec


def edma_distance_matrix(sample: ShapeSample) -> np.ndarray:
    """``n x n`` matrix of log T between every pair of individuals."""
    if len(sample) == 0:
        raise InsufficientSampleError("empty sample")
    logv = np.log(_distance_vectors(sample))
    n = logv.shape[0]
    out = np.zeros((n, n))
    for i in range(n):
        d = logv[i] - logv
        out[i] = d.max(axis=1) - d.min(axis=1)
    # exact symmetry (max/min of negated differences swap)
    out = np.maximum(out, out.T)
    np.fill_diagonal(out, 0.0)
    return out


def classical_mds(distances, dims: int = 2) -> np.ndarray:
    """Torgerson scaling: double-centre the squared distances and embed with
    the leading eigenvectors. Each axis is flipped so its largest-magnitude
    coordinate is positive."""
    D = np.asarray(distances, dtype=np.float64)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise InvalidInputError("distance matrix must be square")
    n = D.shape[0]
    if not 1 <= dims <= n:
        raise InvalidInputError(f"dims={dims} outside 1..{n}")
    if not np.allclose(D, D.T, rtol=0, atol=1e-12 * max(1.0, float(np.abs(D).max()))):
        raise InvalidInputError("distance matrix is not symmetric")
    J = np.eye(n) - 1.0 / n
    B = -0.5 * J @ (D**2) @ J
    B = 0.5 * (B + B.T)
    evals, evecs = np.linalg.eigh(B)
    order = np.argsort(evals)[::-1][:dims]
    lam, vec = evals[order], evecs[:, order]
    tol = 1e-10 * max(1.0, float(np.abs(evals).max()))
    if np.any(lam < -tol):
        warnings.warn(
            f"{int(np.sum(lam < -tol))} of the requested eigenvalues are negative "
            "(non-Euclidean distances); truncated to zero",
            RuntimeWarning,
            stacklevel=2,
        )
    coords = vec * np.sqrt(np.clip(lam, 0.0, None))
    return _fix_signs(coords)


def _fix_signs(coords: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(coords), axis=0)
    signs = np.sign(coords[idx, np.arange(coords.shape[1])])
    signs[signs == 0] = 1.0
    return coords * signs


def _check_groups(a: ShapeSample, b: ShapeSample, B: int):
    if len(a) == 0 or len(b) == 0:
        raise InsufficientSampleError("both groups must be non-empty")
    if a.template_size != b.template_size:
        raise TemplateMismatchError("groups use different landmark templates")
    if B < 100:
        warnings.warn(f"only {B} bootstrap replicates", SmallSampleWarning, stacklevel=3)


def _rng(seed, b):
    # one stream per replicate so results do not depend on evaluation order
    return np.random.default_rng([int(seed), int(b)])


@dataclass(frozen=True, eq=False)
class GlobalTestResult:
    T: float
    p_value: float
    null_T: np.ndarray
    bootstrap_B: int


def edma_global_test(group_a: ShapeSample, group_b: ShapeSample,
                     bootstrap_B: int = DEFAULT_BOOTSTRAP, seed: int = 0) -> GlobalTestResult:
    """Bootstrap test of equal shape from the T statistic of the mean form
    matrices. Null replicates resample the pooled sample into the original
    group sizes; ``p = (#{T* >= T} + 1) / (B + 1)``."""
    _check_groups(group_a, group_b, bootstrap_B)
    va, vb = _distance_vectors(group_a), _distance_vectors(group_b)
    t_obs = float(np.exp(_log_T(va.mean(axis=0), vb.mean(axis=0))))
    pooled = np.concatenate([va, vb])
    na, n = va.shape[0], pooled.shape[0]
    null = np.empty(bootstrap_B)
    for b in range(bootstrap_B):
        idx = _rng(seed, b).integers(0, n, size=n)
        null[b] = np.exp(_log_T(pooled[idx[:na]].mean(axis=0), pooled[idx[na:]].mean(axis=0)))
    # null T equal to observed up to rounding counts as "at least as large"
    hits = int(np.sum(null >= t_obs * (1 - 1e-12)))
    null.setflags(write=False)
    return GlobalTestResult(t_obs, (hits + 1) / (bootstrap_B + 1), null, bootstrap_B)


@dataclass(frozen=True, eq=False)
class LocalTestResult:
    #: 1-based landmark pairs (i < j), one row per FDM entry
    pairs: np.ndarray
    ratio: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    significant: np.ndarray
    confidence: float

    @property
    def fraction_significant(self) -> float:
        return float(self.significant.mean())

    def rows(self):
        for (i, j), r, lo, hi, s in zip(self.pairs, self.ratio, self.lower, self.upper,
                                         self.significant):
            yield int(i), int(j), float(r), float(lo), float(hi), bool(s)


def edma_local_test(group_a: ShapeSample, group_b: ShapeSample,
                    bootstrap_B: int = DEFAULT_BOOTSTRAP,
                    confidence: float = DEFAULT_CONFIDENCE, seed: int = 0) -> LocalTestResult:
    """Percentile bootstrap intervals for every FDM entry (group A over group
    B), resampling each group independently. Intervals excluding 1 are
    flagged."""
    _check_groups(group_a, group_b, bootstrap_B)
    if not 0 < confidence < 1:
        raise InvalidInputError("confidence must lie in (0, 1)")
    va, vb = _distance_vectors(group_a), _distance_vectors(group_b)
    na, nb = va.shape[0], vb.shape[0]
    observed = va.mean(axis=0) / vb.mean(axis=0)
    boot = np.empty((bootstrap_B, va.shape[1]))
    for b in range(bootstrap_B):
        rng = _rng(seed, b)
        ia = rng.integers(0, na, size=na)
        ib = rng.integers(0, nb, size=nb)
        boot[b] = va[ia].mean(axis=0) / vb[ib].mean(axis=0)
    alpha = 1.0 - confidence
    lower = np.quantile(boot, alpha / 2, axis=0)
    upper = np.quantile(boot, 1 - alpha / 2, axis=0)
    iu = _offdiag(group_a.template_size)
    pairs = np.column_stack([iu[0] + 1, iu[1] + 1])
    significant = (lower > 1.0) | (upper < 1.0)
    return LocalTestResult(pairs, observed, lower, upper, significant, confidence)
