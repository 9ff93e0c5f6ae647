"""Frozen-reference classification of new individuals and its leave-one-out
evaluation.

``build_reference`` aligns a labelled training sample once (GPA, optional
allometric size correction), picks a reference target RT in that space and
trains a classifier there. ``classify_new`` fits a new raw configuration to
RT by full OPA and applies the frozen rule. ``loo_out_of_sample`` repeats
the whole build for every left-out individual, so the held-out one never
touches its own fold's reference.
"""

from __future__ import annotations

import enum
import math
import warnings
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any, NamedTuple

import numpy as np

from . import classifiers as clf
from .alignment import gpa_array, opa_array
from .allometry import fit_allometry_array
from .central import band_depth_configs
from .classifiers import ClassificationMetrics, ClassifierKind, ClassifierModel
from .errors import (
    DegenerateConfigurationError,
    DegenerateLabelsError,
    InsufficientSampleError,
    InvalidInputError,
    NumericalInstabilityWarning,
    TemplateMismatchError,
)
from .geometry import (
    DEGENERACY_THRESHOLD,
    AlignmentState,
    LandmarkConfiguration,
    ShapeSample,
    centroid_sizes,
    keep_indices,
)

#: aligned planar coordinates lose two translation and one rotation direction
STRUCTURAL_RANK_LOSS = 3

DEFAULT_K_CANDIDATES = (1, 3, 5, 7, 9, 11, 13, 15)


class ReferenceTarget(str, enum.Enum):
    MEAN = "mean"
    FUNCTIONAL_MEDIAN = "functional-median"

    @classmethod
    def _missing_(cls, value):
        if str(value).lower() in ("median", "fmedian", "functional_median"):
            return cls.FUNCTIONAL_MEDIAN
        return None


class AlignmentMethod(str, enum.Enum):
    GPA = "GPA"

    @classmethod
    def _missing_(cls, value):
        return cls.GPA if str(value).upper() == "GPA" else None


@dataclass(frozen=True)
class PipelineConfig:
    size_correction: bool = True
    reference_target: ReferenceTarget = ReferenceTarget.MEAN
    classifier: ClassifierKind = ClassifierKind.LDA
    #: fixed kNN k; when None, k is chosen from ``k_candidates`` by select_k
    k: int | None = None
    k_candidates: tuple[int, ...] = DEFAULT_K_CANDIDATES
    #: 1-based landmark indices dropped before anything else
    removed_landmarks: tuple[int, ...] = (2, 3)
    alignment_method: AlignmentMethod = AlignmentMethod.GPA
    positive_class: str | None = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "reference_target", ReferenceTarget(self.reference_target))
        object.__setattr__(self, "classifier", ClassifierKind(self.classifier))
        object.__setattr__(self, "alignment_method", AlignmentMethod(self.alignment_method))
        removed = tuple(sorted({int(i) for i in self.removed_landmarks}))
        object.__setattr__(self, "removed_landmarks", removed)
        object.__setattr__(self, "k_candidates", tuple(int(c) for c in self.k_candidates))
        if self.k is not None and int(self.k) < 1:
            raise InvalidInputError("k must be positive")

    def to_dict(self) -> dict:
        return {
            "size_correction": bool(self.size_correction),
            "reference_target": self.reference_target.value,
            "classifier": self.classifier.value,
            "k": self.k,
            "k_candidates": list(self.k_candidates),
            "removed_landmarks": list(self.removed_landmarks),
            "alignment_method": self.alignment_method.value,
            "positive_class": self.positive_class,
            "seed": int(self.seed),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> PipelineConfig:
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise InvalidInputError(f"unknown config keys: {sorted(unknown)}")
        kw = dict(data)
        for key in ("k_candidates", "removed_landmarks"):
            if key in kw:
                kw[key] = tuple(kw[key])
        return cls(**kw)


@dataclass(frozen=True, eq=False)
class FrozenReference:
    """Everything needed to classify a new individual, fixed at build time."""

    config: PipelineConfig
    #: landmark count of the full template the reference expects as input
    template_k: int
    #: classifier-input coordinates of the training sample, ``(n, k', 2)``;
    #: size-corrected shapes are standardised to the mean training size.
    #: Not kept by loaded artifacts.
    coordinates: np.ndarray | None
    ids: tuple[str, ...]
    labels: tuple[str, ...]
    target: np.ndarray
    target_index: int | None
    allometry: Any
    classifier: ClassifierModel

    @property
    def keep(self) -> np.ndarray:
        return keep_indices(self.template_k, self.config.removed_landmarks)

    @property
    def p(self) -> int:
        return self.target.shape[0] * 2

    @property
    def state(self) -> AlignmentState:
        return AlignmentState.RESIDUAL if self.allometry is not None else AlignmentState.ALIGNED

    @property
    def aligned(self) -> ShapeSample:
        if self.coordinates is None:
            raise InvalidInputError("this reference does not carry its training coordinates")
        return ShapeSample.from_array(self.coordinates, self.ids, self.labels, state=self.state)

    @property
    def reference_configuration(self) -> LandmarkConfiguration:
        return LandmarkConfiguration(self.target, id="RT")


class Classification(NamedTuple):
    label: str
    score: float
    diagnostics: dict


def _labels_of(sample: ShapeSample) -> list[str]:
    labels = sample.labels
    if any(lab is None for lab in labels):
        raise InvalidInputError("every training configuration needs a label")
    return [str(lab) for lab in labels]


def _check_nondegenerate(raw: np.ndarray, ids):
    sizes = centroid_sizes(raw)
    bad = np.flatnonzero(sizes < DEGENERACY_THRESHOLD)
    if bad.size:
        raise DegenerateConfigurationError(
            f"configuration {ids[int(bad[0])]!r} is degenerate after landmark removal"
        )
    return sizes


@dataclass(frozen=True, eq=False)
class _ShapeSpace:
    """Training sample aligned (and optionally size-corrected) once; shared by
    every config with the same landmarks and size-correction setting."""

    coords: np.ndarray
    allometry: Any


def _fit_space(raw_reduced: np.ndarray, ids, size_correction: bool, method) -> _ShapeSpace:
    sizes = _check_nondegenerate(raw_reduced, ids)
    if AlignmentMethod(method) is not AlignmentMethod.GPA:
        raise InvalidInputError(f"alignment method {method!r} is not implemented")
    fits = gpa_array(raw_reduced)[0]
    if not size_correction:
        return _ShapeSpace(fits, None)
    n, k, _ = fits.shape
    model = fit_allometry_array(fits.reshape(n, -1), np.log(sizes))
    adjusted = model.adjust(fits.reshape(n, -1), np.log(sizes)).reshape(n, k, 2)
    return _ShapeSpace(adjusted, model)


def _choose_target(coords: np.ndarray, target: ReferenceTarget):
    if target is ReferenceTarget.MEAN:
        return coords.mean(axis=0), None
    idx = int(np.argmax(band_depth_configs(coords)))
    return coords[idx].copy(), idx


def _expected_rank(n: int, p: int) -> int:
    return max(0, min(p - STRUCTURAL_RANK_LOSS, n - 2))


def _freeze(space: _ShapeSpace, config: PipelineConfig, template_k: int, ids, labels,
            positive) -> FrozenReference:
    coords = space.coords
    n = coords.shape[0]
    X = coords.reshape(n, -1)
    p = X.shape[1]
    expected = _expected_rank(n, p)
    target, target_index = _choose_target(coords, config.reference_target)
    k = config.k
    if config.classifier is ClassifierKind.KNN and k is None:
        cands = [c for c in config.k_candidates if c <= n]
        k = clf.select_k(X, labels, cands, positive_label=positive)
    model = clf.train(config.classifier, X, labels, positive_label=positive, k=k,
                      expected_rank=expected)
    if config.reference_target is ReferenceTarget.FUNCTIONAL_MEDIAN:
        rank = model.rank if isinstance(model, clf.LdaModel) else clf.covariance_rank(X, labels)
        if rank < expected:
            warnings.warn(
                f"functional-median target with rank-deficient variables (rank {rank} < "
                f"{expected}); remove dependent landmarks for stable results",
                NumericalInstabilityWarning,
                stacklevel=3,
            )
    coords = np.array(coords)
    coords.setflags(write=False)
    target.setflags(write=False)
    return FrozenReference(
        config=config,
        template_k=template_k,
        coordinates=coords,
        ids=tuple(ids),
        labels=tuple(labels),
        target=target,
        target_index=target_index,
        allometry=space.allometry,
        classifier=model,
    )


def build_reference(training: ShapeSample, config: PipelineConfig | None = None) -> FrozenReference:
    config = config or PipelineConfig()
    if len(training) < 3:
        raise InsufficientSampleError("a reference needs at least 3 individuals")
    labels = _labels_of(training)
    _, positive = clf.resolve_labels(labels, config.positive_class)
    k = training.template_size
    keep = keep_indices(k, config.removed_landmarks)
    raw = training.array[:, keep, :]
    space = _fit_space(raw, training.ids, config.size_correction, config.alignment_method)
    return _freeze(space, config, k, training.ids, labels, positive)


def project(ref: FrozenReference, raw_new) -> tuple[np.ndarray, dict]:
    """Classifier-input vector of a new raw configuration plus fit diagnostics."""
    pts = raw_new.points if isinstance(raw_new, LandmarkConfiguration) else np.asarray(raw_new, float)
    if pts.ndim != 2 or pts.shape[0] != ref.template_k:
        raise TemplateMismatchError(
            f"reference expects {ref.template_k} landmarks, got {pts.shape[0]}"
        )
    reduced = pts[ref.keep]
    size = float(centroid_sizes(reduced[None])[0])
    if size < DEGENERACY_THRESHOLD:
        raise DegenerateConfigurationError("new configuration is degenerate")
    aligned, scale, rot, _ = opa_array(reduced, ref.target)
    residual_ss = float(np.sum((aligned - ref.target) ** 2))
    v = aligned.reshape(-1)
    if ref.allometry is not None:
        v = ref.allometry.adjust(v, math.log(size))
    diagnostics = {
        "residual_ss": residual_ss,
        "centroid_size": size,
        "scale": float(scale),
        "rotation_angle": float(math.atan2(rot[0, 1], rot[0, 0])),
    }
    return v, diagnostics


def classify_new(ref: FrozenReference, raw_new) -> Classification:
    v, diagnostics = project(ref, raw_new)
    label, score = clf.predict(ref.classifier, v)
    return Classification(label, score, diagnostics)


@dataclass(frozen=True)
class FoldRecord:
    index: int
    id: str
    truth: str
    predicted: str
    score: float
    residual_ss: float | None = None


@dataclass(frozen=True, eq=False)
class LooResult:
    metrics: ClassificationMetrics
    records: tuple[FoldRecord, ...]
    config: PipelineConfig | None = None
    references: tuple[FrozenReference, ...] | None = field(default=None, repr=False)


def _metrics_of(records, positive) -> ClassificationMetrics:
    return clf.metrics([r.predicted for r in records], [r.truth for r in records], positive)


def _space_key(config: PipelineConfig):
    return (config.removed_landmarks, bool(config.size_correction), config.alignment_method)


def _loo_many(sample: ShapeSample, configs: Sequence[PipelineConfig],
              keep_references: bool = False) -> list[LooResult]:
    """Algorithm-2 LOO for several configs at once. Each fold's alignment and
    allometry are computed once per distinct (landmarks, size correction)
    pair and reused by every config sharing them."""
    n = len(sample)
    if n < 4:
        raise InsufficientSampleError("leave-one-out needs at least 4 individuals")
    labels = _labels_of(sample)
    k = sample.template_size
    raw = sample.array
    ids = sample.ids
    positives = [clf.resolve_labels(labels, c.positive_class)[1] for c in configs]
    keeps = {_space_key(c): keep_indices(k, c.removed_landmarks) for c in configs}
    records = [[] for _ in configs]
    refs = [[] for _ in configs]
    for i in range(n):
        train = np.array([j for j in range(n) if j != i])
        tr_ids = [ids[j] for j in train]
        tr_labels = [labels[j] for j in train]
        if len(set(tr_labels)) < 2:
            raise DegenerateLabelsError(
                f"fold {i} (held-out {ids[i]!r}) has a single training class"
            )
        spaces = {}
        for key, keep in keeps.items():
            spaces[key] = _fit_space(raw[train][:, keep, :], tr_ids, key[1], key[2])
        for c_idx, config in enumerate(configs):
            ref = _freeze(spaces[_space_key(config)], config, k, tr_ids, tr_labels,
                          positives[c_idx])
            out = classify_new(ref, sample[i])
            records[c_idx].append(
                FoldRecord(i, ids[i], labels[i], out.label, out.score,
                           out.diagnostics["residual_ss"])
            )
            if keep_references:
                refs[c_idx].append(ref)
    return [
        LooResult(_metrics_of(recs, pos), tuple(recs), config,
                  tuple(r) if keep_references else None)
        for recs, r, config, pos in zip(records, refs, configs, positives)
    ]


def loo_out_of_sample(sample: ShapeSample, config: PipelineConfig | None = None,
                      keep_references: bool = False) -> LooResult:
    return _loo_many(sample, [config or PipelineConfig()], keep_references)[0]


def fold_reference(sample: ShapeSample, config: PipelineConfig, i: int) -> FrozenReference:
    """The reference fold ``i`` of ``loo_out_of_sample`` classifies against."""
    return build_reference(sample.subset([j for j in range(len(sample)) if j != i]), config)


def loo_in_sample(sample: ShapeSample, config: PipelineConfig | None = None) -> LooResult:
    """One global alignment (and size correction) of all n individuals, then
    leave-one-out over classifier training only."""
    config = config or PipelineConfig()
    n = len(sample)
    if n < 4:
        raise InsufficientSampleError("leave-one-out needs at least 4 individuals")
    labels = _labels_of(sample)
    _, positive = clf.resolve_labels(labels, config.positive_class)
    keep = keep_indices(sample.template_size, config.removed_landmarks)
    space = _fit_space(sample.array[:, keep, :], sample.ids, config.size_correction,
                       config.alignment_method)
    X = space.coords.reshape(n, -1)
    return loo_features(X, labels, config, ids=sample.ids, positive_label=positive)


def loo_features(X, labels, config: PipelineConfig | None = None, ids=None,
                 positive_label=None) -> LooResult:
    """Leave-one-out over classifier training on fixed feature vectors (ratio
    variables, MDS coordinates, or globally aligned shapes)."""
    config = config or PipelineConfig()
    X = np.asarray(X, dtype=np.float64)
    labels = [str(lab) for lab in labels]
    n = X.shape[0]
    ids = [str(j + 1) for j in range(n)] if ids is None else list(ids)
    positive = clf.resolve_labels(labels, positive_label or config.positive_class)[1]
    records = []
    for i in range(n):
        train = [j for j in range(n) if j != i]
        tr_labels = [labels[j] for j in train]
        if len(set(tr_labels)) < 2:
            raise DegenerateLabelsError(f"fold {i} (held-out {ids[i]!r}) has a single class")
        k = config.k
        if config.classifier is ClassifierKind.KNN and k is None:
            k = clf.select_k(X[train], tr_labels, [c for c in config.k_candidates if c < n],
                             positive_label=positive)
        model = clf.train(config.classifier, X[train], tr_labels, positive_label=positive, k=k,
                          expected_rank=_expected_rank(n - 1, X.shape[1]))
        label, score = clf.predict(model, X[i])
        records.append(FoldRecord(i, ids[i], labels[i], label, score))
    return LooResult(_metrics_of(records, positive), tuple(records), config)


def _stratum_of(config: LandmarkConfiguration, strata) -> Any:
    if callable(strata):
        return strata(config)
    keys = (strata,) if isinstance(strata, str) else tuple(strata)
    missing = [key for key in keys if key not in config.covariates]
    if missing:
        raise InvalidInputError(f"configuration {config.id!r} lacks covariates {missing}")
    values = tuple(config.covariates[key] for key in keys)
    return values[0] if len(values) == 1 else values


def stratified_evaluation(
    sample: ShapeSample,
    config: PipelineConfig | None = None,
    strata: str | Sequence[str] | Callable[[LandmarkConfiguration], Any] = "sex",
) -> dict[Any, LooResult]:
    """Independent out-of-sample LOO inside each stratum, keyed by stratum
    value in sorted order."""
    config = config or PipelineConfig()
    groups: dict[Any, list[int]] = {}
    for i, c in enumerate(sample):
        groups.setdefault(_stratum_of(c, strata), []).append(i)
    out = {}
    for key in sorted(groups, key=str):
        sub = sample.subset(groups[key])
        if len(set(_labels_of(sub))) < 2:
            raise DegenerateLabelsError(f"stratum {key!r} contains a single class")
        out[key] = loo_out_of_sample(sub, config)
    return out


@dataclass(frozen=True, eq=False)
class PcaResult:
    scores: np.ndarray
    #: one column per component, in flattened ``(x1, y1, ...)`` order
    loadings: np.ndarray
    variance_fractions: np.ndarray
    eigenvalues: np.ndarray


def pca_shape(aligned: ShapeSample, components: int = 2) -> PcaResult:
    if aligned.alignment_state is AlignmentState.RAW:
        raise InvalidInputError("PCA of shape variables needs an aligned sample")
    X = aligned.flat()
    n, p = X.shape
    if not 1 <= components <= min(n - 1, p):
        raise InvalidInputError(f"components must lie in 1..{min(n - 1, p)}")
    Xc = X - X.mean(axis=0)
    cov = Xc.T @ Xc / (n - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order][:, :components]
    idx = np.argmax(np.abs(evecs), axis=0)
    signs = np.sign(evecs[idx, np.arange(components)])
    signs[signs == 0] = 1.0
    evecs = evecs * signs
    total = float(evals.sum())
    fractions = evals[:components] / total if total > 0 else np.zeros(components)
    return PcaResult(Xc @ evecs, evecs, fractions, evals[:components])


def _rule_weights(rule, k) -> dict[int, complex]:
    weights = {int(i): complex(w) for i, w in dict(rule).items()}
    bad = [i for i in weights if not 1 <= i <= k]
    if bad:
        raise TemplateMismatchError(f"rule references missing landmarks {bad}")
    if abs(sum(weights.values()) - 1) > 1e-12:
        raise InvalidInputError("rule weights must sum to 1 (translation equivariance)")
    return weights


def duplicate_rule(i: int) -> dict[int, float]:
    return {i: 1.0}


def midpoint_rule(i: int, j: int) -> dict[int, float]:
    return {i: 0.5, j: 0.5}


def collinear_augment(sample: ShapeSample, rules: Sequence[Mapping[int, complex]] = ()) -> ShapeSample:
    """Append landmarks that are exact combinations of existing ones.

    Each rule maps 1-based source indices to weights summing to 1; a complex
    weight acts on the point as a complex number (rotation-scaling), so a
    derived point follows every similarity transform of its sources. Rules
    may reference landmarks appended by earlier rules.
    """
    if not rules:
        return sample
    arr = sample.array
    z = arr[..., 0] + 1j * arr[..., 1]
    for rule in rules:
        weights = _rule_weights(rule, z.shape[1])
        new = sum(w * z[:, i - 1] for i, w in weights.items())
        z = np.concatenate([z, new[:, None]], axis=1)
    out = np.stack([z.real, z.imag], axis=-1)
    return sample.with_array(out)
