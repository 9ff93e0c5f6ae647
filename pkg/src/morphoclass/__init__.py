"""Landmark-based shape classification with a frozen reference sample."""

from .alignment import SimilarityTransform, fgpa, fopa
from .allometry import AllometricModel, fit_allometry, residualize, residualize_new
from .central import functional_median, mean_shape, modified_band_depth, pointwise_median
from .classifiers import ClassificationMetrics, ClassifierKind, metrics, predict, select_k, train
from .geometry import (
    AlignmentState,
    LandmarkConfiguration,
    ShapeSample,
    center_and_scale,
    centroid,
    centroid_size,
)
from .pipeline import (
    FrozenReference,
    PipelineConfig,
    ReferenceTarget,
    build_reference,
    classify_new,
    loo_in_sample,
    loo_out_of_sample,
)

__version__ = "0.1.0"
