"""Checksummed JSON container for a frozen reference.

The payload is the minimal set needed to classify new individuals: the
landmark template, RT, optional allometric coefficients and the classifier
parameters (for LDA: two class means, the inverse pooled covariance and the
priors). kNN has no compact summary, so its artifact embeds every training
vector and label; treat such files as containing study data.

Floats are written with ``repr`` precision, so loading reproduces every
parameter bit for bit and scores computed from a loaded reference are
identical to those of the original.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from . import __version__
from .allometry import AllometricModel
from .classifiers import KnnModel, LdaModel, LogisticModel
from .errors import ArtifactError, ArtifactIntegrityError, ArtifactVersionError
from .pipeline import FrozenReference, PipelineConfig
from .tpsio import atomic_write

FORMAT_NAME = "morphoclass-reference"
FORMAT_VERSION = 1

KNN_PRIVACY_WARNING = (
    "kNN artifact: contains the aligned coordinates and class labels of every "
    "training individual"
)


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def _digest(obj) -> str:
    return hashlib.sha256(_canonical(obj).encode("utf-8")).hexdigest()


def _lst(a) -> list:
    return np.asarray(a, dtype=np.float64).tolist()


def _classifier_payload(model) -> dict:
    base = {"labels": [model.negative_label, model.positive_label],
            "positive_label": model.positive_label}
    if isinstance(model, LdaModel):
        return {**base, "kind": "lda", "class_means": _lst(model.means),
                "covariance_inverse": _lst(model.precision), "priors": _lst(model.priors)}
    if isinstance(model, LogisticModel):
        return {**base, "kind": "lr", "coefficients": _lst(model.coefficients),
                "ridge": float(model.ridge), "separated": bool(model.separated)}
    if isinstance(model, KnnModel):
        return {**base, "kind": "knn", "k": int(model.k), "training": _lst(model.training),
                "training_is_positive": [bool(v) for v in model.is_positive],
                "privacy_warning": KNN_PRIVACY_WARNING}
    raise ArtifactError(f"cannot serialise classifier {type(model).__name__}")


def _classifier_from(payload: dict):
    neg, pos = payload["labels"]
    kind = payload["kind"]
    if kind == "lda":
        return LdaModel(neg, pos, means=np.array(payload["class_means"]),
                        precision=np.array(payload["covariance_inverse"]),
                        priors=np.array(payload["priors"]))
    if kind == "lr":
        return LogisticModel(neg, pos, coefficients=np.array(payload["coefficients"]),
                             ridge=payload["ridge"], separated=payload["separated"])
    if kind == "knn":
        train = np.array(payload["training"], dtype=np.float64)
        flags = np.array(payload["training_is_positive"], dtype=bool)
        train.setflags(write=False)
        flags.setflags(write=False)
        return KnnModel(neg, pos, training=train, is_positive=flags, k=payload["k"])
    raise ArtifactError(f"unknown classifier kind {kind!r}")


def to_payload(ref: FrozenReference) -> dict:
    config = ref.config.to_dict()
    allometry = None
    if ref.allometry is not None:
        a = ref.allometry
        allometry = {"intercepts": _lst(a.intercepts), "slopes": _lst(a.slopes),
                     "mean_log_size": float(a.mean_log_size), "trained_on_n": int(a.trained_on_n)}
    model = ref.classifier
    return {
        "template": {"k": int(ref.template_k), "removed": list(ref.config.removed_landmarks)},
        "reference_target": {"kind": ref.config.reference_target.value,
                             "coordinates": _lst(ref.target),
                             "training_index": ref.target_index},
        "allometry": allometry,
        "classifier": _classifier_payload(model),
        "metric_conventions": {
            "positive_label": model.positive_label,
            "accuracy": "(TP+TN)/(TP+FN+TN+FP)",
            "sensitivity": "TP/(TP+FN) for the positive label",
            "specificity": "TN/(TN+FP)",
        },
        "provenance": {"seed": int(ref.config.seed), "config": config,
                       "config_digest": _digest(config), "package_version": __version__},
    }


def from_payload(payload: dict) -> FrozenReference:
    try:
        config = PipelineConfig.from_dict(payload["provenance"]["config"])
        allometry = None
        if payload["allometry"] is not None:
            a = payload["allometry"]
            allometry = AllometricModel(np.array(a["intercepts"]), np.array(a["slopes"]),
                                        a["trained_on_n"], None, a["mean_log_size"])
        target = np.array(payload["reference_target"]["coordinates"], dtype=np.float64)
        target.setflags(write=False)
        return FrozenReference(
            config=config,
            template_k=int(payload["template"]["k"]),
            coordinates=None,
            ids=(),
            labels=(),
            target=target,
            target_index=payload["reference_target"]["training_index"],
            allometry=allometry,
            classifier=_classifier_from(payload["classifier"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ArtifactIntegrityError(f"artifact payload is incomplete: {exc}") from exc


def dumps(ref: FrozenReference) -> bytes:
    payload = to_payload(ref)
    doc = {"format": FORMAT_NAME, "version": FORMAT_VERSION, "checksum": _digest(payload),
           "payload": payload}
    return (_canonical(doc) + "\n").encode("utf-8")


def loads(data: bytes | str) -> FrozenReference:
    try:
        doc = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ArtifactIntegrityError(f"artifact is not valid JSON (truncated?): {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_NAME:
        raise ArtifactIntegrityError("not a morphoclass reference artifact")
    if doc.get("version") != FORMAT_VERSION:
        raise ArtifactVersionError(
            f"artifact format version {doc.get('version')!r} is not supported "
            f"(this build reads version {FORMAT_VERSION})"
        )
    payload = doc.get("payload")
    if not isinstance(payload, dict) or _digest(payload) != doc.get("checksum"):
        raise ArtifactIntegrityError("artifact checksum mismatch (corrupted payload)")
    return from_payload(payload)


def save_artifact(ref: FrozenReference, path) -> None:
    atomic_write(path, dumps(ref))


def load_artifact(path) -> FrozenReference:
    return loads(Path(path).read_bytes())
