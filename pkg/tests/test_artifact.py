import json

import numpy as np
import pytest

from morphoclass.artifact import (
    FORMAT_VERSION,
    KNN_PRIVACY_WARNING,
    dumps,
    load_artifact,
    loads,
    save_artifact,
    to_payload,
)
from morphoclass.errors import ArtifactIntegrityError, ArtifactVersionError, InvalidInputError
from morphoclass.pipeline import PipelineConfig, build_reference, classify_new
from samples import two_class_arms


@pytest.fixture(scope="module")
def sample():
    return two_class_arms(np.random.default_rng(21), n_per=25, shift=0.3, sd=0.06)


@pytest.fixture(scope="module")
def probes():
    return two_class_arms(np.random.default_rng(22), n_per=10, shift=0.3, sd=0.06)


@pytest.mark.parametrize("cfg", [
    PipelineConfig(),
    PipelineConfig(size_correction=False, reference_target="functional-median"),
    PipelineConfig(classifier="lr"),
    PipelineConfig(classifier="knn", k=5),
    PipelineConfig(classifier="knn"),
])
def test_round_trip_is_bitwise(tmp_path, sample, probes, cfg):
    ref = build_reference(sample, cfg)
    path = tmp_path / "ref.json"
    save_artifact(ref, path)
    first = path.read_bytes()
    loaded = load_artifact(path)
    save_artifact(loaded, path)
    assert path.read_bytes() == first
    for c in probes:
        a, b = classify_new(ref, c), classify_new(loaded, c)
        assert a.label == b.label
        assert a.score == b.score
        assert a.diagnostics == b.diagnostics


def test_lda_field_inventory(sample):
    ref = build_reference(sample)
    payload = to_payload(ref)
    lda = payload["classifier"]
    assert set(lda) - {"kind", "labels", "positive_label"} == {
        "class_means", "covariance_inverse", "priors"}
    assert np.array(lda["class_means"]).shape == (2, 36)
    assert np.array(lda["covariance_inverse"]).shape == (36, 36)
    assert sum(lda["priors"]) == pytest.approx(1.0)
    assert np.array(payload["reference_target"]["coordinates"]).shape == (18, 2)
    assert set(payload["allometry"]) >= {"intercepts", "slopes"}
    assert payload["template"] == {"k": 20, "removed": [2, 3]}
    assert payload["provenance"]["seed"] == 0
    assert len(payload["provenance"]["config_digest"]) == 64
    # no training data in an LDA artifact
    assert not any(key.startswith("training") for key in lda)


def test_knn_artifact_embeds_training_data(sample):
    ref = build_reference(sample, PipelineConfig(classifier="knn", k=3))
    knn = to_payload(ref)["classifier"]
    assert knn["privacy_warning"] == KNN_PRIVACY_WARNING
    assert np.array(knn["training"]).shape == (50, 36)
    assert sum(knn["training_is_positive"]) == 25


def test_truncated_and_corrupted(tmp_path, sample):
    data = dumps(build_reference(sample))
    with pytest.raises(ArtifactIntegrityError):
        loads(data[: len(data) // 2])
    doc = json.loads(data)
    doc["payload"]["classifier"]["priors"][0] = 0.25
    with pytest.raises(ArtifactIntegrityError, match="checksum"):
        loads(json.dumps(doc))
    with pytest.raises(ArtifactIntegrityError):
        loads(b'{"hello": 1}')


def test_version_mismatch(sample):
    doc = json.loads(dumps(build_reference(sample)))
    doc["version"] = FORMAT_VERSION + 1
    with pytest.raises(ArtifactVersionError, match="version"):
        loads(json.dumps(doc))


def test_loaded_reference_has_no_training_coordinates(sample):
    loaded = loads(dumps(build_reference(sample)))
    assert loaded.coordinates is None
    with pytest.raises(InvalidInputError):
        loaded.aligned
    assert loaded.p == 36
