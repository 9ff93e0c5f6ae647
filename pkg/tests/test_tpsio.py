import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from morphoclass.errors import TpsParseError
from morphoclass.tpsio import (
    TpsRecord,
    atomic_write,
    parse_tps,
    read_tps,
    records_to_sample,
    sample_to_records,
    serialize_tps,
    write_tps,
)

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)
token = st.text(alphabet=st.characters(min_codepoint=33, max_codepoint=126), min_size=1, max_size=12)


@st.composite
def records(draw):
    k = draw(st.integers(0, 8))
    pts = tuple(draw(st.tuples(finite, finite)) for _ in range(k))
    return TpsRecord(pts, image=draw(st.none() | token), id=draw(st.none() | token))


def test_minimal_record():
    recs = parse_tps("LM=2\n0.0 0.0\n1.0 0.0\nID=a")
    assert len(recs) == 1
    assert recs[0].points == ((0.0, 0.0), (1.0, 0.0)) and recs[0].id == "a"


def test_scale_applied():
    (rec,) = parse_tps("LM=1\n2 4\nSCALE=0.5\n")
    assert rec.points == ((1.0, 2.0),) and rec.scale == 0.5


def test_multi_record_order_and_blank_lines():
    text = "\nLM=1\n1 1\nIMAGE=one.jpg\n\n\nlm=1\n  2e0   -3.5  \nid=b\n"
    recs = parse_tps(text)
    assert [r.image for r in recs] == ["one.jpg", None]
    assert recs[1].points == ((2.0, -3.5),) and recs[1].id == "b"


@pytest.mark.parametrize("text, line, msg", [
    ("1 2\n", 1, "LM"),
    ("LM=x\n", 1, "count"),
    ("LM=3\n0 0\n1 1\n", 3, "declared"),
    ("LM=3\n0 0\nID=a\n", 3, "declared"),
    ("LM=1\n0 zero\n", 2, "malformed"),
    ("LM=1\n0 0\n1 1\n", 3, "more coordinate"),
    ("LM=1\n0 0\nSCALE=abc\n", 3, "SCALE"),
    ("LM=1\nnan 0\n", 2, "malformed"),
])
def test_parse_errors_carry_line_numbers(text, line, msg):
    with pytest.raises(TpsParseError, match=msg) as info:
        parse_tps(text)
    assert info.value.line == line
    assert f"line {line}" in str(info.value)


def test_unknown_keys_and_curves_are_skipped_with_warning():
    text = "LM=1\n0 0\nCURVES=1\nPOINTS=2\n1 1\n2 2\nCOMMENT=x\nID=z\nLM=1\n5 5\n"
    with pytest.warns(UserWarning) as caught:
        recs = parse_tps(text)
    assert len(caught) == 2
    assert [r.id for r in recs] == ["z", None]


def test_empty_text():
    assert parse_tps("") == [] and serialize_tps([]) == ""


@settings(max_examples=1000)
@given(st.lists(records(), max_size=3))
def test_round_trip(recs):
    assert parse_tps(serialize_tps(recs)) == recs


def test_scale_is_one_way(tmp_path):
    (rec,) = parse_tps("LM=1\n3 5\nSCALE=2\nID=q\n")
    again = parse_tps(serialize_tps([rec]))
    assert again[0].points == ((6.0, 10.0),) and again[0].scale is None


def test_file_helpers(tmp_path, rng):
    path = tmp_path / "x.tps"
    recs = [TpsRecord(tuple(map(tuple, rng.normal(size=(3, 2)))), id=f"s{i}") for i in range(4)]
    write_tps(path, recs)
    assert read_tps(path) == recs
    assert [p.name for p in tmp_path.iterdir()] == ["x.tps"]
    sample = records_to_sample(recs, labels={"s1": "SAM"}, covariates={"s2": {"age": 3}})
    assert list(sample.ids) == ["s0", "s1", "s2", "s3"]
    assert sample[1].label == "SAM" and sample[2].covariates["age"] == 3
    assert sample_to_records(sample) == recs


def test_fallback_ids():
    sample = records_to_sample(parse_tps("LM=2\n0 0\n1 0\nIMAGE=a.jpg\nLM=2\n1 1\n0 1\n"))
    assert list(sample.ids) == ["a.jpg", "2"]


def test_atomic_write_leaves_old_file_on_failure(tmp_path):
    path = tmp_path / "out.txt"
    atomic_write(path, "old")

    with pytest.raises(TypeError):
        atomic_write(path, 12345)
    assert path.read_text() == "old"
    assert [p.name for p in tmp_path.iterdir()] == ["out.txt"]
    atomic_write(path, b"new")
    assert path.read_bytes() == b"new"
