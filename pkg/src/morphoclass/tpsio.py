"""Reading and writing TPS landmark files.

Grammar handled: a record starts with ``LM=<count>`` and is followed by
``count`` lines of two numbers, then optional ``IMAGE=``, ``ID=`` and
``SCALE=`` lines. ``SCALE`` multiplies the coordinates on ingest, so written
files carry scaled coordinates and no ``SCALE`` line. ``CURVES=``/``POINTS=``
blocks and other keys are skipped with a warning. Keys are case-insensitive.
"""

from __future__ import annotations

import math
import os
import re
import tempfile
import warnings
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import TpsParseError
from .geometry import LandmarkConfiguration, ShapeSample

_NUMBER = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_COORD = re.compile(rf"^\s*({_NUMBER})\s+({_NUMBER})\s*$")
_KEY = re.compile(r"^\s*([A-Za-z]+)\s*=\s*(.*?)\s*$")


@dataclass(frozen=True)
class TpsRecord:
    points: tuple[tuple[float, float], ...]
    image: str | None = None
    id: str | None = None
    #: SCALE value read from the file (already applied to ``points``)
    scale: float | None = None

    @property
    def landmark_count(self) -> int:
        return len(self.points)

    def to_configuration(self, fallback_id: str = "", label=None, covariates=None) -> LandmarkConfiguration:
        ident = self.id if self.id is not None else (self.image or fallback_id)
        return LandmarkConfiguration(np.array(self.points), id=ident, label=label,
                                     covariates=covariates or {})


def _number(text: str, lineno: int) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise TpsParseError(f"non-finite number {text!r}", lineno)
    return value


def parse_tps(text: str) -> list[TpsRecord]:
    lines = text.splitlines()
    records: list[TpsRecord] = []
    i = 0
    n_lines = len(lines)

    def next_content(j):
        while j < n_lines and not lines[j].strip():
            j += 1
        return j

    i = next_content(i)
    while i < n_lines:
        lineno = i + 1
        m = _KEY.match(lines[i])
        if not m or m.group(1).upper() != "LM":
            raise TpsParseError("expected an LM=<count> header", lineno)
        try:
            count = int(m.group(2))
        except ValueError:
            raise TpsParseError(f"invalid landmark count {m.group(2)!r}", lineno) from None
        if count < 0:
            raise TpsParseError("negative landmark count", lineno)
        points = []
        i += 1
        while len(points) < count:
            i = next_content(i)
            if i >= n_lines:
                raise TpsParseError(
                    f"LM={count} declared but only {len(points)} coordinate lines found", n_lines
                )
            c = _COORD.match(lines[i])
            if c is None:
                if _KEY.match(lines[i]):
                    raise TpsParseError(
                        f"LM={count} declared but only {len(points)} coordinate lines found",
                        i + 1,
                    )
                raise TpsParseError(f"malformed coordinate line {lines[i].strip()!r}", i + 1)
            points.append((_number(c.group(1), i + 1), _number(c.group(2), i + 1)))
            i += 1
        image = ident = scale = None
        i = next_content(i)
        while i < n_lines:
            m = _KEY.match(lines[i])
            if m is None:
                if _COORD.match(lines[i]):
                    raise TpsParseError(f"more coordinate lines than LM={count}", i + 1)
                raise TpsParseError(f"unrecognised line {lines[i].strip()!r}", i + 1)
            key, value = m.group(1).upper(), m.group(2)
            if key == "LM":
                break
            if key == "IMAGE":
                image = value
            elif key == "ID":
                ident = value
            elif key == "SCALE":
                if not re.fullmatch(_NUMBER, value):
                    raise TpsParseError(f"malformed SCALE value {value!r}", i + 1)
                scale = _number(value, i + 1)
            elif key == "CURVES":
                i = _skip_curves(lines, i, value)
                i = next_content(i)
                continue
            else:
                warnings.warn(f"line {i + 1}: unsupported TPS key {key} skipped", stacklevel=2)
            i = next_content(i + 1)
        if scale is not None:
            points = [(x * scale, y * scale) for x, y in points]
        records.append(TpsRecord(tuple(points), image, ident, scale))
    return records


def _skip_curves(lines, i, value) -> int:
    """Skip a ``CURVES=c`` block (``c`` times ``POINTS=m`` plus ``m`` lines)."""
    warnings.warn(f"line {i + 1}: CURVES block skipped", stacklevel=3)
    try:
        curves = int(value)
    except ValueError:
        raise TpsParseError(f"invalid CURVES count {value!r}", i + 1) from None
    i += 1
    for _ in range(curves):
        while i < len(lines) and not lines[i].strip():
            i += 1
        m = _KEY.match(lines[i]) if i < len(lines) else None
        if m is None or m.group(1).upper() != "POINTS":
            raise TpsParseError("expected POINTS=<count> inside CURVES block", min(i + 1, len(lines)))
        try:
            npts = int(m.group(2))
        except ValueError:
            raise TpsParseError(f"invalid POINTS count {m.group(2)!r}", i + 1) from None
        i += 1 + npts
    return i


def serialize_tps(records: Iterable[TpsRecord]) -> str:
    out = []
    for rec in records:
        out.append(f"LM={len(rec.points)}")
        out.extend(f"{float(x)!r} {float(y)!r}" for x, y in rec.points)
        if rec.image is not None:
            out.append(f"IMAGE={rec.image}")
        if rec.id is not None:
            out.append(f"ID={rec.id}")
    return "\n".join(out) + ("\n" if out else "")


def read_tps(path) -> list[TpsRecord]:
    return parse_tps(Path(path).read_text(encoding="utf-8"))


def atomic_write(path, data: str | bytes):
    """Write to a temporary file in the target directory, then rename."""
    path = Path(path)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": ""})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_tps(path, records: Sequence[TpsRecord]):
    atomic_write(path, serialize_tps(records))


def records_to_sample(records: Sequence[TpsRecord], labels=None, covariates=None) -> ShapeSample:
    """Build a raw sample; ``labels``/``covariates`` map record ids to values."""
    labels = labels or {}
    covariates = covariates or {}
    configs = []
    for j, rec in enumerate(records):
        c = rec.to_configuration(fallback_id=str(j + 1))
        configs.append(LandmarkConfiguration(c.points, id=c.id, label=labels.get(c.id),
                                             covariates=covariates.get(c.id, {})))
    return ShapeSample(tuple(configs))


def sample_to_records(sample: ShapeSample) -> list[TpsRecord]:
    return [TpsRecord(tuple((float(x), float(y)) for x, y in c.points), id=c.id) for c in sample]
