"""File formats: histogram CSV, grouped CSV, and the JSON reports.

Histogram CSV: header ``value,count``, one row per support value in
ascending contiguous order, zero counts explicit (interior zeros carry
information the estimators must see).

Grouped CSV: header ``range_start,range_end,count`` where ``range_end`` is
an integer or the literal ``open`` for the unbounded top class.

JSON reports carry a ``schema`` tag, are written with sorted keys, and use
Python's shortest round-trip float representation, so identical inputs
produce byte-identical files.  Non-finite floats are serialized as null.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

from .core import Histogram, NoiseSpec, Pmf
from .errors import ValidationError
from .obfuscate import PublishedDataset
from .preprocess import GroupedClass

PathLike = Union[str, Path]

SCHEMA_METADATA = "demask.metadata/1"
SCHEMA_ESTIMATE = "demask.estimate/1"
SCHEMA_QUANTILES = "demask.quantiles/1"
SCHEMA_MAX = "demask.max/1"
SCHEMA_LLN = "demask.lln-max/1"
SCHEMA_AUDIT = "demask.audit/1"
SCHEMA_BOOTSTRAP = "demask.bootstrap/1"


def _clean(value):
    """Recursively make a JSON-safe copy (numpy scalars, non-finite floats)."""
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_clean(v) for v in value.tolist()]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        f = float(value)
        return f if math.isfinite(f) else None
    return value


def dump_json(obj: dict, path: PathLike) -> None:
    text = json.dumps(_clean(obj), sort_keys=True, indent=2)
    Path(path).write_text(text + "\n")


def load_json(path: PathLike) -> dict:
    return json.loads(Path(path).read_text())


def write_histogram_csv(h: Histogram, path: PathLike) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["value", "count"])
        for v, c in zip(h.support.tolist(), h.counts.tolist()):
            writer.writerow([v, c])


def read_histogram_csv(path: PathLike) -> Histogram:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header[:2]] != ["value", "count"]:
            raise ValidationError(f"{path}: expected header 'value,count'")
        values: List[int] = []
        counts: List[int] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                values.append(int(row[0]))
                counts.append(int(row[1]))
            except (ValueError, IndexError) as exc:
                raise ValidationError(f"{path}:{lineno}: bad row {row!r}") from exc
    if not values:
        raise ValidationError(f"{path}: no data rows")
    for a, b in zip(values, values[1:]):
        if b != a + 1:
            raise ValidationError(
                f"{path}: support must be contiguous ascending; "
                f"{b} follows {a}"
            )
    return Histogram(values[0], np.asarray(counts))


def read_grouped_csv(path: PathLike) -> List[GroupedClass]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        expected = ["range_start", "range_end", "count"]
        if header is None or [c.strip() for c in header[:3]] != expected:
            raise ValidationError(
                f"{path}: expected header 'range_start,range_end,count'"
            )
        groups: List[GroupedClass] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                start = int(row[0])
                end = None if row[1].strip().lower() == "open" else int(row[1])
                count = int(row[2])
            except (ValueError, IndexError) as exc:
                raise ValidationError(f"{path}:{lineno}: bad row {row!r}") from exc
            groups.append(GroupedClass(start, end, count))
    if not groups:
        raise ValidationError(f"{path}: no data rows")
    return groups


def metadata_dict(pub: PublishedDataset) -> dict:
    return {
        "schema": SCHEMA_METADATA,
        "noise": {
            "support_min": pub.noise.support_min,
            "probs": pub.noise.pmf.probs,
        },
        "truncation_at": pub.truncation_at,
        "declared_support": list(pub.declared_support),
    }


def write_published(pub: PublishedDataset, csv_path: PathLike, meta_path: PathLike) -> None:
    write_histogram_csv(pub.histogram, csv_path)
    dump_json(metadata_dict(pub), meta_path)


def read_published(csv_path: PathLike, meta_path: PathLike) -> PublishedDataset:
    meta = load_json(meta_path)
    if meta.get("schema") != SCHEMA_METADATA:
        raise ValidationError(f"{meta_path}: not a {SCHEMA_METADATA} file")
    noise = NoiseSpec(
        Pmf(int(meta["noise"]["support_min"]), np.asarray(meta["noise"]["probs"]))
    )
    declared = tuple(int(v) for v in meta["declared_support"])
    trunc = meta.get("truncation_at")
    hist = read_histogram_csv(csv_path)
    return PublishedDataset(
        histogram=hist,
        noise=noise,
        declared_support=declared,  # type: ignore[arg-type]
        truncation_at=None if trunc is None else int(trunc),
    )
