"""Reading review datasets (CSV or JSONL) into validated ``ReviewRecord`` rows."""

from __future__ import annotations

import csv
import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

from .errors import ConfigError
from .sentiment import SentimentTriple, TripleError, validate_triple

log = logging.getLogger(__name__)

FORMATS = ("csv", "jsonl")


@dataclass(frozen=True)
class ReviewRecord:
    id: str
    text: str | None = None
    rating: int | None = None
    precomputed: SentimentTriple | None = None


@dataclass(frozen=True)
class DatasetSpec:
    path: Path
    format: str = "csv"
    text_column: str | None = None
    rating_column: str | None = None
    sentiment_columns: tuple[str, str, str] | None = None
    rating_scale: int = 5
    id_column: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "path", Path(self.path))
        if self.format not in FORMATS:
            raise ConfigError(f"unknown format {self.format!r}; expected one of {FORMATS}")
        if self.rating_scale < 2:
            raise ConfigError(f"rating_scale must be >= 2, got {self.rating_scale}")
        if self.text_column is None and self.sentiment_columns is None:
            raise ConfigError("declare a text column or sentiment columns")
        if self.sentiment_columns is not None and len(self.sentiment_columns) != 3:
            raise ConfigError("sentiment_columns must name exactly three columns (pos, neu, neg)")


@dataclass
class LoadSummary:
    rows_read: int = 0
    records: int = 0
    skipped: Counter = field(default_factory=Counter)
    problems: list[str] = field(default_factory=list)
    mode: str | None = None  # "text" or "precomputed"

    @property
    def n_skipped(self) -> int:
        return sum(self.skipped.values())

    def skip(self, row: int, reason: str, detail: str = ""):
        self.skipped[reason] += 1
        msg = f"row {row}: {reason}" + (f" ({detail})" if detail else "")
        self.problems.append(msg)
        log.debug("skipping %s", msg)

    def to_dict(self) -> dict:
        return {
            "rows_read": self.rows_read,
            "records": self.records,
            "skipped": self.n_skipped,
            "skipped_by_reason": dict(sorted(self.skipped.items())),
        }


class _RowError(Exception):
    def __init__(self, reason, detail=""):
        super().__init__(reason)
        self.reason = reason
        self.detail = detail


def _iter_rows(spec: DatasetSpec) -> tuple[list[str] | None, Iterator[tuple[int, dict | None]]]:
    """Return (header or None, iterator of (row_number, mapping or None if unparseable))."""
    fh = open(spec.path, encoding="utf-8-sig", errors="replace", newline="")
    if spec.format == "csv":
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            fh.close()
            return None, iter(())

        def rows():
            with fh:
                rowno = 1  # data rows are numbered from 2; the header is row 1
                while True:
                    try:
                        values = next(reader)
                    except StopIteration:
                        return
                    except csv.Error:
                        rowno += 1
                        yield rowno, None
                        continue
                    if not values:
                        continue
                    rowno += 1
                    if len(values) != len(header):
                        yield rowno, None
                        continue
                    yield rowno, dict(zip(header, values))
        return header, rows()

    def jrows():
        with fh:
            for rowno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError:
                    yield rowno, None
                    continue
                yield rowno, obj if isinstance(obj, dict) else None
    return None, jrows()


def _parse_rating(value, scale: int) -> int | None:
    if value is None:
        return None
    if isinstance(value, str):
        value = value.strip()
        if not value:
            return None
    try:
        f = float(value)
    except (TypeError, ValueError):
        raise _RowError("invalid_rating", repr(value)) from None
    if not math.isfinite(f) or f != int(f):
        raise _RowError("invalid_rating", repr(value))
    r = int(f)
    if not 1 <= r <= scale:
        raise _RowError("invalid_rating", f"{r} outside 1..{scale}")
    return r


def _resolve_mode(spec: DatasetSpec, columns) -> str:
    has_text = spec.text_column is not None and spec.text_column in columns
    has_sent = spec.sentiment_columns is not None and all(c in columns for c in spec.sentiment_columns)
    if has_text and has_sent:
        raise ConfigError("both the text column and the sentiment columns are present; declare only one")
    if has_sent:
        mode = "precomputed"
    elif has_text:
        mode = "text"
    else:
        wanted = [spec.text_column] if spec.text_column else list(spec.sentiment_columns)
        missing = [c for c in wanted if c not in columns]
        raise ConfigError(f"{spec.path}: missing declared column(s) {missing}; found {sorted(columns)}")
    if spec.rating_column is not None and spec.rating_column not in columns:
        raise ConfigError(f"{spec.path}: missing declared rating column {spec.rating_column!r}")
    if spec.id_column is not None and spec.id_column not in columns:
        raise ConfigError(f"{spec.path}: missing declared id column {spec.id_column!r}")
    return mode


def iter_dataset(spec: DatasetSpec, summary: LoadSummary) -> Iterator[ReviewRecord]:
    """Yield validated records in file order, filling ``summary`` as rows are consumed.

    Column checks happen on the first row (CSV: on the header), so a missing
    declared column raises ``ConfigError`` before any record is produced.
    """
    if not spec.path.is_file():
        raise ConfigError(f"input file not found: {spec.path}")
    header, rows = _iter_rows(spec)
    mode = None
    if header is not None:
        mode = _resolve_mode(spec, header)
        summary.mode = mode
    seen_ids: set[str] = set()
    for rowno, row in rows:
        summary.rows_read += 1
        if row is None:
            summary.skip(rowno, "malformed_row")
            continue
        if mode is None:  # JSONL: first object fixes the schema
            mode = _resolve_mode(spec, row.keys())
            summary.mode = mode
        try:
            # fallback id: 0-based position among data rows, skipped rows included
            rec = _make_record(spec, mode, row, summary.rows_read - 1)
        except _RowError as e:
            summary.skip(rowno, e.reason, e.detail)
            continue
        if rec.id in seen_ids:
            summary.skip(rowno, "duplicate_id", rec.id)
            continue
        seen_ids.add(rec.id)
        summary.records += 1
        yield rec


def _make_record(spec: DatasetSpec, mode: str, row: dict, index: int) -> ReviewRecord:
    if spec.id_column is not None:
        rid = row.get(spec.id_column)
        if rid is None or str(rid).strip() == "":
            raise _RowError("missing_id")
        rid = str(rid).strip()
    else:
        rid = str(index)
    rating = None
    if spec.rating_column is not None:
        rating = _parse_rating(row.get(spec.rating_column), spec.rating_scale)
    if mode == "precomputed":
        try:
            raw = [float(row.get(c)) for c in spec.sentiment_columns]
        except (TypeError, ValueError):
            raise _RowError("invalid_triple", "non-numeric sentiment value") from None
        try:
            triple = validate_triple(*raw)
        except TripleError as e:
            raise _RowError("invalid_triple", str(e)) from None
        return ReviewRecord(rid, None, rating, triple)
    text = row.get(spec.text_column)
    if text is None:
        raise _RowError("empty_text")
    text = str(text)
    if not text.strip():
        raise _RowError("empty_text")
    return ReviewRecord(rid, text, rating, None)


def load_dataset(spec: DatasetSpec) -> tuple[list[ReviewRecord], LoadSummary]:
    summary = LoadSummary()
    records = list(iter_dataset(spec, summary))
    if summary.n_skipped:
        log.warning("%s: skipped %d of %d rows %s", spec.path, summary.n_skipped,
                    summary.rows_read, dict(summary.skipped))
    return records, summary
