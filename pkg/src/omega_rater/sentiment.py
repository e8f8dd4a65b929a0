"""Sentiment triples: validation, a token-proportion lexicon scorer, passthrough.

The scorer is deliberately simple. Each token is positive, negative or
neutral according to the sign of its lexicon valence, and the triple is the
three counts divided by the token total. Richer scorers (full VADER, model
based) plug in by supplying precomputed (pos, neu, neg) columns instead.
"""

from __future__ import annotations

import math
import unicodedata
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from types import MappingProxyType
from typing import Mapping

SUM_TOLERANCE = 1e-9
DEFAULT_RENORM_TOLERANCE = 1e-6


class TripleError(ValueError):
    """Raw proportions cannot be turned into a valid sentiment triple."""


@dataclass(frozen=True)
class SentimentTriple:
    """Proportions (pos, neu, neg) on the probability simplex."""

    pos: float
    neu: float
    neg: float

    def __post_init__(self):
        for name in ("pos", "neu", "neg"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise TripleError(f"{name}={v!r} outside [0, 1]")
        total = self.pos + self.neu + self.neg
        if abs(total - 1.0) > SUM_TOLERANCE:
            raise TripleError(f"components sum to {total!r}, expected 1")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.pos, self.neu, self.neg)


def validate_triple(pos: float, neu: float, neg: float,
                    renorm_tolerance: float = DEFAULT_RENORM_TOLERANCE) -> SentimentTriple:
    """Check raw proportions and renormalize them onto the simplex.

    Components must be finite and non-negative and their sum must lie within
    ``renorm_tolerance`` of 1; the returned triple is the input divided by
    that sum.
    """
    raw = (float(pos), float(neu), float(neg))
    if not all(math.isfinite(v) for v in raw):
        raise TripleError(f"non-finite component in {raw}")
    if any(v < 0 for v in raw):
        raise TripleError(f"negative component in {raw}")
    total = math.fsum(raw)
    if abs(total - 1.0) > renorm_tolerance:
        raise TripleError(f"components sum to {total!r}, outside 1 +/- {renorm_tolerance}")
    if total == 0.0:
        raise TripleError("all components are zero")
    return SentimentTriple(*(v / total for v in raw))


class Lexicon(Mapping[str, float]):
    """Immutable map from lowercase token to signed valence."""

    def __init__(self, entries: Mapping[str, float]):
        table = {}
        for token, valence in entries.items():
            key = token.lower()
            if key in table:
                raise ValueError(f"duplicate lexicon token {key!r}")
            valence = float(valence)
            if not math.isfinite(valence):
                raise ValueError(f"non-finite valence for {key!r}")
            table[key] = valence
        self._table = MappingProxyType(table)

    def __getitem__(self, token: str) -> float:
        return self._table[token]

    def __iter__(self):
        return iter(self._table)

    def __len__(self) -> int:
        return len(self._table)

    def __repr__(self) -> str:
        return f"Lexicon({len(self)} tokens)"


def parse_lexicon(lines) -> Lexicon:
    """Parse ``token<TAB>valence[<TAB>...]`` lines; blank and ``#`` lines are skipped.

    Extra columns (the published VADER file carries standard deviations and
    raw ratings) are ignored.
    """
    entries: dict[str, float] = {}
    for lineno, line in enumerate(lines, start=1):
        line = line.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) < 2:
            raise ValueError(f"lexicon line {lineno}: expected token<TAB>valence")
        token = fields[0].strip().lower()
        if token in entries:
            raise ValueError(f"lexicon line {lineno}: duplicate token {token!r}")
        try:
            entries[token] = float(fields[1])
        except ValueError:
            raise ValueError(f"lexicon line {lineno}: bad valence {fields[1]!r}") from None
    return Lexicon(entries)


def load_lexicon(path: str | Path | None = None) -> Lexicon:
    """Load a lexicon file, or the bundled English lexicon when ``path`` is None."""
    if path is None:
        text = resources.files("omega_rater").joinpath("data/lexicon.tsv").read_text("utf-8")
        lex = parse_lexicon(text.splitlines())
    else:
        with open(path, encoding="utf-8", errors="replace") as fh:
            lex = parse_lexicon(fh)
    if not lex:
        raise ValueError("lexicon is empty")
    return lex


def _strip_punct(token: str) -> str:
    start, end = 0, len(token)
    while start < end and unicodedata.category(token[start]).startswith("P"):
        start += 1
    while end > start and unicodedata.category(token[end - 1]).startswith("P"):
        end -= 1
    return token[start:end]


def tokenize(text: str) -> list[str]:
    """Whitespace split, strip edge punctuation, lowercase; empty tokens dropped."""
    out = []
    for raw in text.split():
        tok = _strip_punct(raw).lower()
        if tok:
            out.append(tok)
    return out


def score_text(text: str, lexicon: Mapping[str, float]) -> SentimentTriple:
    """Token-proportion sentiment triple of ``text``.

    >>> score_text("good bad ok", Lexicon({"good": 1.9, "bad": -2.5})).pos
    0.3333333333333333
    """
    if not lexicon:
        raise ValueError("lexicon must be non-empty")
    tokens = tokenize(text)
    if not tokens:
        return SentimentTriple(0.0, 1.0, 0.0)
    n_pos = n_neg = 0
    for tok in tokens:
        v = lexicon.get(tok, 0.0)
        if v > 0:
            n_pos += 1
        elif v < 0:
            n_neg += 1
    n = len(tokens)
    pos, neg = n_pos / n, n_neg / n
    return SentimentTriple(pos, (n - n_pos - n_neg) / n, neg)


def passthrough(record) -> SentimentTriple:
    """Return a record's precomputed triple, re-validated."""
    pre = record.precomputed
    if pre is None:
        raise TripleError(f"record {record.id!r} has no precomputed triple")
    if isinstance(pre, SentimentTriple):
        return validate_triple(pre.pos, pre.neu, pre.neg)
    return validate_triple(*pre)
