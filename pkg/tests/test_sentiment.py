import math
import random

import pytest
from hypothesis import given, strategies as st

from omega_rater.sentiment import (Lexicon, SentimentTriple, TripleError, load_lexicon, parse_lexicon,
                                   passthrough, score_text, tokenize, validate_triple)
from omega_rater.ingest import ReviewRecord

LEX = Lexicon({"good": 1.9, "bad": -2.5, "meh": 0.0})


def test_single_positive_token():
    assert score_text("good", Lexicon({"good": 1.9})).as_tuple() == (1.0, 0.0, 0.0)


def test_empty_text_is_wholly_neutral():
    assert score_text("", LEX).as_tuple() == (0.0, 1.0, 0.0)
    assert score_text("   \n\t", LEX).as_tuple() == (0.0, 1.0, 0.0)
    assert score_text("!!! ...", LEX).as_tuple() == (0.0, 1.0, 0.0)


def test_counting():
    t = score_text("good bad ok", Lexicon({"good": 1.9, "bad": -2.5}))
    assert t.as_tuple() == pytest.approx((1 / 3, 1 / 3, 1 / 3), abs=1e-15)


def test_zero_valence_counts_as_neutral():
    assert score_text("meh meh good", LEX).as_tuple() == pytest.approx((1 / 3, 2 / 3, 0.0))


def test_tokenize_strips_edge_punctuation_and_lowercases():
    assert tokenize('"Good," he said... BAD!') == ["good", "he", "said", "bad"]
    assert tokenize("well-made don't") == ["well-made", "don't"]


def test_score_requires_lexicon():
    with pytest.raises(ValueError):
        score_text("good", Lexicon({}))


def test_validate_on_simplex_unchanged():
    assert validate_triple(0.5, 0.3, 0.2).as_tuple() == pytest.approx((0.5, 0.3, 0.2), abs=1e-16)


def test_validate_renormalizes():
    t = validate_triple(0.500001, 0.3, 0.2, renorm_tolerance=1e-5)
    assert math.fsum(t.as_tuple()) == pytest.approx(1.0, abs=1e-15)
    assert t.pos == pytest.approx(0.500001 / 1.000001, rel=1e-15)


@pytest.mark.parametrize("raw", [(0.7, 0.7, 0.7), (-0.1, 0.6, 0.5), (math.nan, 0.5, 0.5), (0.5, 0.5, 0.1)])
def test_validate_rejects(raw):
    with pytest.raises(TripleError):
        validate_triple(*raw)


def test_triple_constructor_checks_invariants():
    with pytest.raises(TripleError):
        SentimentTriple(0.5, 0.5, 0.5)
    with pytest.raises(TripleError):
        SentimentTriple(1.2, -0.2, 0.0)


def test_passthrough():
    rec = ReviewRecord("x", None, None, SentimentTriple(0.2, 0.7, 0.1))
    assert passthrough(rec).as_tuple() == pytest.approx((0.2, 0.7, 0.1))
    with pytest.raises(TripleError):
        passthrough(ReviewRecord("y", "text"))


def test_parse_lexicon_vader_layout():
    lines = ["# comment", "good\t1.9\t0.9\t[2, 2, 1]", "", "BAD\t-2.5\t0.5", "ok\t0"]
    lex = parse_lexicon(lines)
    assert dict(lex) == {"good": 1.9, "bad": -2.5, "ok": 0.0}


@pytest.mark.parametrize("lines", [["a\t1", "A\t2"], ["a 1"], ["a\tx"], ["a\tnan"]])
def test_parse_lexicon_rejects(lines):
    with pytest.raises(ValueError):
        parse_lexicon(lines)


def test_bundled_lexicon_loads():
    lex = load_lexicon()
    assert len(lex) > 100
    assert lex["great"] > 0 and lex["terrible"] < 0


def test_lexicon_is_read_only():
    with pytest.raises(TypeError):
        LEX["good"] = 0  # type: ignore[index]


words = st.sampled_from(["good", "bad", "meh", "Good", "BAD!", "the", "ok,", "...", "café", "😀"])


@given(st.lists(words, max_size=30), st.sampled_from([" ", "  ", "\t", "\n", " 　"]))
def test_scores_are_valid_and_whitespace_insensitive(tokens, sep):
    t = score_text(sep.join(tokens), LEX)
    assert all(0 <= x <= 1 for x in t.as_tuple())
    assert abs(sum(t.as_tuple()) - 1) <= 1e-9
    assert t == score_text(" ".join(tokens), LEX)


@given(st.text())
def test_arbitrary_text_gives_valid_triple(text):
    t = score_text(text, LEX)
    assert abs(sum(t.as_tuple()) - 1) <= 1e-9


@given(st.lists(words, max_size=30), st.randoms())
def test_order_free_and_case_insensitive(tokens, rnd):
    shuffled = tokens[:]
    rnd.shuffle(shuffled)
    text = " ".join(tokens)
    assert score_text(text, LEX) == score_text(" ".join(shuffled), LEX)
    assert score_text(text, LEX) == score_text(text.upper(), LEX)


@given(st.tuples(*[st.floats(0, 1)] * 3))
def test_validate_normalized_or_raises(raw):
    try:
        t = validate_triple(*raw)
    except TripleError:
        assert abs(sum(raw) - 1) > 1e-6 or sum(raw) == 0
        return
    assert abs(sum(t.as_tuple()) - 1) <= 1e-9
    assert all(0 <= x <= 1 for x in t.as_tuple())


def test_random_simplex_points_validate():
    rng = random.Random(3)
    for _ in range(1000):
        a, b = sorted((rng.random(), rng.random()))
        t = validate_triple(a, b - a, 1 - b)
        assert abs(sum(t.as_tuple()) - 1) <= 1e-9
