import csv
import json

import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from omega_rater.errors import ConfigError
from omega_rater.ingest import DatasetSpec, load_dataset


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


def test_text_with_ratings(tmp_path):
    rows = [(f"review {i}, \"quoted\"\nline two", (i % 5) + 1) for i in range(20000)]
    p = write_csv(tmp_path / "hotel.csv", ["Review", "Rating"], rows)
    recs, summary = load_dataset(DatasetSpec(p, text_column="Review", rating_column="Rating"))
    assert len(recs) == 20000 and summary.n_skipped == 0
    assert recs[7].rating == 3 and recs[7].text == rows[7][0]
    assert recs[7].id == "7"


def test_header_only_file(tmp_path):
    p = write_csv(tmp_path / "e.csv", ["Review", "Rating"], [])
    recs, summary = load_dataset(DatasetSpec(p, text_column="Review", rating_column="Rating"))
    assert recs == [] and summary.n_skipped == 0 and summary.rows_read == 0


def test_rating_out_of_scale_skipped(tmp_path):
    p = write_csv(tmp_path / "r.csv", ["Review", "Rating"], [("fine", "4"), ("odd", "7"), ("ok", "")])
    recs, summary = load_dataset(DatasetSpec(p, text_column="Review", rating_column="Rating"))
    assert [r.id for r in recs] == ["0", "2"]
    assert summary.skipped["invalid_rating"] == 1
    assert any("row 3" in m for m in summary.problems)
    assert recs[1].rating is None


def test_rating_scale_configurable(tmp_path):
    p = write_csv(tmp_path / "r.csv", ["Review", "Rating"], [("a", "7"), ("b", "11")])
    recs, summary = load_dataset(DatasetSpec(p, text_column="Review", rating_column="Rating", rating_scale=10))
    assert [r.rating for r in recs] == [7]


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_dataset(DatasetSpec(tmp_path / "nope.csv", text_column="Review"))


def test_missing_column(tmp_path):
    p = write_csv(tmp_path / "x.csv", ["Text"], [("a",)])
    with pytest.raises(ConfigError, match="Review"):
        load_dataset(DatasetSpec(p, text_column="Review"))
    with pytest.raises(ConfigError, match="Rating"):
        load_dataset(DatasetSpec(p, text_column="Text", rating_column="Rating"))


def test_both_text_and_sentiment_columns_is_config_error(tmp_path):
    p = write_csv(tmp_path / "x.csv", ["Review", "pos", "neu", "neg"], [("a", 0.2, 0.7, 0.1)])
    with pytest.raises(ConfigError):
        load_dataset(DatasetSpec(p, text_column="Review", sentiment_columns=("pos", "neu", "neg")))


def test_spec_requires_a_source():
    with pytest.raises(ConfigError):
        DatasetSpec("x.csv")
    with pytest.raises(ConfigError):
        DatasetSpec("x.csv", text_column="t", format="xml")


def test_precomputed_triples(tmp_path):
    rows = [(0.2, 0.7, 0.1, 5), (0.7, 0.7, 0.7, 1), ("x", 0.5, 0.5, 2), (0.3000001, 0.6, 0.1, 4)]
    p = write_csv(tmp_path / "t.csv", ["p", "u", "n", "stars"], rows)
    recs, summary = load_dataset(DatasetSpec(p, sentiment_columns=("p", "u", "n"), rating_column="stars"))
    assert [r.id for r in recs] == ["0", "3"]
    assert summary.skipped["invalid_triple"] == 2
    assert recs[0].precomputed.as_tuple() == pytest.approx((0.2, 0.7, 0.1))
    assert abs(sum(recs[1].precomputed.as_tuple()) - 1) < 1e-12
    assert summary.mode == "precomputed"


def test_jsonl(tmp_path):
    p = tmp_path / "r.jsonl"
    lines = [json.dumps({"id": "a", "Review": "nice", "Rating": 5}), "not json",
             json.dumps({"id": "b", "Review": "", "Rating": 1}), json.dumps([1, 2]),
             json.dumps({"id": "a", "Review": "dup", "Rating": 2}), json.dumps({"id": "c", "Review": "bad"})]
    p.write_text("\n".join(lines) + "\n")
    recs, summary = load_dataset(DatasetSpec(p, format="jsonl", text_column="Review",
                                             rating_column="Rating", id_column="id"))
    assert [(r.id, r.rating) for r in recs] == [("a", 5), ("c", None)]
    assert summary.skipped == {"malformed_row": 2, "empty_text": 1, "duplicate_id": 1}


def test_invalid_utf8_replaced(tmp_path):
    p = tmp_path / "b.csv"
    p.write_bytes(b"Review,Rating\n\"caf\xe9 good\",5\n")
    recs, _ = load_dataset(DatasetSpec(p, text_column="Review", rating_column="Rating"))
    assert recs[0].text == "caf� good"


def test_wrong_field_count_reported(tmp_path):
    p = tmp_path / "w.csv"
    p.write_text("Review,Rating\nfine,4\nextra,4,9\nshort\n")
    recs, summary = load_dataset(DatasetSpec(p, text_column="Review", rating_column="Rating"))
    assert len(recs) == 1 and summary.skipped["malformed_row"] == 2


def test_deterministic(tmp_path):
    p = write_csv(tmp_path / "d.csv", ["Review", "Rating"], [(f"t{i}", i % 5 + 1) for i in range(100)])
    spec = DatasetSpec(p, text_column="Review", rating_column="Rating")
    assert load_dataset(spec)[0] == load_dataset(spec)[0]


fragment = st.one_of(st.text(max_size=10), st.integers(-3, 12).map(str),
                     st.sampled_from(["", "5", "4.0", "4.5", "0", "inf", "nan", '"', '""', "\x00", ",", "\r"]))
raw_line = st.lists(fragment, max_size=5).map(",".join)


@settings(max_examples=200, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.lists(raw_line, max_size=25))
def test_fuzzed_rows_never_yield_invalid_records(tmp_path, lines):
    p = tmp_path / "fuzz.csv"
    p.write_text("Review,Rating\n" + "\n".join(lines) + "\n", encoding="utf-8", errors="surrogatepass")
    recs, summary = load_dataset(DatasetSpec(p, text_column="Review", rating_column="Rating"))
    for r in recs:
        assert r.text is not None and r.text.strip()
        assert r.rating is None or 1 <= r.rating <= 5
    assert summary.records == len(recs)
    assert summary.records + summary.n_skipped == summary.rows_read
