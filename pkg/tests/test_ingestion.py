import io
import json
from datetime import date

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geo_stability.ingestion import (
    IngestConfig,
    apply_filters,
    coverage_table,
    normalize_url,
    parse_log,
    parse_timestamp,
    read_logs,
    write_log,
)
from geo_stability.model import validate_records
from conftest import make_record


def line(**kw):
    obj = {
        "engine": "chatgpt", "campaign": "Telekom", "prompt_index": 1, "prompt_text": "p",
        "timestamp": "2026-02-02T09:00:00Z", "run_index": 1, "answer_text": "a",
        "citations": ["https://www.swisscom.ch/x"],
    }
    obj.update(kw)
    return json.dumps(obj)


def test_three_valid_lines():
    text = "\n".join(line(run_index=i) for i in (1, 2, 3))
    recs, errs = parse_log(io.StringIO(text))
    assert len(recs) == 3 and errs == []


def test_truncated_line_reported_with_number():
    text = "\n".join([line(run_index=1), line(run_index=2)[:-10], line(run_index=3)])
    recs, errs = parse_log(io.StringIO(text))
    assert len(recs) == 2
    assert [e.line_no for e in errs] == [2]


def test_empty_file():
    recs, errs = parse_log(io.StringIO(""))
    assert recs == [] and errs == []


def test_bytes_stream_and_bad_utf8():
    data = (line() + "\n").encode() + b"\xff\xfe\n"
    recs, errs = parse_log(io.BytesIO(data))
    assert len(recs) == 1 and errs[0].line_no == 2


@pytest.mark.parametrize("bad,msg", [
    ({"prompt_index": 0}, "prompt_index"),
    ({"citations": "https://a.com"}, "citations"),
    ({"timestamp": "yesterday"}, ""),
])
def test_field_errors_are_line_errors(bad, msg):
    recs, errs = parse_log(io.StringIO(line(**bad)))
    assert recs == [] and len(errs) == 1 and msg in errs[0].message


def test_missing_field():
    obj = json.loads(line())
    del obj["engine"]
    _, errs = parse_log(io.StringIO(json.dumps(obj)))
    assert "engine" in errs[0].message


def test_run_index_assigned_by_timestamp_within_day():
    text = "\n".join([
        line(run_index=None, timestamp="2026-02-02T12:00:00Z"),
        line(run_index=None, timestamp="2026-02-02T08:00:00Z"),
        line(run_index=None, timestamp="2026-02-03T08:00:00Z"),
    ])
    recs, _ = parse_log(io.StringIO(text))
    assert [r.run_index for r in recs] == [2, 1, 1]


def test_naive_timestamp_read_as_utc():
    assert parse_timestamp("2026-02-02T09:00:00") == parse_timestamp("2026-02-02T10:00:00+01:00")


def test_write_then_parse_roundtrip(tmp_path):
    recs = [make_record(run=i, text="Grüezi", citations=["https://a.ch/x"]) for i in (1, 2)]
    path = tmp_path / "log.jsonl"
    with open(path, "w", encoding="utf-8") as fh:
        write_log(recs, fh)
    back, errs = read_logs([path])
    assert errs == [] and back == recs


@pytest.mark.parametrize("url,expected", [
    ("https://www.swisscom.ch/de/privatkunden", "swisscom.ch"),
    ("HTTP://Example.COM:8080/a?b=1", "example.com"),
    ("not a url", None),
    ("https://shop.www.example.com/", "shop.www.example.com"),
    ("https://example.com./", "example.com"),
    ("ftp://", None),
    ("", None),
])
def test_normalize_url(url, expected):
    assert normalize_url(url) == expected


@given(st.from_regex(r"[a-z]{1,8}\.(ch|com|de)", fullmatch=True))
def test_normalize_idempotent(host):
    once = normalize_url("https://www." + host + "/path")
    assert once == host and normalize_url(once) == once


def test_filters_excluded_date_blocked_domain_and_engine():
    cfg = IngestConfig(
        start_date=date(2026, 1, 24), end_date=date(2026, 3, 20), excluded_dates={"2026-01-30"},
    )
    recs = [
        make_record(ts=parse_timestamp("2026-01-30T10:00:00Z"), citations=["https://a.com"]),
        make_record(run=2, citations=["https://images.openai.com/img.png"]),
        make_record(engine="Google AI Overviews", run=3),
        make_record(run=4, ts=parse_timestamp("2026-03-21T10:00:00Z")),
        make_record(run=5, citations=["not a url", "https://b.com"]),
    ]
    ds = apply_filters(recs, cfg)
    assert ds.drop_counts["excluded_dates"] == 1
    assert ds.drop_counts["excluded_engines"] == 1
    assert ds.drop_counts["date_window"] == 1
    assert ds.drop_counts["blocked_domain_citations"] == 1
    assert ds.drop_counts["malformed_citations"] == 1
    assert [r.run_index for r in ds] == [2, 5]
    assert ds.records[0].citations == ()
    assert ds.records[1].citations == ("https://b.com",)
    assert ds.dropped_records == 3


def test_filter_is_idempotent_and_sorted():
    recs = [make_record(run=2, ts=3), make_record(run=1, ts=1), make_record(engine="gemini", ts=2)]
    once = apply_filters(recs)
    assert apply_filters(once).records == once.records
    assert [(r.engine.name, r.run_index) for r in once] == [("ChatGPT", 1), ("ChatGPT", 2), ("Gemini", 1)]
    assert validate_records(once.records) == {}


def test_config_from_nested_or_dotted_keys_and_overrides():
    nested = IngestConfig.from_mapping({"date_window": {"start": "2026-01-24", "end": "2026-03-20"}})
    dotted = IngestConfig.from_mapping({"date_window.start": "2026-01-24", "date_window.end": "2026-03-20"})
    assert nested == dotted
    over = IngestConfig.from_mapping({"date_window": {"start": "2026-01-24"}}, start_date="2026-02-01", end_date=None)
    assert over.start_date == date(2026, 2, 1) and over.end_date is None
    with pytest.raises(ValueError):
        IngestConfig.from_mapping({"date_window": {"start": "2026-03-01", "end": "2026-02-01"}})


def test_bundled_temporal_config_loads():
    from importlib import resources

    path = resources.files("geo_stability.data").joinpath("temporal_window.yaml")
    cfg = IngestConfig.load(str(path))
    assert cfg.excluded_dates == {date(2026, 1, 30)}
    assert "images.openai.com" in cfg.blocked_domains


def test_coverage_cases():
    assert len(coverage_table([])) == 0
    one = coverage_table([make_record()])
    assert list(one.cells.values()) == [1]
    same_day = coverage_table([make_record(run=1, ts=0), make_record(run=2, ts=3)])
    assert list(same_day.cells.values()) == [1]
    csv = coverage_table([make_record(), make_record(engine="gemini", ts=30)]).to_csv()
    assert csv.splitlines()[1:] == ["campaign,queries,days,ChatGPT,Gemini", "Telecommunications,1,2,1,1"]


def test_www_is_not_stripped_down_to_a_tld():
    assert normalize_url("https://www.ch/") == "www.ch"
