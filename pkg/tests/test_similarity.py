import math
from datetime import timedelta

import pytest
from hypothesis import given
from hypothesis import strategies as st

from geo_stability.model import EXCLUDED, Kind, RboParams
from geo_stability.similarity import jaccard, rbo_min, score_pair
from conftest import make_record
from oracles import naive_jaccard, naive_rbo

items = st.lists(st.sampled_from("abcdefghij"), max_size=10)


def test_jaccard_examples():
    assert jaccard({"a", "b", "c"}, {"b", "c", "d"}) == 0.5
    assert jaccard({"x", "y"}, {"x", "y"}) == 1.0
    assert jaccard([], ["x"]) == 0.0
    assert jaccard([], []) is EXCLUDED


def test_rbo_examples():
    assert rbo_min(list("abcde"), list("abcde"), 0.9) == pytest.approx(1 - 0.9 ** 5, abs=1e-12)
    assert rbo_min(["a", "b"], ["b", "a"], 0.9) == pytest.approx(0.09, abs=1e-12)
    assert rbo_min(["a", "b"], ["c", "d"]) == 0.0
    assert rbo_min([], []) is EXCLUDED
    assert rbo_min([], ["a"]) == 0.0


def test_rbo_truncates_at_shorter_list():
    assert rbo_min(["a"], ["a", "b", "c"], 0.9) == pytest.approx(0.1, abs=1e-15)


def test_rbo_dedups_first_occurrence():
    assert rbo_min(["a", "a", "b"], ["a", "b"]) == rbo_min(["a", "b"], ["a", "b"])


@given(items, items)
def test_symmetry_and_bounds(s, t):
    for f in (jaccard, rbo_min):
        a, b = f(s, t), f(t, s)
        if a is EXCLUDED:
            assert b is EXCLUDED and not s and not t
        else:
            assert a == pytest.approx(b, abs=1e-12) and 0.0 <= a <= 1.0


@given(items, items, st.floats(0.05, 0.95))
def test_against_oracles(s, t, p):
    r, o = rbo_min(s, t, p), naive_rbo(s, t, p)
    assert (r is EXCLUDED) == (o is None)
    if o is not None:
        assert math.isclose(r, o, abs_tol=1e-12)
    j, oj = jaccard(s, t), naive_jaccard(s, t)
    if oj is not None:
        assert math.isclose(j, oj, abs_tol=1e-12)


@given(st.lists(st.sampled_from("abcdefghij"), min_size=1, max_size=10, unique=True))
def test_identical_lists_hit_truncation_bound(s):
    assert rbo_min(s, s) == pytest.approx(1 - 0.9 ** len(s), abs=1e-12)


def test_source_pairs():
    a = make_record(citations=["https://www.a.com/1", "https://b.com/2", "https://c.com"])
    b = make_record(run=2, ts=1, citations=["https://a.com/9", "https://b.com", "https://c.com/x"])
    s = score_pair(a, b)
    assert s.jaccard == 1.0 and s.rbo == pytest.approx(1 - 0.9 ** 3)
    assert s.delta_t == timedelta(hours=1) and s.runs == (1, 2)
    empty = make_record(run=3, citations=[])
    assert (score_pair(a, empty).jaccard, score_pair(a, empty).rbo) == (0.0, 0.0)
    assert score_pair(empty, make_record(run=4, citations=["junk"])).excluded


def test_brand_pairs(telekom_lexicon):
    a = make_record(text="Salt, Sunrise")
    b = make_record(run=2, text="Sunrise und Salt")
    s = score_pair(a, b, Kind.BRAND, RboParams(), telekom_lexicon)
    assert s.jaccard == 1.0 and s.rbo == pytest.approx(0.09)
    with pytest.raises(ValueError):
        score_pair(a, b, "brand")
