"""Jaccard and minimum-bound rank-biased overlap with the shared empty policy.

Both metrics follow the same edge-case rule: two empty inputs give
``EXCLUDED`` (dropped at aggregation), one empty input gives 0.0.
"""
from __future__ import annotations

from typing import Iterable, Sequence

from .brands import BrandLexicon, detect_brands
from .ingestion import normalize_url
from .model import EXCLUDED, Excluded, Kind, PairScore, RboParams, ResponseRecord, item_set, ranked_list

__all__ = ["jaccard", "rbo_min", "score_pair", "extract", "source_list"]


def jaccard(a: Iterable[str], b: Iterable[str]) -> "float | Excluded":
    return _jaccard_sets(item_set(a), item_set(b))


def _jaccard_sets(a: frozenset, b: frozenset) -> "float | Excluded":
    if not a and not b:
        return EXCLUDED
    if not a or not b:
        return 0.0
    inter = len(a & b)
    return inter / (len(a) + len(b) - inter)


def rbo_min(s: Sequence[str], t: Sequence[str], params: "RboParams | float" = RboParams()) -> "float | Excluded":
    """Rank-biased overlap truncated at the shorter list.

    Lists are de-duplicated first (earliest occurrence wins). For identical
    lists of length k the score is ``1 - p**k``.
    """
    p = params.p if isinstance(params, RboParams) else RboParams(float(params)).p
    return _rbo_ranked(ranked_list(s), ranked_list(t), p)


def _rbo_ranked(s: tuple, t: tuple, p: float) -> "float | Excluded":
    if not s and not t:
        return EXCLUDED
    k = min(len(s), len(t))
    if k == 0:
        return 0.0
    seen_s: set[str] = set()
    seen_t: set[str] = set()
    overlap = 0
    total = 0.0
    weight = 1.0
    for d in range(k):
        x, y = s[d], t[d]
        # incremental |S_:d ∩ T_:d|
        if x == y:
            overlap += 1
        else:
            overlap += (x in seen_t) + (y in seen_s)
        seen_s.add(x)
        seen_t.add(y)
        total += weight * overlap / (d + 1)
        weight *= p
    return (1.0 - p) * total


def source_list(record: ResponseRecord) -> tuple[str, ...]:
    """Normalized cited domains in citation order, de-duplicated."""
    return ranked_list(d for d in map(normalize_url, record.citations) if d)


def extract(record: ResponseRecord, kind: "Kind | str", lexicon: BrandLexicon | None = None) -> tuple[str, ...]:
    kind = Kind.parse(kind)
    if kind is Kind.SOURCE:
        return source_list(record)
    if lexicon is None:
        raise ValueError("brand similarity requires a lexicon")
    return detect_brands(record.answer_text, lexicon).brands_ordered


def score_lists(s: Sequence[str], t: Sequence[str], params: RboParams = RboParams(), **kw) -> PairScore:
    return PairScore(jaccard(s, t), rbo_min(s, t, params), **kw)


def score_prepared(s, t, p: float, **kw) -> PairScore:
    """Like :func:`score_lists` for ``(ranked_list, item_set)`` views built once per record."""
    return PairScore(_jaccard_sets(s[1], t[1]), _rbo_ranked(s[0], t[0], p), **kw)


def score_pair(
    r1: ResponseRecord,
    r2: ResponseRecord,
    kind: "Kind | str" = Kind.SOURCE,
    params: RboParams = RboParams(),
    lexicon: BrandLexicon | None = None,
) -> PairScore:
    kind = Kind.parse(kind)
    if kind is Kind.BRAND and lexicon is None:
        raise ValueError("brand similarity requires a lexicon")
    s = extract(r1, kind, lexicon)
    t = extract(r2, kind, lexicon)
    return score_lists(
        s, t, params,
        delta_t=abs(r1.timestamp - r2.timestamp),
        runs=(r1.run_index, r2.run_index),
    )
