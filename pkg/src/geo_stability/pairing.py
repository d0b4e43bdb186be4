"""Consecutive-day and within-24h pair populations."""
from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import timedelta
from itertools import combinations
from typing import IO, Iterable, NamedTuple, Sequence

from .brands import BrandLexicon, LexiconSet
from .model import GroupKey, Kind, PairScore, RboParams, ResponseRecord, format_timestamp, iter_groups, ranked_list
from .similarity import extract, score_prepared, source_list

__all__ = [
    "TemporalPairingConfig",
    "SimultaneousPairingConfig",
    "RecordPair",
    "consecutive_day_pairs",
    "simultaneous_pairs",
    "daily_records",
    "write_manifest",
    "score_pairs",
]


@dataclass(frozen=True)
class TemporalPairingConfig:
    max_gap_days: int = 1
    # only "earliest" is supported
    dedup_within_day: str = "earliest"

    def __post_init__(self):
        if self.max_gap_days < 1:
            raise ValueError("max_gap_days must be >= 1")
        if self.dedup_within_day != "earliest":
            raise ValueError("dedup_within_day must be 'earliest'")


@dataclass(frozen=True)
class SimultaneousPairingConfig:
    max_delta: timedelta = timedelta(hours=24)
    require_citation: "bool | None" = None
    require_nonempty_text: "bool | None" = None

    def __post_init__(self):
        if self.max_delta <= timedelta(0):
            raise ValueError("max_delta must be positive")

    def needs_citation(self, kind: Kind) -> bool:
        return kind is Kind.SOURCE if self.require_citation is None else self.require_citation

    def needs_text(self, kind: Kind) -> bool:
        return kind is Kind.BRAND if self.require_nonempty_text is None else self.require_nonempty_text


class RecordPair(NamedTuple):
    key: GroupKey
    first: ResponseRecord
    second: ResponseRecord

    @property
    def delta_t(self) -> timedelta:
        return abs(self.second.timestamp - self.first.timestamp)


def daily_records(records: Sequence[ResponseRecord]) -> list[ResponseRecord]:
    """Keep the earliest record per UTC calendar day (input sorted by time)."""
    out: dict = {}
    for r in records:
        cur = out.get(r.day)
        if cur is None or (r.timestamp, r.run_index) < (cur.timestamp, cur.run_index):
            out[r.day] = r
    return [out[d] for d in sorted(out)]


def consecutive_day_pairs(
    dataset: Iterable[ResponseRecord],
    cfg: TemporalPairingConfig = TemporalPairingConfig(),
    kind: "Kind | str" = Kind.SOURCE,
) -> list[RecordPair]:
    """Pair each observed day with the next observed day of the same
    (campaign, engine, prompt) when they are at most ``max_gap_days`` apart.

    With the default gap of one day, only adjacent calendar days pair.
    """
    kind = Kind.parse(kind)
    pairs = []
    for (campaign, engine, prompt), recs in iter_groups(dataset):
        key = GroupKey(campaign, engine, prompt, kind)
        days = daily_records(recs)
        for a, b in zip(days, days[1:]):
            if (b.day - a.day).days <= cfg.max_gap_days:
                pairs.append(RecordPair(key, a, b))
    return pairs


def simultaneous_pairs(
    dataset: Iterable[ResponseRecord],
    cfg: SimultaneousPairingConfig = SimultaneousPairingConfig(),
    kind: "Kind | str" = Kind.SOURCE,
) -> list[RecordPair]:
    """All unordered pairs of qualifying runs within ``max_delta`` of each other.

    Runs are filtered individually before pairing: source pairs need at
    least one valid citation, brand pairs a non-empty answer.
    """
    kind = Kind.parse(kind)
    pairs = []
    for (campaign, engine, prompt), recs in iter_groups(dataset):
        key = GroupKey(campaign, engine, prompt, kind)
        runs = [
            r for r in recs
            if (not cfg.needs_citation(kind) or source_list(r))
            and (not cfg.needs_text(kind) or r.answer_text.strip())
        ]
        for a, b in combinations(runs, 2):
            if abs(b.timestamp - a.timestamp) <= cfg.max_delta:
                pairs.append(RecordPair(key, a, b))
    return pairs


def write_manifest(pairs: Iterable[RecordPair], stream: IO[str]) -> int:
    """One JSON line per pair for auditing."""
    n = 0
    for pair in pairs:
        k = pair.key
        row = {
            "campaign": k.campaign.name,
            "engine": k.engine.name,
            "prompt_index": k.prompt.index,
            "kind": k.kind.value,
            "t1": format_timestamp(pair.first.timestamp),
            "t2": format_timestamp(pair.second.timestamp),
            "delta_seconds": int(pair.delta_t.total_seconds()),
            "run1": pair.first.run_index,
            "run2": pair.second.run_index,
        }
        stream.write(json.dumps(row, sort_keys=True) + "\n")
        n += 1
    return n


def score_pairs(
    pairs: Iterable[RecordPair],
    params: RboParams = RboParams(),
    lexicons: "LexiconSet | BrandLexicon | None" = None,
) -> list[tuple[GroupKey, PairScore]]:
    """Score each pair by its group's kind.

    Brand pairs whose campaign has no lexicon are skipped. Extractions are
    cached per record, since most records take part in several pairs.
    """
    cache: dict = {}
    out = []

    def items(rec: ResponseRecord, kind: Kind, lex):
        key = (id(rec), kind)
        if key not in cache:
            ranked = ranked_list(extract(rec, kind, lex))
            cache[key] = (rec, (ranked, frozenset(ranked)))
        return cache[key][1]

    for pair in pairs:
        kind = pair.key.kind
        lex = None
        if kind is Kind.BRAND:
            if lexicons is None:
                raise ValueError("brand similarity requires a lexicon")
            if isinstance(lexicons, BrandLexicon):
                lex = lexicons
            else:
                lex = lexicons.for_campaign(pair.key.campaign)
            if lex is None:
                continue
        s, t = items(pair.first, kind, lex), items(pair.second, kind, lex)
        out.append((pair.key, score_prepared(
            s, t, params.p, delta_t=pair.delta_t, runs=(pair.first.run_index, pair.second.run_index),
        )))
    return out
