"""Lexicon-based brand mention detection and campaign qualification."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import yaml

from .model import CampaignId, ResponseRecord

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.70


@dataclass(frozen=True)
class BrandLexicon:
    """Lower-case search patterns mapped to canonical brand names.

    Several patterns may share one canonical brand.
    """

    campaign: CampaignId
    patterns: Mapping[str, str]

    def __post_init__(self):
        folded: dict[str, str] = {}
        for pat, canon in self.patterns.items():
            if not pat or pat != pat.lower():
                raise ValueError(f"pattern {pat!r} must be non-empty and lower-case")
            if not canon:
                raise ValueError(f"pattern {pat!r} maps to an empty brand")
            prev = folded.setdefault(canon.casefold(), canon)
            if prev != canon:
                raise ValueError(f"canonical brands {prev!r} and {canon!r} collide after case-folding")
        object.__setattr__(self, "patterns", dict(self.patterns))

    @classmethod
    def from_entries(cls, campaign: "CampaignId | str", entries: Iterable[Mapping]) -> "BrandLexicon":
        """Build from ``[{canonical, patterns}]``; a missing ``patterns`` list
        defaults to the lower-cased canonical name."""
        if isinstance(campaign, str):
            campaign = CampaignId(campaign)
        patterns = {}
        for entry in entries:
            canon = entry["canonical"]
            pats = entry.get("patterns") or [canon.lower()]
            for pat in pats:
                if patterns.get(pat, canon) != canon:
                    raise ValueError(f"pattern {pat!r} maps to two brands")
                patterns[pat] = canon
        return cls(campaign, patterns)

    @property
    def brands(self) -> list[str]:
        return sorted(set(self.patterns.values()))

    def to_entries(self) -> list[dict]:
        by_brand: dict[str, list[str]] = {}
        for pat, canon in self.patterns.items():
            by_brand.setdefault(canon, []).append(pat)
        return [{"canonical": b, "patterns": sorted(by_brand[b])} for b in sorted(by_brand)]


@dataclass(frozen=True)
class DetectionResult:
    record_ref: object
    brands_ordered: tuple[str, ...]
    offsets: tuple[int, ...] = ()

    @property
    def brands_set(self) -> frozenset[str]:
        return frozenset(self.brands_ordered)

    def __bool__(self):
        return bool(self.brands_ordered)


def detect_brands(text: str, lexicon: BrandLexicon, record_ref=None) -> DetectionResult:
    """Find canonical brands whose patterns occur as plain substrings.

    Brands are ranked by their earliest match offset over all patterns; equal
    offsets fall back to the canonical name.
    """
    if not text:
        return DetectionResult(record_ref, ())
    low = text.lower()
    first: dict[str, int] = {}
    for pat, canon in lexicon.patterns.items():
        pos = low.find(pat)
        if pos >= 0 and pos < first.get(canon, len(low) + 1):
            first[canon] = pos
    order = sorted(first.items(), key=lambda kv: (kv[1], kv[0]))
    return DetectionResult(record_ref, tuple(b for b, _ in order), tuple(o for _, o in order))


def detection_rate(results: Sequence[DetectionResult]) -> float:
    """Fraction of results with at least one detected brand."""
    if len(results) == 0:
        raise ValueError("no records")
    return sum(1 for r in results if r.brands_ordered) / len(results)


@dataclass
class QualificationReport:
    rates: dict[str, float]
    threshold: float = DEFAULT_THRESHOLD
    qualified: dict[str, bool] = field(default_factory=dict)

    @property
    def disqualified(self) -> dict[str, float]:
        return {c: self.rates[c] for c in self.rates if not self.qualified[c]}

    def to_csv(self) -> str:
        lines = ["# schema_version: 1", "campaign,detection_rate,threshold,qualified"]
        for c in sorted(self.rates):
            lines.append(f"{c},{self.rates[c]:.6f},{self.threshold:.2f},{str(self.qualified[c]).lower()}")
        return "\n".join(lines) + "\n"


def qualify_campaigns(rates: Mapping[str, float], threshold: float = DEFAULT_THRESHOLD) -> QualificationReport:
    """Qualify campaigns whose mean detection rate is at least ``threshold``."""
    if not 0.0 < threshold <= 1.0:
        raise ValueError("threshold must lie in (0, 1]")
    rates = {str(k): float(v) for k, v in rates.items()}
    report = QualificationReport(rates, threshold, {c: r >= threshold for c, r in rates.items()})
    for c, r in report.disqualified.items():
        logger.warning("campaign %s disqualified: detection rate %.3f < %.2f", c, r, threshold)
    return report


class LexiconSet(dict):
    """Campaign-keyed lexicons; lookup accepts the campaign key or display name."""

    def for_campaign(self, campaign: "CampaignId | str") -> "BrandLexicon | None":
        labels = [campaign] if isinstance(campaign, str) else [campaign.name, campaign.display_name]
        for label in labels:
            low = label.strip().lower()
            for key, lex in self.items():
                if key.lower() == low or lex.campaign.matches(low):
                    return lex
        return None


def load_lexicons(path: "str | Path | None" = None) -> LexiconSet:
    """Load a lexicon document mapping campaign -> [{canonical, patterns}].

    Without a path, the bundled study lexicons are returned.
    """
    if path is None or str(path) == "builtin":
        text = resources.files("geo_stability.data").joinpath("lexicons.json").read_text("utf-8")
        doc = json.loads(text)
    else:
        with open(path, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh) or {}
    out = LexiconSet()
    for key, entries in doc.items():
        if key.startswith("_"):
            continue
        display = None
        if isinstance(entries, Mapping):
            display = entries.get("display_name")
            entries = entries["brands"]
        out[key] = BrandLexicon.from_entries(CampaignId(key, display or ""), entries)
    return out


def detect_records(records: Iterable[ResponseRecord], lexicons: LexiconSet) -> list[tuple[ResponseRecord, DetectionResult]]:
    """Run detection for each record using its campaign's lexicon; records
    whose campaign has no lexicon are skipped."""
    out = []
    missing = set()
    for r in records:
        lex = lexicons.for_campaign(r.campaign)
        if lex is None:
            missing.add(r.campaign.name)
            continue
        out.append((r, detect_brands(r.answer_text, lex, record_ref=r.identity)))
    for name in sorted(missing):
        logger.warning("no lexicon for campaign %s; its records are skipped", name)
    return out


def campaign_detection_rates(records: Iterable[ResponseRecord], lexicons: LexiconSet) -> dict[str, float]:
    by_campaign: dict[str, list[DetectionResult]] = {}
    for r, res in detect_records(records, lexicons):
        by_campaign.setdefault(r.campaign.name, []).append(res)
    return {c: detection_rate(v) for c, v in sorted(by_campaign.items())}
