"""Citation-count tallies and Gini concentration per campaign x engine."""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .ingestion import normalize_url
from .model import CampaignId, EngineId, ResponseRecord

logger = logging.getLogger(__name__)

__all__ = ["tally_citations", "gini", "gini_matrix", "GiniMatrix"]


def tally_citations(
    dataset: Iterable[ResponseRecord],
    campaign: "CampaignId | None" = None,
    engine: "EngineId | None" = None,
) -> Counter:
    """Count every citation occurrence per normalized domain.

    Repeat citations of a domain inside one answer each count.
    """
    counts: Counter = Counter()
    for r in dataset:
        if campaign is not None and r.campaign != campaign:
            continue
        if engine is not None and r.engine != engine:
            continue
        for url in r.citations:
            dom = normalize_url(url)
            if dom:
                counts[dom] += 1
    return counts


def gini(counts: "Mapping[str, int] | Iterable[float]") -> float:
    """Rank-weighted Gini coefficient of non-negative counts.

    >>> gini([1, 2, 3, 4, 10])
    0.4
    """
    values = list(counts.values() if isinstance(counts, Mapping) else counts)
    if not values or any(v < 0 for v in values):
        raise ValueError("counts must be a non-empty vector of non-negative values")
    n = len(values)
    if all(float(v).is_integer() for v in values):
        # exact integer form: (2*sum(i*y_i) - (n+1)*sum(y)) / (n*sum(y))
        y = sorted(int(v) for v in values)
        total = sum(y)
        if total == 0:
            raise ValueError("undefined Gini: all counts are zero")
        weighted = sum(i * v for i, v in enumerate(y, start=1))
        return (2 * weighted - (n + 1) * total) / (n * total)
    y = np.sort(np.asarray(values, dtype=float))
    total = y.sum()
    if total <= 0:
        raise ValueError("undefined Gini: all counts are zero")
    ranks = np.arange(1, n + 1, dtype=float)
    return float(2.0 * np.dot(ranks, y) / (n * total) - (n + 1) / n)


@dataclass
class GiniMatrix:
    cells: dict[tuple[CampaignId, EngineId], float]
    skipped: list[tuple[CampaignId, EngineId]] = field(default_factory=list)

    @property
    def campaigns(self) -> list[CampaignId]:
        return sorted({c for c, _ in self.cells})

    @property
    def engines(self) -> list[EngineId]:
        return sorted({e for _, e in self.cells})

    def by_campaign(self) -> dict[CampaignId, float]:
        return {c: float(np.mean([v for (cc, _), v in self.cells.items() if cc == c])) for c in self.campaigns}

    def by_engine(self) -> dict[EngineId, float]:
        return {e: float(np.mean([v for (_, ee), v in self.cells.items() if ee == e])) for e in self.engines}

    @property
    def global_mean(self) -> float:
        if not self.cells:
            return float("nan")
        return float(np.mean(list(self.cells.values())))

    def to_csv(self) -> str:
        engines = self.engines
        lines = ["# schema_version: 1", ",".join(["campaign"] + [e.display_name for e in engines] + ["mean"])]
        camp_means = self.by_campaign()
        for c in self.campaigns:
            vals = [self.cells.get((c, e)) for e in engines]
            row = [c.display_name] + ["" if v is None else f"{v:.6f}" for v in vals] + [f"{camp_means[c]:.6f}"]
            lines.append(",".join(row))
        eng_means = self.by_engine()
        lines.append(",".join(["mean"] + [f"{eng_means[e]:.6f}" for e in engines] + [f"{self.global_mean:.6f}"]))
        return "\n".join(lines) + "\n"


def gini_matrix(dataset: Iterable[ResponseRecord]) -> GiniMatrix:
    """Gini per (campaign, engine) over the whole window; groups without
    any citation are skipped and listed in ``skipped``."""
    records = list(dataset)
    groups = sorted({(r.campaign, r.engine) for r in records})
    tallies: dict = {g: Counter() for g in groups}
    for r in records:
        c = tallies[(r.campaign, r.engine)]
        for url in r.citations:
            dom = normalize_url(url)
            if dom:
                c[dom] += 1
    cells, skipped = {}, []
    for g in groups:
        if sum(tallies[g].values()) == 0:
            logger.warning("no citations for %s / %s; Gini undefined", g[0].name, g[1].name)
            skipped.append(g)
            continue
        cells[g] = gini(tallies[g])
    return GiniMatrix(cells, skipped)
