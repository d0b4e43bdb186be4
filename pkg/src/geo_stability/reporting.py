"""Aggregation of pair scores into summary tables and their rendering."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Sequence

import numpy as np

from . import svg
from .model import EXCLUDED, GroupKey, PairScore

logger = logging.getLogger(__name__)

__all__ = [
    "AggregateRow",
    "PromptRow",
    "aggregate",
    "per_prompt_breakdown",
    "render_report",
    "parse_rows_csv",
    "render_pairs_csv",
    "SCHEMA_VERSION",
]

SCHEMA_VERSION = 1
SCOPES = ("campaign", "engine", "prompt", "all")
REFERENCE_JACCARD = 0.5


@dataclass(frozen=True)
class AggregateRow:
    scope: str
    label: str
    kind: str
    population: str
    pair_count: int
    excluded_count: int
    max_runs: int
    jaccard_mean: "float | None"
    jaccard_sd: "float | None"
    rbo_mean: "float | None"
    rbo_sd: "float | None"
    jaccard_min: "float | None" = None
    jaccard_q1: "float | None" = None
    jaccard_median: "float | None" = None
    jaccard_q3: "float | None" = None
    jaccard_max: "float | None" = None
    rbo_min: "float | None" = None
    rbo_q1: "float | None" = None
    rbo_median: "float | None" = None
    rbo_q3: "float | None" = None
    rbo_max: "float | None" = None
    degenerate: bool = False

    def box(self, metric: str) -> dict:
        return {s: getattr(self, f"{metric}_{s}") for s in ("min", "q1", "median", "q3", "max")}


_FIELDS = [f.name for f in fields(AggregateRow)]
_FLOAT_FIELDS = {f.name for f in fields(AggregateRow) if "float" in str(f.type)}
_INT_FIELDS = {"pair_count", "excluded_count", "max_runs"}


def _scope_label(key: GroupKey, scope: str) -> tuple:
    if scope == "campaign":
        return (key.campaign.display_name,)
    if scope == "engine":
        return (key.engine.display_name,)
    if scope == "prompt":
        return (key.campaign.display_name, key.prompt.index)
    if scope == "all":
        return ("all",)
    raise ValueError(f"unknown scope {scope!r}")


def _format_label(parts: tuple) -> str:
    return " / prompt ".join(str(p) for p in parts)


def _stats(values: list[float]) -> dict:
    if not values:
        return dict.fromkeys(("mean", "sd", "min", "q1", "median", "q3", "max"))
    # sorted so the result does not depend on input order, down to the last bit
    arr = np.sort(np.asarray(values, dtype=float))
    q1, med, q3 = np.quantile(arr, [0.25, 0.5, 0.75])
    return {
        "mean": math.fsum(values) / len(values),
        "sd": float(arr.std(ddof=1)) if len(values) > 1 else 0.0,
        "min": float(arr.min()),
        "q1": float(q1),
        "median": float(med),
        "q3": float(q3),
        "max": float(arr.max()),
    }


def aggregate(
    scores: Iterable[tuple[GroupKey, PairScore]],
    scope: str = "campaign",
    population: str = "simultaneous",
) -> list[AggregateRow]:
    """Summarise pair scores per scope value.

    Excluded pairs only increase ``excluded_count``. SDs use the n-1
    denominator; a single pair reports SD 0 and ``degenerate=True``.
    """
    if scope not in SCOPES:
        raise ValueError(f"unknown scope {scope!r}")
    buckets: dict[tuple, dict] = {}
    last = None
    for key, score in scores:
        # pairs of one group arrive together and share their key object
        if key is not last:
            last = key
            bkey = (key.kind.value,) + _scope_label(key, scope)
            b = buckets.setdefault(bkey, {"j": [], "r": [], "excl": 0, "runs": {}})
            runs = b["runs"].setdefault((key.campaign, key.engine, key.prompt), set())
        runs.update(score.runs)
        if score.excluded:
            b["excl"] += 1
            continue
        b["j"].append(float(score.jaccard))
        b["r"].append(float(score.rbo))
    rows = []
    for bkey in sorted(buckets):
        b = buckets[bkey]
        js, rs = _stats(b["j"]), _stats(b["r"])
        n = len(b["j"])
        rows.append(AggregateRow(
            scope=scope, label=_format_label(bkey[1:]), kind=bkey[0], population=population,
            pair_count=n, excluded_count=b["excl"],
            max_runs=max((len(v) for v in b["runs"].values()), default=0),
            jaccard_mean=js["mean"], jaccard_sd=js["sd"], rbo_mean=rs["mean"], rbo_sd=rs["sd"],
            jaccard_min=js["min"], jaccard_q1=js["q1"], jaccard_median=js["median"],
            jaccard_q3=js["q3"], jaccard_max=js["max"],
            rbo_min=rs["min"], rbo_q1=rs["q1"], rbo_median=rs["median"], rbo_q3=rs["q3"], rbo_max=rs["max"],
            degenerate=n == 1,
        ))
    return rows


@dataclass(frozen=True)
class PromptRow:
    campaign: str
    prompt_index: int
    kind: str
    pair_count: int
    jaccard_mean: float
    rbo_mean: float

    @property
    def above_reference(self) -> bool:
        return self.jaccard_mean >= REFERENCE_JACCARD


def per_prompt_breakdown(scores: Iterable[tuple[GroupKey, PairScore]]) -> list[PromptRow]:
    """Mean Jaccard and RBO per (campaign, prompt, kind), ascending by Jaccard.

    Prompts whose pairs are all excluded are omitted with a warning.
    """
    buckets: dict[tuple, list[PairScore]] = {}
    for key, score in scores:
        buckets.setdefault((key.campaign.display_name, key.prompt.index, key.kind.value), []).append(score)
    rows = []
    for (campaign, index, kind), ss in buckets.items():
        valid = [s for s in ss if not s.excluded]
        if not valid:
            logger.warning("prompt %s/%d (%s): all pairs excluded; omitted", campaign, index, kind)
            continue
        rows.append(PromptRow(
            campaign, index, kind, len(valid),
            math.fsum(s.jaccard for s in valid) / len(valid),
            math.fsum(s.rbo for s in valid) / len(valid),
        ))
    rows.sort(key=lambda r: (r.kind, r.campaign, r.jaccard_mean, r.prompt_index))
    return rows


def _fmt(value) -> str:
    if value is None or value is EXCLUDED:
        return "excluded"
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _json_value(value):
    if value is None or value is EXCLUDED:
        return "excluded"
    return value


def _rows_csv(rows: Sequence[AggregateRow]) -> str:
    buf = io.StringIO()
    buf.write(f"# schema_version: {SCHEMA_VERSION}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_FIELDS)
    for row in rows:
        w.writerow([_fmt(getattr(row, f)) for f in _FIELDS])
    return buf.getvalue()


def parse_rows_csv(text: str) -> list[AggregateRow]:
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    out = []
    for rec in csv.DictReader(lines):
        kw = {}
        for name in _FIELDS:
            raw = rec[name]
            if name in _INT_FIELDS:
                kw[name] = int(raw)
            elif name in _FLOAT_FIELDS:
                kw[name] = None if raw == "excluded" else float(raw)
            elif name == "degenerate":
                kw[name] = raw == "true"
            else:
                kw[name] = raw
        out.append(AggregateRow(**kw))
    return out


def _rows_markdown(rows: Sequence[AggregateRow]) -> str:
    if not rows:
        return ""
    head = rows[0]
    title = f"{head.population.capitalize()} {head.kind} similarity by {head.scope}"
    lines = [f"**{title}**", ""]
    lines.append(f"| {head.scope.capitalize()} | Pairs | Max Runs | Jac. Mean | Jac. SD | RBO Mean | RBO SD |")
    lines.append("|---|---:|---:|---:|---:|---:|---:|")

    def f3(v):
        return "n/a" if v is None else f"{v:.3f}"

    for r in rows:
        lines.append(
            f"| {r.label} | {r.pair_count:,} | {r.max_runs} | {f3(r.jaccard_mean)} | {f3(r.jaccard_sd)} "
            f"| {f3(r.rbo_mean)} | {f3(r.rbo_sd)} |"
        )
    total = sum(r.pair_count for r in rows)
    excl = sum(r.excluded_count for r in rows)
    lines += ["", f"Note: {total:,} pairs entered the means; {excl:,} both-empty pairs excluded."]
    return "\n".join(lines) + "\n"


def _rows_svg(rows: Sequence[AggregateRow]) -> str:
    rows = [r for r in rows if r.pair_count > 0]
    if not rows:
        raise ValueError("box plots need at least one row with pairs")
    panels = [
        ("Jaccard", [(r.label, r.box("jaccard")) for r in rows]),
        ("RBO", [(r.label, r.box("rbo")) for r in rows]),
    ]
    return svg.box_plots(panels)


def render_report(rows: Sequence[AggregateRow], format: str = "csv") -> bytes:
    """Serialize aggregate rows as csv, json, markdown or svg."""
    if format == "csv":
        text = _rows_csv(rows)
    elif format == "json":
        doc = {"schema_version": SCHEMA_VERSION,
               "rows": [{k: _json_value(v) for k, v in asdict(r).items()} for r in rows]}
        text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    elif format in ("markdown", "md"):
        text = _rows_markdown(rows)
    elif format == "svg":
        text = _rows_svg(rows)
    else:
        raise ValueError(f"unknown report format {format!r}")
    return text.encode("utf-8")


def render_prompt_rows(rows: Sequence[PromptRow], format: str = "csv") -> bytes:
    if format == "csv":
        lines = [f"# schema_version: {SCHEMA_VERSION}",
                 "campaign,prompt_index,kind,pair_count,jaccard_mean,rbo_mean,above_reference"]
        for r in rows:
            lines.append(",".join([
                _csv_quote(r.campaign), str(r.prompt_index), r.kind, str(r.pair_count),
                repr(r.jaccard_mean), repr(r.rbo_mean), _fmt(r.above_reference),
            ]))
        return ("\n".join(lines) + "\n").encode("utf-8")
    if format == "svg":
        panels: dict[str, list] = {}
        for r in rows:
            panels.setdefault(f"{r.campaign} ({r.kind})", []).append((f"P{r.prompt_index}", r.jaccard_mean, r.rbo_mean))
        return svg.bar_panels(list(panels.items()), reference=REFERENCE_JACCARD).encode("utf-8")
    raise ValueError(f"unknown format {format!r}")


def _csv_quote(text: str) -> str:
    if any(ch in text for ch in ',"\n'):
        return '"' + text.replace('"', '""') + '"'
    return text


def render_pairs_csv(scores: Iterable[tuple[GroupKey, PairScore]]) -> bytes:
    """Pair-level scores; excluded values are written as ``excluded``."""
    buf = io.StringIO()
    buf.write(f"# schema_version: {SCHEMA_VERSION}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["campaign", "engine", "prompt_index", "kind", "run1", "run2", "delta_seconds", "jaccard", "rbo"])
    for key, s in scores:
        w.writerow([key.campaign.name, key.engine.name, key.prompt.index, key.kind.value,
                    s.runs[0], s.runs[1], int(s.delta_t.total_seconds()), _fmt(s.jaccard), _fmt(s.rbo)])
    return buf.getvalue().encode("utf-8")

