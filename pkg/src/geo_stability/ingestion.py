"""Log parsing, URL normalization and data-quality filters."""
from __future__ import annotations

import io
import json
import logging
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from functools import lru_cache
from datetime import date, datetime, timezone
from pathlib import Path
from typing import IO, Iterable, Mapping, Sequence
from urllib.parse import urlsplit

import yaml

from .model import CampaignId, EngineId, PromptId, ResponseRecord

logger = logging.getLogger(__name__)

__all__ = [
    "LineError",
    "ParseResult",
    "parse_log",
    "read_logs",
    "write_log",
    "normalize_url",
    "IngestConfig",
    "FilteredDataset",
    "apply_filters",
    "coverage_table",
    "CoverageTable",
]

REQUIRED_FIELDS = ("engine", "campaign", "prompt_index", "timestamp")


@dataclass(frozen=True)
class LineError:
    line_no: int
    message: str


@dataclass
class ParseResult:
    records: list[ResponseRecord]
    errors: list[LineError]

    def __iter__(self):
        return iter((self.records, self.errors))


def parse_timestamp(value) -> datetime:
    if isinstance(value, datetime):
        ts = value
    else:
        text = str(value).strip()
        if text.endswith(("Z", "z")):
            text = text[:-1] + "+00:00"
        ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc).replace(microsecond=0)


def record_from_dict(obj: Mapping) -> tuple[ResponseRecord, bool]:
    if not isinstance(obj, Mapping):
        raise ValueError("line is not a JSON object")
    missing = [k for k in REQUIRED_FIELDS if k not in obj]
    if missing:
        raise ValueError(f"missing field(s): {', '.join(missing)}")
    citations = obj.get("citations") or []
    if not isinstance(citations, list) or not all(isinstance(c, str) for c in citations):
        raise ValueError("citations must be an array of strings")
    answer = obj.get("answer_text") or ""
    if not isinstance(answer, str):
        raise ValueError("answer_text must be a string")
    index = obj["prompt_index"]
    if isinstance(index, bool) or not isinstance(index, int) or index < 1:
        raise ValueError("prompt_index must be an integer >= 1")
    run_index = obj.get("run_index")
    has_run = run_index is not None
    if has_run and (isinstance(run_index, bool) or not isinstance(run_index, int)):
        raise ValueError("run_index must be an integer")
    campaign = CampaignId(str(obj["campaign"]).strip())
    prompt = PromptId(campaign, index, str(obj.get("prompt_text") or ""))
    rec = ResponseRecord(
        engine=EngineId.parse(str(obj["engine"])),
        prompt=prompt,
        timestamp=parse_timestamp(obj["timestamp"]),
        run_index=run_index if has_run else 0,
        answer_text=answer,
        citations=tuple(citations),
    )
    return rec, has_run


def _assign_run_indices(records: list[ResponseRecord], explicit: list[bool]) -> list[ResponseRecord]:
    # missing run_index: order by timestamp within (engine, prompt, UTC day)
    pending = defaultdict(list)
    for pos, (rec, has) in enumerate(zip(records, explicit)):
        if not has:
            pending[(rec.engine, rec.prompt, rec.day)].append(pos)
    out = list(records)
    for positions in pending.values():
        positions.sort(key=lambda i: (records[i].timestamp, i))
        for rank, pos in enumerate(positions, start=1):
            r = records[pos]
            out[pos] = ResponseRecord(r.engine, r.prompt, r.timestamp, rank, r.answer_text, r.citations)
    return out


def parse_log(stream: "IO[bytes] | IO[str] | Iterable[str]") -> ParseResult:
    """Parse a line-delimited JSON response log.

    Malformed lines are collected as :class:`LineError` with their 1-based
    line number; blank lines are ignored.
    """
    records: list[ResponseRecord] = []
    explicit: list[bool] = []
    errors: list[LineError] = []
    for line_no, raw in enumerate(stream, start=1):
        if isinstance(raw, bytes):
            try:
                raw = raw.decode("utf-8")
            except UnicodeDecodeError as exc:
                errors.append(LineError(line_no, f"invalid UTF-8: {exc}"))
                continue
        line = raw.strip()
        if not line:
            continue
        try:
            rec, has_run = record_from_dict(json.loads(line))
        except (ValueError, TypeError) as exc:
            errors.append(LineError(line_no, str(exc)))
            continue
        records.append(rec)
        explicit.append(has_run)
    return ParseResult(_assign_run_indices(records, explicit), errors)


def read_logs(paths: Iterable["str | Path"]) -> ParseResult:
    """Parse several log files in order; error line numbers are per file."""
    records, errors = [], []
    for path in paths:
        with open(path, "rb") as fh:
            res = parse_log(fh)
        records.extend(res.records)
        errors.extend(LineError(e.line_no, f"{path}: {e.message}") for e in res.errors)
    return ParseResult(records, errors)


def write_log(records: Iterable[ResponseRecord], stream: IO[str]) -> int:
    n = 0
    for r in records:
        stream.write(json.dumps(r.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")
        n += 1
    return n


_SPACE_RE = re.compile(r"\s")
_HOST_RE = re.compile(r"^[a-z0-9]([a-z0-9-]*[a-z0-9])?(\.[a-z0-9]([a-z0-9-]*[a-z0-9])?)*$")


def normalize_url(url: str) -> "str | None":
    """Reduce a URL to its lower-case host without a leading ``www.``.

    Returns ``None`` when no plausible host can be found. Subdomains other
    than ``www`` are kept.
    """
    if not isinstance(url, str):
        return None
    return _normalize_url(url)


@lru_cache(maxsize=65536)
def _normalize_url(url: str) -> "str | None":
    text = url.strip()
    if not text or _SPACE_RE.search(text):
        return None
    if "://" not in text:
        text = "//" + text
    try:
        host = urlsplit(text).hostname
    except ValueError:
        return None
    if not host:
        return None
    host = host.rstrip(".")
    # "www.ch" stays as is: stripping would leave a bare TLD
    if host.startswith("www.") and "." in host[4:]:
        host = host[4:]
    if "." not in host or not _HOST_RE.match(host):
        return None
    return host


@dataclass(frozen=True)
class IngestConfig:
    start_date: "date | None" = None
    end_date: "date | None" = None
    excluded_dates: frozenset = frozenset()
    blocked_domains: frozenset = frozenset({"images.openai.com"})
    excluded_engines: frozenset = frozenset({"google-aio"})

    def __post_init__(self):
        if self.start_date and self.end_date and self.start_date > self.end_date:
            raise ValueError("date_window.start must not be after date_window.end")
        blocked = set()
        for d in self.blocked_domains:
            norm = normalize_url(d)
            if norm is None:
                raise ValueError(f"invalid blocked domain {d!r}")
            blocked.add(norm)
        object.__setattr__(self, "blocked_domains", frozenset(blocked))
        object.__setattr__(self, "excluded_dates", frozenset(_as_date(d) for d in self.excluded_dates))
        object.__setattr__(
            self, "excluded_engines", frozenset(EngineId.parse(e) for e in self.excluded_engines)
        )

    @classmethod
    def from_mapping(cls, data: Mapping | None, **overrides) -> "IngestConfig":
        """Build from a config document; ``None``-valued overrides are ignored.

        Keys may be nested (``date_window: {start, end}``) or dotted
        (``date_window.start``).
        """
        data = dict(data or {})
        window = data.get("date_window") or {}
        kwargs = {
            "start_date": data.get("date_window.start", window.get("start")),
            "end_date": data.get("date_window.end", window.get("end")),
        }
        for key in ("excluded_dates", "blocked_domains", "excluded_engines"):
            if key in data and data[key] is not None:
                kwargs[key] = frozenset(data[key])
        for key, value in overrides.items():
            if value is not None:
                kwargs[key] = value
        for key in ("start_date", "end_date"):
            if kwargs.get(key) is not None:
                kwargs[key] = _as_date(kwargs[key])
        return cls(**{k: v for k, v in kwargs.items() if v is not None})

    @classmethod
    def load(cls, path: "str | Path", **overrides) -> "IngestConfig":
        return cls.from_mapping(load_document(path), **overrides)

    def to_dict(self) -> dict:
        return {
            "date_window": {
                "start": self.start_date.isoformat() if self.start_date else None,
                "end": self.end_date.isoformat() if self.end_date else None,
            },
            "excluded_dates": sorted(d.isoformat() for d in self.excluded_dates),
            "blocked_domains": sorted(self.blocked_domains),
            "excluded_engines": sorted(e.name for e in self.excluded_engines),
        }


def _as_date(value) -> date:
    if isinstance(value, datetime):
        return value.date()
    if isinstance(value, date):
        return value
    return date.fromisoformat(str(value).strip())


def load_document(path: "str | Path") -> dict:
    """Load a JSON or YAML config document."""
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a mapping")
    return data


DROP_KEYS = ("date_window", "excluded_dates", "excluded_engines")


@dataclass(frozen=True)
class FilteredDataset:
    records: tuple[ResponseRecord, ...]
    drop_counts: Mapping[str, int] = field(default_factory=dict)
    config: IngestConfig = field(default_factory=IngestConfig)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def dropped_records(self) -> int:
        return sum(self.drop_counts.get(k, 0) for k in DROP_KEYS)


def _record_order(r: ResponseRecord):
    return (r.engine, r.prompt, r.timestamp, r.run_index)


def apply_filters(records: "Sequence[ResponseRecord] | FilteredDataset", cfg: IngestConfig | None = None) -> FilteredDataset:
    """Drop out-of-window, excluded-date and excluded-engine records, then
    strip blocked-domain and unparsable citations from the survivors.

    Record-level drops are attributed to the first matching rule in the order
    engine, date window, excluded date. Output is sorted by
    (engine, prompt, timestamp, run_index).
    """
    cfg = cfg or IngestConfig()
    if isinstance(records, FilteredDataset):
        records = records.records
    counts = Counter({k: 0 for k in DROP_KEYS})
    counts["blocked_domain_citations"] = 0
    counts["malformed_citations"] = 0
    kept = []
    for r in records:
        if r.engine in cfg.excluded_engines:
            counts["excluded_engines"] += 1
            continue
        day = r.day
        if (cfg.start_date and day < cfg.start_date) or (cfg.end_date and day > cfg.end_date):
            counts["date_window"] += 1
            continue
        if day in cfg.excluded_dates:
            counts["excluded_dates"] += 1
            continue
        citations = []
        for url in r.citations:
            dom = normalize_url(url)
            if dom is None:
                counts["malformed_citations"] += 1
            elif dom in cfg.blocked_domains:
                counts["blocked_domain_citations"] += 1
            else:
                citations.append(url)
        if len(citations) != len(r.citations):
            r = r.replace_citations(citations)
        kept.append(r)
    kept.sort(key=_record_order)
    return FilteredDataset(tuple(kept), dict(counts), cfg)


@dataclass
class CoverageTable:
    """Distinct collection days per (campaign, engine)."""

    cells: dict[tuple[CampaignId, EngineId], int]
    queries: dict[CampaignId, int]
    days: dict[CampaignId, int]

    @property
    def engines(self) -> list[EngineId]:
        return sorted({e for _, e in self.cells})

    @property
    def campaigns(self) -> list[CampaignId]:
        return sorted(self.queries)

    def __len__(self):
        return len(self.cells)

    def to_csv(self) -> str:
        engines = self.engines
        buf = io.StringIO()
        buf.write("# schema_version: 1\n")
        buf.write(",".join(["campaign", "queries", "days"] + [e.display_name for e in engines]) + "\n")
        for c in self.campaigns:
            row = [_csv_field(c.display_name), str(self.queries[c]), str(self.days[c])]
            row += [str(self.cells.get((c, e), 0)) for e in engines]
            buf.write(",".join(row) + "\n")
        return buf.getvalue()


def _csv_field(text: str) -> str:
    if any(ch in text for ch in ',"\n'):
        return '"' + text.replace('"', '""') + '"'
    return text


def coverage_table(dataset: "FilteredDataset | Sequence[ResponseRecord]") -> CoverageTable:
    days = defaultdict(set)
    campaign_days = defaultdict(set)
    prompts = defaultdict(set)
    for r in dataset:
        days[(r.campaign, r.engine)].add(r.day)
        campaign_days[r.campaign].add(r.day)
        prompts[r.campaign].add(r.prompt.index)
    return CoverageTable(
        cells={k: len(v) for k, v in days.items()},
        queries={c: len(v) for c, v in prompts.items()},
        days={c: len(v) for c, v in campaign_days.items()},
    )
