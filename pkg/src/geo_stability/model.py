"""Domain types shared by every stage of the pipeline.

All types are frozen dataclasses so they can be shared freely between
worker threads.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Iterable, Iterator, Sequence

__all__ = [
    "EXCLUDED",
    "Excluded",
    "EngineId",
    "CampaignId",
    "PromptId",
    "ResponseRecord",
    "RboParams",
    "PairScore",
    "GroupKey",
    "Kind",
    "item_set",
    "ranked_list",
    "validate_record",
    "validate_records",
]


class Excluded:
    """Marker for a similarity value removed by the both-empty policy."""

    _instance: "Excluded | None" = None

    def __new__(cls) -> "Excluded":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "EXCLUDED"

    def __str__(self) -> str:
        return "excluded"

    def __bool__(self) -> bool:
        return False

    def __reduce__(self):
        return (Excluded, ())


EXCLUDED = Excluded()


class Kind(str, enum.Enum):
    SOURCE = "source"
    BRAND = "brand"

    @classmethod
    def parse(cls, value: "Kind | str") -> "Kind":
        if isinstance(value, Kind):
            return value
        return cls(str(value).strip().lower())


_KNOWN_ENGINES = {
    "chatgpt": "ChatGPT",
    "gemini": "Gemini",
    "googleaimode": "GoogleAIMode",
    "perplexity": "Perplexity",
    "simulated": "Simulated",
}

_ENGINE_DISPLAY = {
    "ChatGPT": "ChatGPT",
    "Gemini": "Gemini",
    "GoogleAIMode": "Google AI Mode",
    "Perplexity": "Perplexity",
    "Simulated": "Simulated",
}

_AIO_ALIASES = {"googleaio", "googleaioverviews", "googleaioverview", "aio"}


def _squash(label: str) -> str:
    return "".join(ch for ch in label.lower() if ch.isalnum())


@dataclass(frozen=True, order=True)
class EngineId:
    """An AI search engine label.

    Known engines are stored under their canonical label; anything else is an
    ``Other`` engine keyed by its lower-cased label. Google AI Overviews is
    always represented as ``Other("google-aio")``.
    """

    name: str
    other: bool = False

    @classmethod
    def parse(cls, label: "str | EngineId") -> "EngineId":
        if isinstance(label, EngineId):
            return label
        text = str(label).strip()
        if not text:
            raise ValueError("engine label must be non-empty")
        key = _squash(text)
        if key in _KNOWN_ENGINES:
            return cls(_KNOWN_ENGINES[key])
        if key in _AIO_ALIASES:
            return cls("google-aio", other=True)
        return cls(text.lower(), other=True)

    @property
    def label(self) -> str:
        return self.name

    @property
    def display_name(self) -> str:
        return _ENGINE_DISPLAY.get(self.name, self.name)

    def matches(self, label: "str | EngineId") -> bool:
        """Case-insensitive comparison against another label."""
        try:
            return EngineId.parse(label) == self
        except ValueError:
            return False

    def __str__(self) -> str:
        return self.name


GOOGLE_AIO = EngineId("google-aio", other=True)

# German source labels of the four study campaigns, mapped to English names.
KNOWN_CAMPAIGNS = {
    "telekom": "Telecommunications",
    "immobilienverkauf": "Real Estate Sales",
    "sportartikel": "Sporting Goods",
    "elektronik": "Consumer Electronics",
}


@dataclass(frozen=True, order=True)
class CampaignId:
    name: str
    display_name: str = field(default="", compare=False)

    def __post_init__(self):
        if not self.name or not self.name.strip():
            raise ValueError("campaign name must be non-empty")
        if not self.display_name:
            display = KNOWN_CAMPAIGNS.get(self.name.strip().lower(), self.name)
            object.__setattr__(self, "display_name", display)

    def matches(self, label: str) -> bool:
        low = label.strip().lower()
        return low in (self.name.lower(), self.display_name.lower())

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True, order=True)
class PromptId:
    campaign: CampaignId
    index: int
    text: str = field(default="", compare=False)


@dataclass(frozen=True)
class ResponseRecord:
    """One engine answer to one prompt at one instant.

    ``citations`` keeps the engine's emission order; position 0 is rank 1.
    """

    engine: EngineId
    prompt: PromptId
    timestamp: datetime
    run_index: int
    answer_text: str = ""
    citations: tuple[str, ...] = ()

    def __post_init__(self):
        if not isinstance(self.citations, tuple):
            object.__setattr__(self, "citations", tuple(self.citations))
        ts = self.timestamp
        if isinstance(ts, datetime) and ts.tzinfo is not None and ts.utcoffset() != timedelta(0):
            object.__setattr__(self, "timestamp", ts.astimezone(timezone.utc))

    @property
    def campaign(self) -> CampaignId:
        return self.prompt.campaign

    @property
    def day(self):
        return self.timestamp.date()

    @property
    def identity(self) -> tuple:
        return (self.engine, self.prompt, self.timestamp, self.run_index)

    def replace_citations(self, citations: Iterable[str]) -> "ResponseRecord":
        return ResponseRecord(
            self.engine, self.prompt, self.timestamp, self.run_index,
            self.answer_text, tuple(citations),
        )

    def to_dict(self) -> dict:
        return {
            "engine": self.engine.name,
            "campaign": self.prompt.campaign.name,
            "prompt_index": self.prompt.index,
            "prompt_text": self.prompt.text,
            "timestamp": format_timestamp(self.timestamp),
            "run_index": self.run_index,
            "answer_text": self.answer_text,
            "citations": list(self.citations),
        }


def format_timestamp(ts: datetime) -> str:
    ts = ts.astimezone(timezone.utc) if ts.tzinfo else ts
    return ts.replace(tzinfo=None, microsecond=0).isoformat() + "Z"


def item_set(items: Iterable[str]) -> frozenset[str]:
    """Unordered view: duplicates and empty strings dropped."""
    return frozenset(x for x in items if x)


def ranked_list(items: Iterable[str]) -> tuple[str, ...]:
    """Ordered-unique view: the first occurrence of an item keeps its rank."""
    seen: set[str] = set()
    out = []
    for x in items:
        if x and x not in seen:
            seen.add(x)
            out.append(x)
    return tuple(out)


@dataclass(frozen=True)
class RboParams:
    p: float = 0.9
    # reserved; only the non-extrapolated minimum bound is implemented
    variant: str = "min"

    def __post_init__(self):
        if not (0.0 < self.p < 1.0) or math.isnan(self.p):
            raise ValueError(f"RBO persistence p must lie in (0, 1), got {self.p}")
        if self.variant != "min":
            raise ValueError(f"unsupported RBO variant {self.variant!r}")


@dataclass(frozen=True)
class PairScore:
    jaccard: "float | Excluded"
    rbo: "float | Excluded"
    delta_t: timedelta = timedelta(0)
    runs: tuple[int, int] = (0, 0)

    def __post_init__(self):
        if (self.jaccard is EXCLUDED) != (self.rbo is EXCLUDED):
            raise ValueError("jaccard and rbo must be excluded together")

    @property
    def excluded(self) -> bool:
        return self.jaccard is EXCLUDED


@dataclass(frozen=True, order=True)
class GroupKey:
    campaign: CampaignId
    engine: EngineId
    prompt: PromptId
    kind: Kind = Kind.SOURCE


def _violations(record: ResponseRecord) -> list[str]:
    out = []
    ts = record.timestamp
    if not isinstance(ts, datetime):
        out.append("timestamp is not a datetime")
    elif ts.tzinfo is None or ts.utcoffset() != timedelta(0):
        out.append("timestamp is not UTC")
    if not isinstance(record.run_index, int) or record.run_index < 1:
        out.append("run_index < 1")
    if not isinstance(record.engine, EngineId) or not record.engine.name:
        out.append("empty engine label")
    if record.prompt.index < 1:
        out.append("prompt index < 1")
    return out


def validate_record(record: ResponseRecord, seen: "set | None" = None) -> list[str]:
    """Return the violations of ``record``; an empty list means valid.

    Pass the same ``seen`` set across calls to detect duplicate
    (engine, prompt, timestamp, run_index) identities. Never raises.
    """
    try:
        out = _violations(record)
    except Exception as exc:  # a malformed object is reported, not raised
        return [f"malformed record: {exc}"]
    if seen is not None:
        key = record.identity
        if key in seen:
            out.append("duplicate (engine, prompt, timestamp, run_index)")
        else:
            seen.add(key)
    return out


def validate_records(records: Sequence[ResponseRecord]) -> dict[int, list[str]]:
    """Map record position to its violations, omitting valid records."""
    seen: set = set()
    report = {}
    for i, rec in enumerate(records):
        v = validate_record(rec, seen)
        if v:
            report[i] = v
    return report


def iter_groups(records: Iterable[ResponseRecord]) -> Iterator[tuple[tuple, list[ResponseRecord]]]:
    """Yield ((campaign, engine, prompt), records) sorted by key then time."""
    groups: dict[tuple, list[ResponseRecord]] = {}
    for r in records:
        groups.setdefault((r.prompt.campaign, r.engine, r.prompt), []).append(r)
    for key in sorted(groups):
        yield key, sorted(groups[key], key=lambda r: (r.timestamp, r.run_index))
