"""Prompt-batch collection through pluggable engine adapters, plus a seeded
simulated engine with known ground truth."""
from __future__ import annotations

import json
import logging
import threading
import time
import urllib.error
import urllib.request
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from importlib import resources
from typing import IO, Callable, Mapping, Protocol, Sequence

from .convergence import derive_seed
from .ingestion import parse_timestamp, write_log
from .model import CampaignId, EngineId, PromptId, ResponseRecord

logger = logging.getLogger(__name__)

__all__ = [
    "AdapterError",
    "AdapterResponse",
    "EngineAdapter",
    "SimulatedEngineConfig",
    "SimulatedAdapter",
    "simulate_response",
    "HttpAdapter",
    "EchoServer",
    "CollectionPlan",
    "CollectionSummary",
    "run_plan",
    "SimulatedClock",
    "load_prompts",
    "simulate_study",
]

_MASK = (1 << 64) - 1


class AdapterError(Exception):
    """Transport or protocol failure of one adapter call."""


@dataclass(frozen=True)
class AdapterResponse:
    answer_text: str
    citations: tuple[str, ...] = ()


class EngineAdapter(Protocol):
    def query(self, prompt: str, locale: "Mapping | None" = None) -> AdapterResponse: ...


class _Stream:
    """Scalar SplitMix64 stream; same outputs as ``convergence.splitmix64``."""

    def __init__(self, seed: int):
        self.seed = seed & _MASK
        self.counter = 0

    def next_u64(self) -> int:
        z = (self.seed + (self.counter + 1) * 0x9E3779B97F4A7C15) & _MASK
        self.counter += 1
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def unit(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)

    def below(self, m: int) -> int:
        return int(self.unit() * m)


@dataclass(frozen=True)
class SimulatedEngineConfig:
    seed: int = 0
    domain_pool: Sequence[tuple[str, float]] = (("example.com", 1.0),)
    brand_pool: Sequence[tuple[str, float]] = ()
    citations_per_answer: tuple[int, int] = (3, 8)
    answer_template: str = "Zu '{prompt}' empfehlen wir: {brands}."
    empty_template: str = "Zu '{prompt}' gibt es keine eindeutige Empfehlung."

    def __post_init__(self):
        if any(w <= 0 for _, w in self.domain_pool):
            raise ValueError("domain weights must be positive")
        if any(not 0.0 <= p <= 1.0 for _, p in self.brand_pool):
            raise ValueError("brand inclusion probabilities must lie in [0, 1]")
        lo, hi = self.citations_per_answer
        if lo < 0 or hi < lo:
            raise ValueError("citations_per_answer must be a non-empty range")


def simulate_response(cfg: SimulatedEngineConfig, prompt: PromptId, draw_index: int) -> tuple[str, tuple[str, ...]]:
    """Deterministic (answer_text, citations) for one simulated call.

    Draw order: citation count, then one draw per picked domain (weighted,
    without replacement), then one inclusion draw per brand, then one
    ordering draw per included brand.
    """
    rng = _Stream(derive_seed(cfg.seed, prompt.campaign.name, prompt.index, draw_index))
    lo, hi = cfg.citations_per_answer
    k = lo + rng.below(hi - lo + 1)
    pool = list(cfg.domain_pool)
    k = min(k, len(pool))
    picked = []
    for _ in range(k):
        total = sum(w for _, w in pool)
        target = rng.unit() * total
        acc = 0.0
        for i, (dom, w) in enumerate(pool):
            acc += w
            if target < acc or i == len(pool) - 1:
                picked.append(dom)
                del pool[i]
                break
    included = [b for b, p in cfg.brand_pool if rng.unit() < p]
    order = sorted((rng.unit(), b) for b in included)
    brands = [b for _, b in order]
    if brands:
        text = cfg.answer_template.format(prompt=prompt.text, brands=", ".join(brands))
    else:
        text = cfg.empty_template.format(prompt=prompt.text)
    citations = tuple(f"https://{dom}/{prompt.campaign.name.lower()}/p{prompt.index}-{draw_index}" for dom in picked)
    return text, citations


class SimulatedAdapter:
    """Adapter over :func:`simulate_response`.

    Session state: a call counter per prompt, used as the draw index. The
    prompt identity is taken from the ``campaign``/``prompt_index`` hints.
    """

    def __init__(self, cfg: SimulatedEngineConfig):
        self.cfg = cfg
        self._calls: Counter = Counter()
        self._lock = threading.Lock()

    def query(self, prompt: str, locale: "Mapping | None" = None) -> AdapterResponse:
        hints = dict(locale or {})
        pid = hints.get("prompt")
        if not isinstance(pid, PromptId):
            pid = PromptId(CampaignId(str(hints.get("campaign", "simulated"))), int(hints.get("prompt_index", 1)), prompt)
        with self._lock:
            draw = self._calls[pid]
            self._calls[pid] += 1
        text, cites = simulate_response(self.cfg, pid, draw)
        return AdapterResponse(text, cites)


class HttpAdapter:
    """POSTs ``{"prompt": ...}`` as JSON and expects ``{answer_text, citations}``."""

    def __init__(self, url: str, timeout: float = 10.0):
        self.url = url
        self.timeout = timeout

    def query(self, prompt: str, locale: "Mapping | None" = None) -> AdapterResponse:
        body = json.dumps({"prompt": prompt}).encode("utf-8")
        req = urllib.request.Request(self.url, data=body, method="POST",
                                     headers={"Content-Type": "application/json"})
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                payload = json.loads(resp.read().decode("utf-8"))
        except (urllib.error.URLError, OSError, ValueError) as exc:
            raise AdapterError(f"{self.url}: {exc}") from exc
        if not isinstance(payload, dict) or not isinstance(payload.get("answer_text", ""), str):
            raise AdapterError(f"{self.url}: malformed response body")
        cites = payload.get("citations") or []
        if not isinstance(cites, list) or not all(isinstance(c, str) for c in cites):
            raise AdapterError(f"{self.url}: citations must be a list of strings")
        return AdapterResponse(payload.get("answer_text", ""), tuple(cites))


class EchoServer:
    """Loopback HTTP/1.1 server used to exercise :class:`HttpAdapter`.

    ``responder(prompt) -> (answer_text, citations)``; raising inside the
    responder yields HTTP 500.
    """

    def __init__(self, responder: "Callable[[str], tuple[str, list[str]]] | None" = None, host: str = "127.0.0.1"):
        self.responder = responder or (lambda p: (f"echo: {p}", [f"https://echo.example.com/{len(p)}"]))
        outer = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                try:
                    prompt = json.loads(self.rfile.read(length))["prompt"]
                    answer, cites = outer.responder(prompt)
                    body, status = json.dumps({"answer_text": answer, "citations": list(cites)}).encode(), 200
                except Exception as exc:
                    body, status = json.dumps({"error": str(exc)}).encode(), 500
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def log_message(self, *args):
                pass

        self.server = ThreadingHTTPServer((host, 0), Handler)
        self._thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        host, port = self.server.server_address[:2]
        return f"http://{host}:{port}/"

    def __enter__(self):
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self.server.shutdown()
        self.server.server_close()


@dataclass(frozen=True)
class CollectionPlan:
    prompts: Sequence[PromptId]
    engines: Sequence[EngineId]
    reps_per_prompt: int = 10
    inter_call_delay: float = 0.0
    max_retries: int = 2

    def __post_init__(self):
        if self.reps_per_prompt < 1:
            raise ValueError("reps_per_prompt must be >= 1")
        if self.inter_call_delay < 0:
            raise ValueError("inter_call_delay must be >= 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")

    @property
    def size(self) -> int:
        return len(self.prompts) * len(self.engines) * self.reps_per_prompt


@dataclass
class Failure:
    engine: str
    campaign: str
    prompt_index: int
    rep: int
    attempts: int
    reason: str


@dataclass
class CollectionSummary:
    successes: Counter = field(default_factory=Counter)
    failures: Counter = field(default_factory=Counter)
    failure_log: list[Failure] = field(default_factory=list)

    @property
    def total_successes(self) -> int:
        return sum(self.successes.values())

    @property
    def total_failures(self) -> int:
        return sum(self.failures.values())


class SimulatedClock:
    """Returns ``start``, ``start + step``, ... on successive calls."""

    def __init__(self, start: datetime, step: timedelta = timedelta(minutes=1)):
        self.current = start.astimezone(timezone.utc)
        self.step = step
        self._lock = threading.Lock()

    def __call__(self) -> datetime:
        with self._lock:
            now = self.current
            self.current = now + self.step
        return now


def _utc_now() -> datetime:
    return datetime.now(timezone.utc).replace(microsecond=0)


def run_plan(
    plan: CollectionPlan,
    adapters: Mapping[EngineId, EngineAdapter],
    sink: IO[str],
    clock: Callable[[], datetime] = _utc_now,
    sleep: Callable[[float], None] = time.sleep,
    concurrent: bool = False,
) -> CollectionSummary:
    """Execute prompts x engines x reps and append successful records to ``sink``.

    Each call is retried up to ``max_retries`` times. Calls to one adapter are
    serialized with ``inter_call_delay``; with ``concurrent=True`` distinct
    adapters run in parallel and the file order becomes completion order.
    """
    missing = [e for e in plan.engines if e not in adapters]
    if missing:
        raise ValueError(f"no adapter for engine(s): {', '.join(map(str, missing))}")
    summary = CollectionSummary()
    lock = threading.Lock()

    def run_engine(engine: EngineId):
        adapter = adapters[engine]
        first = True
        for prompt in plan.prompts:
            for rep in range(1, plan.reps_per_prompt + 1):
                hints = {"prompt": prompt, "campaign": prompt.campaign.name, "prompt_index": prompt.index}
                reason = ""
                for attempt in range(1, plan.max_retries + 2):
                    if not first and plan.inter_call_delay:
                        sleep(plan.inter_call_delay)
                    first = False
                    try:
                        resp = adapter.query(prompt.text, hints)
                    except AdapterError as exc:
                        reason = str(exc)
                        logger.info("%s attempt %d failed: %s", engine, attempt, reason)
                        continue
                    rec = ResponseRecord(engine, prompt, clock(), rep, resp.answer_text, resp.citations)
                    with lock:
                        write_log([rec], sink)
                        summary.successes[engine.name] += 1
                    break
                else:
                    with lock:
                        summary.failures[engine.name] += 1
                        summary.failure_log.append(
                            Failure(engine.name, prompt.campaign.name, prompt.index, rep, plan.max_retries + 1, reason)
                        )
                    logger.warning("%s %s/%d rep %d failed after %d attempts: %s", engine, prompt.campaign.name,
                                   prompt.index, rep, plan.max_retries + 1, reason)

    if concurrent and len(plan.engines) > 1:
        with ThreadPoolExecutor(max_workers=len(plan.engines)) as pool:
            for fut in [pool.submit(run_engine, e) for e in plan.engines]:
                fut.result()
    else:
        for e in plan.engines:
            run_engine(e)
    return summary


def load_prompts(doc: "Mapping | None" = None, campaigns: "Sequence[str] | None" = None) -> list[PromptId]:
    """Prompts from ``{campaign: [text, ...]}``; defaults to the bundled set.

    Prompt indices are 1-based positions in each campaign's list.
    """
    if doc is None:
        doc = json.loads(resources.files("geo_stability.data").joinpath("prompts.json").read_text("utf-8"))
    out = []
    for name, texts in doc.items():
        cid = CampaignId(name)
        if campaigns is not None and not any(cid.matches(c) for c in campaigns):
            continue
        out.extend(PromptId(cid, i, str(t)) for i, t in enumerate(texts, start=1))
    return out


def _pairs(value) -> list[tuple[str, float]]:
    if isinstance(value, Mapping):
        return [(str(k), float(v)) for k, v in value.items()]
    return [(str(k), float(v)) for k, v in value]


def simulate_study(settings: Mapping, seed: int, sink: IO[str]) -> CollectionSummary:
    """Write a synthetic dataset described by ``settings`` to ``sink``.

    Each (engine, campaign) pair gets its own simulator seeded from
    ``(seed, engine, campaign)``; the plan is repeated once per day with a
    simulated clock, so the output depends only on ``settings`` and ``seed``.
    """
    start = parse_timestamp(settings.get("start", "2026-03-21T08:00:00Z"))
    step = timedelta(seconds=float(settings.get("step_seconds", 60)))
    days = int(settings.get("days", 1))
    reps = int(settings.get("reps_per_prompt", 10))
    lo, hi = settings.get("citations_per_answer", (3, 8))
    engines = [EngineId.parse(e) for e in settings.get("engines", ["simulated"])]
    domains = _pairs(settings.get("domain_pool", {"example.com": 1}))
    brand_pools = settings.get("brand_pools") or {}
    prompts = load_prompts(settings.get("prompts"), settings.get("campaigns"))
    if days < 1:
        raise ValueError("days must be >= 1")
    by_campaign: dict[CampaignId, list[PromptId]] = {}
    for p in prompts:
        by_campaign.setdefault(p.campaign, []).append(p)
    summary = CollectionSummary()
    for campaign, cprompts in sorted(by_campaign.items()):
        pool = next((v for k, v in brand_pools.items() if campaign.matches(k)), {})
        adapters = {
            e: SimulatedAdapter(SimulatedEngineConfig(
                seed=derive_seed(seed, e.name, campaign.name),
                domain_pool=tuple(domains),
                brand_pool=tuple(_pairs(pool)),
                citations_per_answer=(int(lo), int(hi)),
            ))
            for e in engines
        }
        plan = CollectionPlan(cprompts, engines, reps, 0.0, 0)
        for day in range(days):
            clock = SimulatedClock(start + timedelta(days=day), step)
            part = run_plan(plan, adapters, sink, clock=clock)
            summary.successes.update(part.successes)
            summary.failures.update(part.failures)
    return summary
