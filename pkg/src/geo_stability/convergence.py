"""Run-count and observation-window convergence of detection-rate estimates.

Random subsets come from a counter-based SplitMix64 stream so results are
reproducible independent of platform and scheduling:

* draw ``i`` of a stream with seed ``s`` is ``mix64(s + (i + 1) * 0x9E3779B97F4A7C15)``
  (i.e. the ``i``-th output of SplitMix64 started at state ``s``);
* permutation ``r`` of ``N`` items is the stable argsort of draws
  ``r * N .. r * N + N - 1``;
* by default (``scheme="balanced"``) each permutation is cut into
  ``N // n`` consecutive disjoint subsets of size ``n``, leftovers dropped;
  with ``scheme="iid"`` resample ``r`` is the first ``n`` entries of
  permutation ``r``.

Per-series seeds are ``blake2b-64(master_seed, series key)``.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .brands import LexiconSet, detect_brands
from .model import ResponseRecord, iter_groups
from .pairing import daily_records
from .similarity import source_list

__all__ = [
    "Z_95",
    "splitmix64",
    "derive_seed",
    "subsample_indices",
    "BrandSeries",
    "subsample_se",
    "rolling_window_se",
    "ci_half_width",
    "CurvePoint",
    "ConvergenceCurve",
    "brand_run_series",
    "source_run_groups",
    "run_convergence_curve",
    "brand_daily_series",
    "window_convergence_curve",
    "hypergeometric_se",
]

Z_95 = 1.96
RUN_THRESHOLDS = (0.10, 0.08)
WINDOW_THRESHOLDS = (0.10, 0.05, 0.02)

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


def splitmix64(seed: int, counters) -> np.ndarray:
    """Outputs ``counters`` of the SplitMix64 stream started at ``seed``."""
    c = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(seed & _MASK) + (c + np.uint64(1)) * _GAMMA
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def derive_seed(master_seed: int, *key) -> int:
    """Stable 64-bit seed for one series, independent of processing order."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(master_seed) & _MASK).encode())
    for part in key:
        h.update(b"\x1f")
        h.update(str(part).encode("utf-8"))
    return int.from_bytes(h.digest(), "little")


def _permutation_prefixes(population: int, m: int, rows: int, seed: int) -> np.ndarray:
    # row r ranks stream draws r*population .. (r+1)*population-1; the stable
    # sort keeps the result defined even on (vanishingly rare) tied draws
    draws = splitmix64(seed, np.arange(rows * population, dtype=np.uint64)).reshape(rows, population)
    return np.argsort(draws, axis=1, kind="stable")[:, :m]


def subsample_indices(population: int, n: int, resamples: int, seed: int, scheme: str = "balanced") -> np.ndarray:
    """``resamples`` x ``n`` array of index subsets drawn without replacement.

    ``scheme="iid"`` draws every subset independently. ``"balanced"`` cuts
    each random permutation into ``population // n`` disjoint subsets, so
    every element is used about equally often. Each subset is uniform over
    all size-``n`` subsets either way; balancing only cuts Monte-Carlo noise.
    """
    if not 1 <= n <= population:
        raise ValueError(f"subset size must lie in [1, {population}], got {n}")
    if resamples < 1:
        raise ValueError("resamples must be >= 1")
    if scheme == "iid":
        return _permutation_prefixes(population, n, resamples, seed)
    if scheme != "balanced":
        raise ValueError(f"unknown subsampling scheme {scheme!r}")
    blocks = population // n
    perms = -(-resamples // blocks)
    rows = _permutation_prefixes(population, blocks * n, perms, seed)
    return rows.reshape(perms * blocks, n)[:resamples]


@dataclass(frozen=True)
class BrandSeries:
    """Binary detection indicators of one brand, per run or per day."""

    key: tuple
    observations: tuple[int, ...]
    days: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "observations", tuple(int(x) for x in self.observations))
        if self.days and len(self.days) != len(self.observations):
            raise ValueError("days and observations differ in length")

    def __len__(self):
        return len(self.observations)

    @property
    def detected(self) -> bool:
        return any(self.observations)


def _values(series) -> np.ndarray:
    obs = series.observations if isinstance(series, BrandSeries) else series
    return np.asarray(obs, dtype=float)


def subsample_se(series, n: int, resamples: int = 2000, seed: int = 0, scheme: str = "balanced") -> float:
    """Population standard deviation of ``resamples`` subset means of size ``n``.

    ``n`` equal to the series length has a single possible mean, so 0.0 is
    returned without sampling.
    """
    x = _values(series)
    N = x.size
    if n == N and N > 0:
        return 0.0
    if not 1 <= n < N:
        raise ValueError(f"subset size must lie in [1, {N}), got {n}")
    idx = subsample_indices(N, n, resamples, seed, scheme)
    return float(x[idx].mean(axis=1).std())


def hypergeometric_se(population: int, detections: int, n: int) -> float:
    """Exact SE of a without-replacement subset mean of a binary population."""
    p = detections / population
    if population == 1:
        return 0.0
    return math.sqrt(p * (1 - p) / n * (population - n) / (population - 1))


def rolling_window_se(series, d: int) -> float:
    """Population standard deviation of all consecutive length-``d`` window means."""
    obs = series.observations if isinstance(series, BrandSeries) else series
    obs = list(obs)
    N = len(obs)
    if not 1 <= d <= N:
        raise ValueError(f"window length must lie in [1, {N}], got {d}")
    if all(float(v).is_integer() for v in obs):
        # integer sums: variance is an exact rational
        ints = [int(v) for v in obs]
        csum = [0]
        for v in ints:
            csum.append(csum[-1] + v)
        sums = [csum[i + d] - csum[i] for i in range(N - d + 1)]
        w = len(sums)
        s1 = sum(sums)
        s2 = sum(s * s for s in sums)
        return math.sqrt(Fraction(w * s2 - s1 * s1, w * w * d * d))
    x = np.asarray(obs, dtype=float)
    c = np.concatenate([[0.0], np.cumsum(x)])
    return float(((c[d:] - c[:-d]) / d).std())


def _segment_window_se(series: BrandSeries, d: int) -> "float | None":
    # strict calendar mode: windows must span d consecutive observed days
    days, obs = series.days, series.observations
    segments, cur = [], [obs[0]]
    for prev, day, v in zip(days, days[1:], obs[1:]):
        if (day - prev).days == 1:
            cur.append(v)
        else:
            segments.append(cur)
            cur = [v]
    segments.append(cur)
    sums = []
    for seg in segments:
        for i in range(len(seg) - d + 1):
            sums.append(sum(seg[i:i + d]))
    if not sums:
        return None
    w, s1, s2 = len(sums), sum(sums), sum(s * s for s in sums)
    return math.sqrt(Fraction(w * s2 - s1 * s1, w * w * d * d))


def ci_half_width(se: float, z: float = Z_95) -> float:
    if se < 0:
        raise ValueError("standard error must be non-negative")
    return z * se


@dataclass(frozen=True)
class CurvePoint:
    size: int
    se: float
    ci_half_width: float
    series_count: int


@dataclass
class ConvergenceCurve:
    mode: str
    points: list[CurvePoint]
    resamples: int = 0
    seed: int = 0
    thresholds: dict[float, "int | None"] = field(default_factory=dict)

    def se(self, size: int) -> float:
        for pt in self.points:
            if pt.size == size:
                return pt.se
        raise KeyError(size)

    def first_below(self, level: float) -> "int | None":
        for pt in self.points:
            if pt.se < level:
                return pt.size
        return None

    def to_csv(self) -> str:
        lines = ["# schema_version: 1", "mode,n_or_d,mean_se,ci_half_width,series_count"]
        for pt in self.points:
            lines.append(f"{self.mode},{pt.size},{pt.se:.6f},{pt.ci_half_width:.6f},{pt.series_count}")
        return "\n".join(lines) + "\n"

    def threshold_report(self) -> str:
        unit = "runs" if self.mode.startswith("runs") else "days"
        lines = [f"mode: {self.mode}"]
        for level, size in sorted(self.thresholds.items(), reverse=True):
            where = f"{size} {unit}" if size is not None else "not reached"
            lines.append(f"SE < {level:.2f}: {where}")
        if self.mode.startswith("runs"):
            lines.append(
                "note: subsets are drawn without replacement from a finite run pool; SE at the "
                "largest n is shrunk by the finite population correction and understates the "
                "SE of truly independent runs."
            )
        return "\n".join(lines) + "\n"


def _first_runs(recs: list[ResponseRecord], n_runs: int) -> "list[ResponseRecord] | None":
    if len(recs) < n_runs:
        return None
    return sorted(recs, key=lambda r: (r.run_index, r.timestamp))[:n_runs]


def _in_scope(campaign, campaigns) -> bool:
    if campaigns is None:
        return True
    return any(campaign.matches(c) for c in campaigns)


def brand_run_series(
    records: Iterable[ResponseRecord],
    lexicons: LexiconSet,
    n_runs: int = 10,
    campaigns: "Iterable[str] | None" = None,
) -> list[BrandSeries]:
    """Per-brand binary series over the first ``n_runs`` runs of each
    (campaign, engine, prompt); never-detected brands are dropped."""
    campaigns = None if campaigns is None else list(campaigns)
    out = []
    for (campaign, engine, prompt), recs in iter_groups(records):
        if not _in_scope(campaign, campaigns):
            continue
        lex = lexicons.for_campaign(campaign)
        runs = _first_runs(recs, n_runs)
        if lex is None or runs is None:
            continue
        found = [detect_brands(r.answer_text, lex).brands_set for r in runs]
        for brand in lex.brands:
            obs = tuple(int(brand in f) for f in found)
            if any(obs):
                out.append(BrandSeries((campaign.name, engine.name, prompt.index, brand), obs))
    return out


def source_run_groups(
    records: Iterable[ResponseRecord],
    n_runs: int = 10,
    campaigns: "Iterable[str] | None" = None,
) -> list[tuple[tuple, list[frozenset]]]:
    campaigns = None if campaigns is None else list(campaigns)
    out = []
    for (campaign, engine, prompt), recs in iter_groups(records):
        if not _in_scope(campaign, campaigns):
            continue
        runs = _first_runs(recs, n_runs)
        if runs is None:
            continue
        sets = [frozenset(source_list(r)) for r in runs]
        if any(sets):
            out.append(((campaign.name, engine.name, prompt.index), sets))
    return out


def coverage_se(run_sets: Sequence[frozenset], n: int, resamples: int = 2000, seed: int = 0) -> float:
    """SE of the Jaccard between an ``n``-run domain union and the full union."""
    N = len(run_sets)
    if n == N:
        return 0.0
    if not 1 <= n < N:
        raise ValueError(f"subset size must lie in [1, {N}), got {n}")
    universe = sorted(frozenset().union(*run_sets))
    if not universe:
        raise ValueError("no citations in group")
    col = {d: i for i, d in enumerate(universe)}
    m = np.zeros((N, len(universe)), dtype=bool)
    for i, s in enumerate(run_sets):
        m[i, [col[d] for d in s]] = True
    idx = subsample_indices(N, n, resamples, seed)
    # the subset union is contained in the full union, so J = |union| / |full|
    cover = m[idx].any(axis=1).sum(axis=1) / len(universe)
    return float(cover.std())


def run_convergence_curve(
    records: Iterable[ResponseRecord],
    mode: str = "brand",
    lexicons: "LexiconSet | None" = None,
    n_range: "Sequence[int] | None" = None,
    n_runs: int = 10,
    resamples: int = 2000,
    seed: int = 0,
    campaigns: "Iterable[str] | None" = None,
) -> ConvergenceCurve:
    """Mean subsampling SE as a function of run count.

    ``mode="brand"`` averages over per-brand detection series,
    ``mode="source"`` over per-group source-coverage Jaccard.
    """
    n_range = list(n_range) if n_range is not None else list(range(1, n_runs))
    if mode == "brand":
        if lexicons is None:
            raise ValueError("brand convergence requires lexicons")
        units = brand_run_series(records, lexicons, n_runs, campaigns)

        def se_at(unit, n):
            return subsample_se(unit, n, resamples, derive_seed(seed, *unit.key))
    elif mode == "source":
        units = source_run_groups(records, n_runs, campaigns)

        def se_at(unit, n):
            key, sets = unit
            return coverage_se(sets, n, resamples, derive_seed(seed, *key))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if not units:
        raise ValueError(f"no groups with {n_runs} runs qualify")
    points = []
    for n in n_range:
        ses = [se_at(u, n) for u in units]
        se = float(np.mean(ses))
        points.append(CurvePoint(n, se, ci_half_width(se), len(ses)))
    curve = ConvergenceCurve(f"runs_{mode}", points, resamples, seed)
    curve.thresholds = {t: curve.first_below(t) for t in RUN_THRESHOLDS}
    return curve


def brand_daily_series(
    records: Iterable[ResponseRecord],
    lexicons: LexiconSet,
    campaigns: "Iterable[str] | None" = None,
) -> list[BrandSeries]:
    """Per-brand daily binary series (earliest run per day)."""
    campaigns = None if campaigns is None else list(campaigns)
    out = []
    for (campaign, engine, prompt), recs in iter_groups(records):
        if not _in_scope(campaign, campaigns):
            continue
        lex = lexicons.for_campaign(campaign)
        if lex is None:
            continue
        days = daily_records(recs)
        found = [detect_brands(r.answer_text, lex).brands_set for r in days]
        day_keys = tuple(r.day for r in days)
        for brand in lex.brands:
            obs = tuple(int(brand in f) for f in found)
            if any(obs):
                out.append(BrandSeries((campaign.name, engine.name, prompt.index, brand), obs, day_keys))
    return out


def window_convergence_curve(
    series: "Iterable[BrandSeries] | Iterable[ResponseRecord]",
    d_range: "Sequence[int] | None" = None,
    lexicons: "LexiconSet | None" = None,
    strict_calendar: bool = False,
    campaigns: "Iterable[str] | None" = None,
) -> ConvergenceCurve:
    """Mean rolling-window SE over per-brand daily series.

    By default windows slide over observed days (gaps are compressed); with
    ``strict_calendar`` a window must cover consecutive calendar days. A
    series contributes to window length ``d`` only if it has a window of that
    length.
    """
    items = list(series)
    if items and isinstance(items[0], ResponseRecord):
        if lexicons is None:
            raise ValueError("lexicons are required to build series from records")
        items = brand_daily_series(items, lexicons, campaigns)
    items = [s for s in items if s.detected]
    if not items:
        raise ValueError("no detected brand series")
    if d_range is None:
        d_range = range(1, max(len(s) for s in items) + 1)
    points = []
    for d in d_range:
        ses = []
        for s in items:
            if strict_calendar:
                v = _segment_window_se(s, d)
                if v is not None:
                    ses.append(v)
            elif len(s) >= d:
                ses.append(rolling_window_se(s, d))
        if ses:
            se = float(np.mean(ses))
            points.append(CurvePoint(d, se, ci_half_width(se), len(ses)))
    curve = ConvergenceCurve("window", points)
    curve.thresholds = {t: curve.first_below(t) for t in WINDOW_THRESHOLDS}
    return curve

