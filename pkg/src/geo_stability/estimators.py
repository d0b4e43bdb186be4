"""scikit-learn style front-end.

Each estimator takes its settings in ``__init__`` (so ``get_params``,
``set_params`` and ``clone`` work), learns from records in ``fit`` and stores
results in trailing-underscore attributes.
"""
from __future__ import annotations

from datetime import timedelta

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .brands import BrandLexicon, LexiconSet, detect_brands, detection_rate
from .concentration import gini_matrix, tally_citations
from .convergence import run_convergence_curve, window_convergence_curve
from .model import EXCLUDED, Kind, RboParams
from .pairing import (
    SimultaneousPairingConfig,
    TemporalPairingConfig,
    consecutive_day_pairs,
    score_pairs,
    simultaneous_pairs,
)
from .reporting import aggregate, per_prompt_breakdown
from .validation import check_positive_int, check_probability, check_records, check_texts

__all__ = [
    "BrandDetector",
    "PairwiseStability",
    "CitationConcentration",
    "RunCountConvergence",
    "WindowConvergence",
]


def _as_lexicons(lexicons):
    if lexicons is None or isinstance(lexicons, (LexiconSet, BrandLexicon)):
        return lexicons
    if isinstance(lexicons, dict):
        return LexiconSet(lexicons)
    raise TypeError("lexicons must be a LexiconSet, a BrandLexicon or a dict of them")


class BrandDetector(TransformerMixin, BaseEstimator):
    """Binary brand-mention features from answer texts.

    ``transform`` returns an ``(n_texts, n_brands)`` 0/1 matrix whose columns
    follow ``brands_`` (sorted canonical names).
    """

    def __init__(self, lexicon: "BrandLexicon | None" = None):
        self.lexicon = lexicon

    def fit(self, X=None, y=None):
        if not isinstance(self.lexicon, BrandLexicon):
            raise TypeError("lexicon must be a BrandLexicon")
        if X is not None:
            check_texts(X)
        self.brands_ = np.asarray(self.lexicon.brands, dtype=object)
        self.n_features_out_ = len(self.brands_)
        return self

    def detect(self, X):
        check_is_fitted(self, "brands_")
        return [detect_brands(t, self.lexicon, record_ref=i) for i, t in enumerate(check_texts(X))]

    def transform(self, X):
        results = self.detect(X)
        col = {b: j for j, b in enumerate(self.brands_)}
        out = np.zeros((len(results), len(col)), dtype=np.int8)
        for i, res in enumerate(results):
            for b in res.brands_ordered:
                out[i, col[b]] = 1
        return out

    def detection_rate(self, X) -> float:
        return detection_rate(self.detect(X))

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "brands_")
        return self.brands_.copy()


class PairwiseStability(TransformerMixin, BaseEstimator, auto_wrap_output_keys=None):
    """Pairwise Jaccard / RBO over consecutive-day or within-window pairs.

    ``transform`` returns one row per fitted pair with columns (jaccard, rbo);
    pairs excluded by the both-empty policy are NaN. Rows follow the pairs,
    not the input records, so the pandas output wrapper is disabled.
    """

    def __init__(self, population: str = "simultaneous", kind: str = "source", p: float = 0.9,
                 max_delta_hours: float = 24.0, max_gap_days: int = 1, lexicons=None):
        self.population = population
        self.kind = kind
        self.p = p
        self.max_delta_hours = max_delta_hours
        self.max_gap_days = max_gap_days
        self.lexicons = lexicons

    def _pairs(self, records):
        kind = Kind.parse(self.kind)
        if self.population == "simultaneous":
            cfg = SimultaneousPairingConfig(max_delta=timedelta(hours=float(self.max_delta_hours)))
            return simultaneous_pairs(records, cfg, kind)
        if self.population == "temporal":
            cfg = TemporalPairingConfig(max_gap_days=check_positive_int(self.max_gap_days, "max_gap_days"))
            return consecutive_day_pairs(records, cfg, kind)
        raise ValueError(f"population must be 'simultaneous' or 'temporal', got {self.population!r}")

    def fit(self, X, y=None):
        records = check_records(X)
        params = RboParams(check_probability(self.p, "p"))
        lex = _as_lexicons(self.lexicons)
        if Kind.parse(self.kind) is Kind.BRAND and lex is None:
            raise ValueError("brand similarity requires lexicons")
        self.pairs_ = self._pairs(records)
        self.scores_ = score_pairs(self.pairs_, params, lex)
        self.n_excluded_ = sum(1 for _, s in self.scores_ if s.excluded)
        return self

    def transform(self, X=None):
        """Score matrix of the fitted pairs; ``X`` is accepted for API symmetry."""
        check_is_fitted(self, "scores_")
        out = np.empty((len(self.scores_), 2))
        for i, (_, s) in enumerate(self.scores_):
            out[i] = (np.nan, np.nan) if s.jaccard is EXCLUDED else (s.jaccard, s.rbo)
        return out

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X, y).transform()

    def aggregate(self, scope: str = "campaign"):
        check_is_fitted(self, "scores_")
        return aggregate(self.scores_, scope, self.population)

    def per_prompt(self):
        check_is_fitted(self, "scores_")
        return per_prompt_breakdown(self.scores_)

    def get_feature_names_out(self, input_features=None):
        return np.asarray(["jaccard", "rbo"], dtype=object)


class CitationConcentration(BaseEstimator):
    """Gini coefficient of citation counts per (campaign, engine)."""

    def fit(self, X, y=None):
        records = check_records(X)
        self.matrix_ = gini_matrix(records)
        self.gini_ = dict(self.matrix_.cells)
        self.counts_ = {g: tally_citations(records, *g) for g in self.gini_}
        self.global_mean_ = self.matrix_.global_mean
        return self


class RunCountConvergence(BaseEstimator):
    """Subsampling SE of per-brand detection rates (``mode="brand"``) or of
    source-coverage Jaccard (``mode="source"``) against the number of runs."""

    def __init__(self, mode: str = "brand", lexicons=None, n_runs: int = 10, n_range=None,
                 resamples: int = 2000, seed: int = 0, campaigns=None):
        self.mode = mode
        self.lexicons = lexicons
        self.n_runs = n_runs
        self.n_range = n_range
        self.resamples = resamples
        self.seed = seed
        self.campaigns = campaigns

    def fit(self, X, y=None):
        records = check_records(X)
        check_positive_int(self.n_runs, "n_runs", minimum=2)
        check_positive_int(self.resamples, "resamples")
        self.curve_ = run_convergence_curve(
            records, self.mode, _as_lexicons(self.lexicons), self.n_range, self.n_runs,
            self.resamples, self.seed, self.campaigns,
        )
        self.thresholds_ = dict(self.curve_.thresholds)
        return self

    def predict(self, n_runs):
        """Mean SE at the requested run counts (must be on the fitted grid)."""
        check_is_fitted(self, "curve_")
        return np.asarray([self.curve_.se(int(n)) for n in np.atleast_1d(n_runs)])


class WindowConvergence(BaseEstimator):
    """Rolling-window SE of per-brand daily detection series against window length."""

    def __init__(self, lexicons=None, d_range=None, strict_calendar: bool = False, campaigns=None):
        self.lexicons = lexicons
        self.d_range = d_range
        self.strict_calendar = strict_calendar
        self.campaigns = campaigns

    def fit(self, X, y=None):
        records = check_records(X)
        lex = _as_lexicons(self.lexicons)
        if lex is None:
            raise ValueError("window convergence requires lexicons")
        if isinstance(lex, BrandLexicon):
            lex = LexiconSet({lex.campaign.name: lex})
        self.curve_ = window_convergence_curve(
            records, self.d_range, lex, self.strict_calendar, self.campaigns,
        )
        self.thresholds_ = dict(self.curve_.thresholds)
        return self

    def predict(self, d):
        check_is_fitted(self, "curve_")
        return np.asarray([self.curve_.se(int(v)) for v in np.atleast_1d(d)])
