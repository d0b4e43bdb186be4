"""Stability metrics for repeated AI-search answers.

Pairwise Jaccard and rank-biased overlap of cited sources and mentioned
brands, citation concentration (Gini) and measurement-convergence curves.
"""
from .brands import BrandLexicon, LexiconSet, detect_brands, detection_rate, load_lexicons, qualify_campaigns
from .concentration import gini, gini_matrix, tally_citations
from .convergence import (
    ci_half_width,
    hypergeometric_se,
    rolling_window_se,
    run_convergence_curve,
    subsample_se,
    window_convergence_curve,
)
from .estimators import BrandDetector, CitationConcentration, PairwiseStability, RunCountConvergence, WindowConvergence
from .ingestion import IngestConfig, apply_filters, coverage_table, normalize_url, parse_log, read_logs, write_log
from .model import EXCLUDED, CampaignId, EngineId, Kind, PairScore, PromptId, RboParams, ResponseRecord, validate_record
from .pairing import consecutive_day_pairs, score_pairs, simultaneous_pairs
from .reporting import aggregate, per_prompt_breakdown, render_report
from .similarity import jaccard, rbo_min, score_pair

__version__ = "0.1.0"
