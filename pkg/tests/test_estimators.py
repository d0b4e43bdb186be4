import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from geo_stability.brands import LexiconSet
from geo_stability.estimators import (
    BrandDetector,
    CitationConcentration,
    PairwiseStability,
    RunCountConvergence,
    WindowConvergence,
)
from conftest import make_record


def runs(n=10):
    return [make_record(ts=i * 0.5, run=i + 1, text="Salt und Sunrise" if i % 3 else "Swisscom",
                        citations=[f"https://d{i % 4}.com", "https://a.com"]) for i in range(n)]


def test_brand_detector_matrix(telekom_lexicon):
    det = BrandDetector(telekom_lexicon).fit()
    X = det.transform(["Salt und Swisscom", "", "M-Budget"])
    assert list(det.get_feature_names_out()) == ["Migros", "Salt", "Sunrise", "Swisscom"]
    assert X.tolist() == [[0, 1, 0, 1], [0, 0, 0, 0], [1, 0, 0, 0]]
    assert det.detection_rate(["Salt", "nichts"]) == 0.5


def test_brand_detector_validation(telekom_lexicon):
    with pytest.raises(NotFittedError):
        BrandDetector(telekom_lexicon).transform(["x"])
    with pytest.raises(TypeError):
        BrandDetector(None).fit()
    with pytest.raises(TypeError):
        BrandDetector(telekom_lexicon).fit().transform("a single string")
    with pytest.raises(ValueError):
        BrandDetector(telekom_lexicon).fit().transform(np.array([["a"]]))


def test_params_roundtrip_and_clone(telekom_lexicon):
    est = PairwiseStability(kind="brand", p=0.8, lexicons=LexiconSet({"Telekom": telekom_lexicon}))
    params = est.get_params()
    assert params["p"] == 0.8 and params["population"] == "simultaneous"
    twin = clone(est)
    assert twin.get_params()["kind"] == "brand" and not hasattr(twin, "scores_")
    est.set_params(p=0.5)
    assert est.p == 0.5


def test_pairwise_source():
    est = PairwiseStability()
    X = est.fit_transform(runs())
    assert X.shape == (45, 2)
    assert est.n_excluded_ == 0
    (row,) = est.aggregate()
    assert row.pair_count == 45
    assert est.per_prompt()[0].pair_count == 45


def test_pairwise_excluded_are_nan(telekom_lexicon):
    recs = [make_record(ts=i, run=i + 1, text="nichts") for i in range(3)]
    est = PairwiseStability(kind="brand", lexicons={"Telekom": telekom_lexicon}).fit(recs)
    assert np.isnan(est.transform()).all() and est.n_excluded_ == 3


def test_pairwise_input_checks(telekom_lexicon):
    with pytest.raises(ValueError):
        PairwiseStability(kind="brand").fit(runs())
    with pytest.raises(ValueError):
        PairwiseStability(population="weekly").fit(runs())
    with pytest.raises(ValueError):
        PairwiseStability(p=1.5).fit(runs())
    with pytest.raises(TypeError):
        PairwiseStability().fit("log.jsonl")
    with pytest.raises(ValueError):
        PairwiseStability().fit([{"engine": "chatgpt"}])


def test_mapping_records_accepted():
    rows = [r.to_dict() for r in runs(4)]
    est = PairwiseStability().fit(rows)
    assert len(est.scores_) == 6
    del rows[0]["run_index"]
    with pytest.raises(ValueError):
        PairwiseStability().fit(rows)


def test_temporal_population():
    recs = [make_record(ts=24 * d, citations=["https://a.com"]) for d in range(4)]
    assert PairwiseStability(population="temporal").fit(recs).transform().shape == (3, 2)


def test_concentration():
    cites = [f"https://d{i}.com" for i, n in enumerate([1, 2, 3, 4, 10]) for _ in range(n)]
    est = CitationConcentration().fit([make_record(citations=cites)])
    assert list(est.gini_.values()) == [0.4] and est.global_mean_ == 0.4
    assert sum(next(iter(est.counts_.values())).values()) == 20


def test_run_convergence(telekom_lexicon):
    est = RunCountConvergence(lexicons=LexiconSet({"Telekom": telekom_lexicon}), resamples=200, seed=1)
    est.fit(runs())
    se = est.predict([1, 5, 9])
    assert se.shape == (3,) and se[0] > se[2]
    with pytest.raises(ValueError):
        RunCountConvergence(n_runs=1).fit(runs())


def test_window_convergence(telekom_lexicon):
    recs = [make_record(ts=24 * d, text="Salt" if d % 2 else "Swisscom") for d in range(8)]
    est = WindowConvergence(lexicons=telekom_lexicon).fit(recs)
    assert est.predict(8)[0] == 0.0
    with pytest.raises(ValueError):
        WindowConvergence().fit(recs)
