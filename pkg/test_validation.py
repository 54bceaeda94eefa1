"""
Tests for the weak/strong binomial validation tests and the Poisson-binomial tails
"""

import math

import numpy as np
import pytest
from scipy import stats

from src.errors import DomainError
from src.estimator import AdaptivePolicy, EstimationConfig, GammaPosterior, SpamModel
from src.simulator import QubitSimulator, RateProcess, StaticSource
from src.validation import (TEST_NAMES, BinomialTest, evaluate_tests, margin_probability, poisson_binomial_cdf,
                            poisson_binomial_pmf, poisson_binomial_sf, run_validation_protocol,
                            thresholds_for_probability, weak_strong_thresholds)

LAB_SPAM = SpamModel(alpha=0.11, beta=0.14)
CONFIG = EstimationConfig(prior=GammaPosterior(3.0, 450e-6), spam=LAB_SPAM, policy=AdaptivePolicy(c=0.51), n_shots=50)


@pytest.mark.parametrize("p", [0.2865, 0.418, 0.62])
def test_thresholds_match_binomial_quantiles(p):
    s_weak, s_strong = thresholds_for_probability(200, p, 0.95)
    assert s_weak == int(stats.binom.ppf(0.05, 200, p))
    assert s_strong == int(stats.binom.ppf(0.95, 200, p))
    assert s_weak < s_strong


def test_thresholds_at_extreme_level():
    s_weak, s_strong = thresholds_for_probability(10, 0.5, 1.0 - 1e-6)
    assert s_weak == 0
    assert s_strong == 10


def test_margin_probability():
    assert margin_probability(LAB_SPAM, 0.0) == pytest.approx(LAB_SPAM.p_one(math.exp(-1.0)))
    assert margin_probability(LAB_SPAM, -0.2) < margin_probability(LAB_SPAM, 0.0) < margin_probability(LAB_SPAM, 0.2)
    with pytest.raises(DomainError):
        margin_probability(LAB_SPAM, -1.0)


def test_thresholds_need_test_shots():
    with pytest.raises(DomainError):
        weak_strong_thresholds(BinomialTest(n_test=0), 150e-6, 0.2, LAB_SPAM)
    with pytest.raises(DomainError):
        weak_strong_thresholds(BinomialTest(n_test=10), 0.0, 0.2, LAB_SPAM)


def test_binomial_test_validation():
    with pytest.raises(DomainError):
        BinomialTest(n_test=-1)
    with pytest.raises(DomainError):
        BinomialTest(n_test=10, level=1.0)


def test_expected_count_passes_both_weak_tests():
    test = BinomialTest(n_test=200, q=0.2, level=0.95)
    s_expected = round(200 * margin_probability(LAB_SPAM, 0.0))
    result = evaluate_tests(s_expected, test, 150e-6, LAB_SPAM)
    assert result["weak_greater"]
    assert result["weak_less"]


def test_extreme_counts():
    test = BinomialTest(n_test=200)
    none = evaluate_tests(0, test, 150e-6, LAB_SPAM)
    assert none == {"weak_greater": False, "strong_greater": False, "weak_less": True, "strong_less": True}

    every = evaluate_tests(200, test, 150e-6, LAB_SPAM)
    assert every == {"weak_greater": True, "strong_greater": True, "weak_less": False, "strong_less": False}


def test_poisson_binomial_equals_binomial_for_equal_probabilities():
    pmf = poisson_binomial_pmf([0.3] * 25)
    assert np.allclose(pmf, stats.binom.pmf(np.arange(26), 25, 0.3), atol=1e-14)


def test_poisson_binomial_tails():
    ps = [0.1, 0.5, 0.9, 0.35, 0.7]
    pmf = poisson_binomial_pmf(ps)
    assert pmf.sum() == pytest.approx(1.0)
    for s in range(6):
        assert poisson_binomial_cdf(ps, s) + poisson_binomial_sf(ps, s + 1) == pytest.approx(1.0)
    assert poisson_binomial_cdf(ps, -1) == 0.0
    assert poisson_binomial_sf(ps, 0) == 1.0
    assert poisson_binomial_sf(ps, 5) == pytest.approx(0.1 * 0.5 * 0.9 * 0.35 * 0.7)


def test_poisson_binomial_rejects_bad_probability():
    with pytest.raises(DomainError):
        poisson_binomial_pmf([0.5, 1.2])


def test_zero_test_shots_give_empty_report():
    source = StaticSource(p_one=0.418, seed=1)
    report = run_validation_protocol(source, CONFIG, n_test=0, reps=10)
    assert report.rows.empty
    assert source.lab_time == 0.0
    assert report.histogram["count"].sum() == 0


def test_static_source_histogram_centres_on_p():
    source = StaticSource(p_one=0.418, idle_time=23.2e-6, seed=2)
    report = run_validation_protocol(source, CONFIG, n_test=200, reps=50)

    assert len(report.rows) == 50
    assert report.histogram["count"].sum() == 50
    assert report.rows["m_val"].mean() == pytest.approx(0.418, abs=0.02)
    assert report.expected_p == pytest.approx(LAB_SPAM.p_one(math.exp(-1.0)))


def test_protocol_on_static_qubit():
    source = QubitSimulator(RateProcess(1.0 / 200e-6), LAB_SPAM, idle_time=23.2e-6, seed=3)
    report = run_validation_protocol(source, CONFIG, n_test=200, reps=80)

    assert list(report.rows.columns) == ["rep_index", "t1_hat_s", "s_obs", "m_val", "stratum"] + list(TEST_NAMES)
    assert len(report.strata) == 5
    assert report.strata["reps"].sum() == (report.rows["stratum"] >= 0).sum()
    # estimates scatter by tens of percent after 50 shots, so the weak test mostly passes
    assert report.overall["weak_greater_rate"] > 0.6
    assert report.overall["weak_less_rate"] > 0.6
    assert report.overall["strong_greater_rate"] <= report.overall["weak_greater_rate"]

    payload = report.to_dict()
    assert payload["repetitions"] == 80
    assert len(payload["strata"]) == 5


def test_protocol_rejects_unsorted_strata():
    with pytest.raises(DomainError):
        run_validation_protocol(StaticSource(p_one=0.4), CONFIG, n_test=10, reps=1, strata_edges=[2e-4, 1e-4])
