"""
Weak and strong binomial tests of an estimate against fresh test shots
"""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from .errors import DomainError
from .estimator import EstimationConfig, MeasurementSource, SpamModel, run_estimation
from .utils.logger import get_app_logger

logger = get_app_logger()

TEST_NAMES = ("weak_greater", "strong_greater", "weak_less", "strong_less")
DEFAULT_STRATA_EDGES = (100e-6, 150e-6, 200e-6, 250e-6, 300e-6, 350e-6)


@dataclass(frozen=True)
class BinomialTest:
    """
    n_test shots taken at tau = T1_hat, judged at a relative margin q

    Attributes:
        n_test: Number of test shots
        q: Relative margin on T1
        level: Confidence level of both thresholds
    """

    n_test: int
    q: float = 0.2
    level: float = 0.95

    def __post_init__(self):
        if self.n_test < 0:
            raise DomainError(f"n_test must be >= 0, got {self.n_test}")
        if not 0.0 < self.level < 1.0:
            raise DomainError(f"level must be in (0, 1), got {self.level}")
        if not -1.0 < self.q:
            raise DomainError(f"q must be > -1, got {self.q}")


def margin_probability(spam: SpamModel, q: float) -> float:
    """P(m = 1) at tau = T1_hat when the true T1 is (1 + q) * T1_hat"""
    if not q > -1.0:
        raise DomainError(f"q must be > -1, got {q}")
    return spam.p_one(math.exp(-1.0 / (1.0 + q)))


def thresholds_for_probability(n_test: int, p: float, level: float) -> Tuple[int, int]:
    """
    Exact binomial thresholds (S_weak, S_strong) for success probability p

    S_weak is the largest s with P(S >= s) >= level, S_strong the smallest s
    with P(S <= s) >= level.
    """
    s = np.arange(n_test + 1)
    upper_tail = stats.binom.sf(s - 1, n_test, p)
    lower_tail = stats.binom.cdf(s, n_test, p)
    s_weak = int(s[upper_tail >= level].max())
    s_strong = int(s[lower_tail >= level].min())
    return s_weak, s_strong


def weak_strong_thresholds(test: BinomialTest, t1_hat: float, q: float, spam: SpamModel) -> Tuple[int, int]:
    """
    Thresholds for the hypothesis that the true T1 equals (1 + q) * T1_hat

    Test shots sit at tau = T1_hat, so the thresholds depend on T1_hat only
    through that choice.

    Args:
        test: Shot count and confidence level
        t1_hat: Estimate being validated (s)
        q: Relative margin
        spam: Readout model

    Returns:
        (S_weak, S_strong)
    """
    if test.n_test < 1:
        raise DomainError(f"n_test must be >= 1, got {test.n_test}")
    if not t1_hat > 0:
        raise DomainError(f"t1_hat must be positive, got {t1_hat}")
    return thresholds_for_probability(test.n_test, margin_probability(spam, q), test.level)


def evaluate_tests(s_obs: int, test: BinomialTest, t1_hat: float, spam: SpamModel) -> Dict[str, bool]:
    """
    Run all four tests on an observed count of ones

    The "greater" hypothesis is T1 > (1 - q) T1_hat and the "less" hypothesis
    is T1 < (1 + q) T1_hat. A weak test passes when the count is consistent
    with its hypothesis; a strong test passes when the count rejects the
    opposite one.
    """
    lo_g, hi_g = weak_strong_thresholds(test, t1_hat, -test.q, spam)
    lo_l, hi_l = weak_strong_thresholds(test, t1_hat, test.q, spam)
    return {
        "weak_greater": s_obs >= lo_g,
        "strong_greater": s_obs > hi_g,
        "weak_less": s_obs <= hi_l,
        "strong_less": s_obs < lo_l,
    }


def poisson_binomial_pmf(ps: Sequence[float]) -> np.ndarray:
    """Distribution of the number of ones among independent shots with probabilities ps"""
    probs = np.asarray(ps, dtype=float)
    if np.any((probs < 0.0) | (probs > 1.0)):
        raise DomainError("Poisson-binomial probabilities must lie in [0, 1]")

    pmf = np.zeros(len(probs) + 1)
    pmf[0] = 1.0
    for i, p in enumerate(probs):
        shifted = pmf[:i + 1] * p
        pmf[:i + 1] *= 1.0 - p
        pmf[1:i + 2] += shifted
    return pmf


def poisson_binomial_cdf(ps: Sequence[float], s: int) -> float:
    """P(S <= s)"""
    pmf = poisson_binomial_pmf(ps)
    if s < 0:
        return 0.0
    return float(min(1.0, pmf[:s + 1].sum()))


def poisson_binomial_sf(ps: Sequence[float], s: int) -> float:
    """P(S >= s)"""
    pmf = poisson_binomial_pmf(ps)
    if s <= 0:
        return 1.0
    return float(min(1.0, pmf[s:].sum()))


def _rate_with_ci(passes: np.ndarray) -> Tuple[float, float, float]:
    n = len(passes)
    if n == 0:
        return float("nan"), float("nan"), float("nan")
    rate = float(np.mean(passes))
    half = float(stats.norm.ppf(0.975)) * math.sqrt(rate * (1.0 - rate) / n)
    return rate, max(0.0, rate - half), min(1.0, rate + half)


@dataclass
class ValidationReport:
    """Per-repetition test results, pass rates per T1_hat stratum, and the m_val histogram"""

    n_test: int
    q: float
    level: float
    expected_p: float
    rows: pd.DataFrame
    strata: pd.DataFrame
    histogram: pd.DataFrame
    overall: Dict[str, float] = field(default_factory=dict)
    failed: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n_test": self.n_test,
            "q": self.q,
            "level": self.level,
            "expected_p": self.expected_p,
            "repetitions": int(len(self.rows)),
            "failed_repetitions": self.failed,
            "overall": self.overall,
            "strata": self.strata.to_dict(orient="records"),
        }


ROW_COLUMNS = ["rep_index", "t1_hat_s", "s_obs", "m_val", "stratum"] + list(TEST_NAMES)


def _strata_frame(rows: pd.DataFrame, edges: Sequence[float]) -> pd.DataFrame:
    records = []
    for i in range(len(edges) - 1):
        subset = rows[rows["stratum"] == i] if not rows.empty else rows
        record = {"stratum_lo_s": edges[i], "stratum_hi_s": edges[i + 1], "reps": int(len(subset))}
        for name in TEST_NAMES:
            passes = subset[name].to_numpy(dtype=float) if not subset.empty else np.array([])
            rate, lo, hi = _rate_with_ci(passes)
            record[f"{name}_rate"] = rate
            record[f"{name}_ci_lo"] = lo
            record[f"{name}_ci_hi"] = hi
        records.append(record)
    return pd.DataFrame(records)


def _histogram(m_val: np.ndarray, bins: int) -> pd.DataFrame:
    counts, bin_edges = np.histogram(m_val, bins=bins, range=(0.0, 1.0))
    return pd.DataFrame({"bin_lo": bin_edges[:-1], "bin_hi": bin_edges[1:], "count": counts})


def run_validation_protocol(
    source: MeasurementSource,
    config: EstimationConfig,
    n_test: int,
    reps: int,
    q: float = 0.2,
    level: float = 0.95,
    strata_edges: Sequence[float] = DEFAULT_STRATA_EDGES,
    bins: int = 20,
    first_rep: int = 0
) -> ValidationReport:
    """
    Validate adaptive estimates with interleaved test shots

    Each repetition runs one adaptive estimation, then takes n_test shots at
    tau = T1_hat on the same source and runs the weak and strong tests for
    both hypotheses. Pass rates are grouped by the stratum of T1_hat.

    Args:
        source: Measurement source
        config: Estimation settings
        n_test: Test shots per repetition; 0 yields an empty report
        reps: Number of repetitions
        q: Relative margin
        level: Test confidence level
        strata_edges: Sorted T1_hat stratum boundaries (s)
        bins: m_val histogram bins over [0, 1]
        first_rep: Repetition index of the first repetition

    Returns:
        ValidationReport
    """
    edges = list(strata_edges)
    if sorted(edges) != edges or len(edges) < 2:
        raise DomainError("strata_edges must be sorted with at least two entries")
    test = BinomialTest(n_test=n_test, q=q, level=level)
    expected_p = config.spam.p_one(math.exp(-1.0))

    if n_test == 0:
        logger.info("Validation requested with zero test shots; nothing to test")
        empty = pd.DataFrame(columns=ROW_COLUMNS)
        return ValidationReport(n_test, q, level, expected_p, empty, _strata_frame(empty, edges),
                                _histogram(np.array([]), bins))

    rows: List[Dict[str, Any]] = []
    failed = 0
    for i in range(reps):
        rep_index = first_rep + i
        run = run_estimation(source, config, rep_index=rep_index)
        if run.failed:
            failed += 1
            continue

        t1_hat = run.t1_hat
        s_obs = sum(source.probe(t1_hat, rep_index=rep_index, shot_index=config.n_shots + j).outcome
                    for j in range(n_test))
        stratum = int(np.searchsorted(edges, t1_hat, side="right")) - 1
        if stratum >= len(edges) - 1:
            stratum = -1

        row: Dict[str, Any] = {
            "rep_index": rep_index,
            "t1_hat_s": t1_hat,
            "s_obs": int(s_obs),
            "m_val": s_obs / n_test,
            "stratum": stratum,
        }
        row.update(evaluate_tests(int(s_obs), test, t1_hat, config.spam))
        rows.append(row)

    frame = pd.DataFrame(rows, columns=ROW_COLUMNS)
    overall = {}
    for name in TEST_NAMES:
        rate, lo, hi = _rate_with_ci(frame[name].to_numpy(dtype=float))
        overall[f"{name}_rate"] = rate
        overall[f"{name}_ci_lo"] = lo
        overall[f"{name}_ci_hi"] = hi

    if failed:
        logger.warning(f"{failed} of {reps} validation repetitions failed and were skipped")

    return ValidationReport(
        n_test=n_test,
        q=q,
        level=level,
        expected_p=expected_p,
        rows=frame,
        strata=_strata_frame(frame, edges),
        histogram=_histogram(frame["m_val"].to_numpy(dtype=float), bins),
        overall=overall,
        failed=failed
    )
