"""
Detection of large T1 switches between consecutive short intervals
"""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .errors import DomainError
from .estimator import EstimationConfig, EstimationRun, MeasurementSource, SpamModel, run_estimation
from .utils.logger import get_app_logger
from .validation import poisson_binomial_cdf, poisson_binomial_sf

logger = get_app_logger()

EVENT_COLUMNS = ["time_s", "t1_left_s", "t1_right_s", "jump_s", "p_low", "p_high", "verified"]


@dataclass
class Interval:
    """Consecutive repetitions; even positions train, odd positions test"""

    start: float
    end: float
    runs: List[EstimationRun] = field(default_factory=list)

    @property
    def train(self) -> List[EstimationRun]:
        return self.runs[0::2]

    @property
    def test(self) -> List[EstimationRun]:
        return self.runs[1::2]

    @property
    def train_mean(self) -> float:
        estimates = [r.t1_hat for r in self.train]
        return float(np.mean(estimates)) if estimates else float("nan")

    @property
    def usable(self) -> bool:
        return bool(self.train) and any(r.records for r in self.test)


@dataclass
class SwitchReport:
    n_intervals: int
    n_pairs: int
    candidates: int
    verified: int
    duration_s: float
    events: pd.DataFrame

    @property
    def filtered_fraction(self) -> float:
        return self.candidates / self.n_pairs if self.n_pairs else 0.0

    @property
    def verified_fraction(self) -> float:
        return self.verified / self.candidates if self.candidates else 0.0

    @property
    def events_per_s(self) -> float:
        return self.verified / self.duration_s if self.duration_s > 0 else 0.0

    @property
    def mean_interevent_s(self) -> Optional[float]:
        return self.duration_s / self.verified if self.verified else None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n_intervals": self.n_intervals,
            "n_pairs": self.n_pairs,
            "candidates": self.candidates,
            "verified": self.verified,
            "filtered_fraction": self.filtered_fraction,
            "verified_fraction": self.verified_fraction,
            "duration_s": self.duration_s,
            "events_per_s": self.events_per_s,
            "mean_interevent_s": self.mean_interevent_s,
        }


def split_intervals(runs: Sequence[EstimationRun], interval_len: float) -> List[Interval]:
    """Group repetitions into intervals no longer than interval_len, cutting only between repetitions"""
    if not interval_len > 0:
        raise DomainError(f"interval_len must be positive, got {interval_len}")

    intervals: List[Interval] = []
    current: Optional[Interval] = None
    for run in runs:
        if current is None or run.end_time - current.start > interval_len:
            current = Interval(start=run.start_time, end=run.end_time)
            intervals.append(current)
        current.runs.append(run)
        current.end = run.end_time
    return intervals


def _shot_probabilities(runs: Sequence[EstimationRun], t1: float, spam: SpamModel) -> Tuple[List[float], int]:
    ps: List[float] = []
    ones = 0
    for run in runs:
        for record in run.records:
            ps.append(spam.p_one(math.exp(-record.tau / t1)))
            ones += record.outcome
    return ps, ones


def verify_pair(left: Interval, right: Interval, spam: SpamModel, level: float) -> Tuple[float, float, bool]:
    """
    Two one-sided tests on the held-out repetitions of a candidate pair

    With T_lo < T_hi the train means of the two intervals, the first test
    rejects "T1 of the low interval is at least T_hi" on the low interval's
    test shots, the second rejects "T1 of the high interval is at most T_lo"
    on the high interval's test shots.

    Returns:
        (p-value of the first test, p-value of the second, both rejected)
    """
    if left.train_mean <= right.train_mean:
        low, high = left, right
    else:
        low, high = right, left
    t_lo, t_hi = low.train_mean, high.train_mean

    ps_low, ones_low = _shot_probabilities(low.test, t_hi, spam)
    ps_high, ones_high = _shot_probabilities(high.test, t_lo, spam)

    p_low = poisson_binomial_cdf(ps_low, ones_low)
    p_high = poisson_binomial_sf(ps_high, ones_high)
    alpha = 1.0 - level
    return p_low, p_high, p_low <= alpha and p_high <= alpha


def detect_switches(
    runs: Sequence[EstimationRun],
    spam: SpamModel,
    interval_len: float = 0.2,
    band: Tuple[float, float] = (100e-6, 400e-6),
    min_jump: float = 100e-6,
    level: float = 0.975
) -> SwitchReport:
    """
    Find verified T1 switches between consecutive intervals

    Args:
        runs: Completed repetitions in time order
        spam: Readout model used for the tests
        interval_len: Maximum interval duration (s)
        band: Open range both train means must lie in (s)
        min_jump: Minimum difference of the train means (s)
        level: Confidence level of each one-sided test

    Returns:
        SwitchReport
    """
    if not band[0] < band[1]:
        raise DomainError(f"band must be increasing, got {band}")
    if not 0.0 < level < 1.0:
        raise DomainError(f"level must be in (0, 1), got {level}")

    completed = [r for r in runs if not r.failed and r.records]
    intervals = split_intervals(completed, interval_len)
    duration = (completed[-1].end_time - completed[0].start_time) if completed else 0.0

    events = []
    n_pairs = 0
    for left, right in zip(intervals, intervals[1:]):
        if not (left.usable and right.usable):
            continue
        n_pairs += 1
        t_left, t_right = left.train_mean, right.train_mean
        in_band = band[0] < t_left < band[1] and band[0] < t_right < band[1]
        if not in_band or abs(t_right - t_left) <= min_jump:
            continue

        p_low, p_high, verified = verify_pair(left, right, spam, level)
        events.append({
            "time_s": right.start,
            "t1_left_s": t_left,
            "t1_right_s": t_right,
            "jump_s": t_right - t_left,
            "p_low": p_low,
            "p_high": p_high,
            "verified": verified,
        })

    frame = pd.DataFrame(events, columns=EVENT_COLUMNS)
    verified_count = int(frame["verified"].sum()) if not frame.empty else 0
    report = SwitchReport(
        n_intervals=len(intervals),
        n_pairs=n_pairs,
        candidates=len(frame),
        verified=verified_count,
        duration_s=duration,
        events=frame
    )
    logger.info(
        f"Switch detection: {report.n_intervals} intervals, {report.candidates} candidates, "
        f"{report.verified} verified"
    )
    return report


def run_for_duration(source: MeasurementSource, config: EstimationConfig, duration: float,
                     first_rep: int = 0) -> List[EstimationRun]:
    """Back-to-back repetitions until the source's lab clock passes duration"""
    if not duration > 0:
        raise DomainError(f"duration must be positive, got {duration}")
    runs: List[EstimationRun] = []
    rep_index = first_rep
    end = source.lab_time + duration
    while source.lab_time < end:
        runs.append(run_estimation(source, config, rep_index=rep_index))
        rep_index += 1
    return runs
