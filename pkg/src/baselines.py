"""
Nonadaptive reference estimators: linear-sweep exponential fit and fixed-tau MAP
"""

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import optimize

from .errors import DomainError, FitDiverged, InsufficientData
from .estimator import (AdaptivePolicy, EstimationConfig, EstimationRun, GammaPosterior, MeasurementSource,
                        SpamModel, run_estimation)
from .simulator import QubitSimulator, RateProcess
from .utils.logger import get_app_logger
from .utils.parallel import ordered_map
from .utils.rng import make_rng

logger = get_app_logger()

SWEEP_ORDERS = ("sequential", "interleaved")


@dataclass(frozen=True)
class SweepConfig:
    """Linear sweep tau_i = i * tau0 for i = 1..n_points, reps shots per point"""

    tau0: float
    n_points: int
    reps: int
    order: str = "interleaved"

    def __post_init__(self):
        if not self.tau0 > 0:
            raise DomainError(f"tau0 must be positive, got {self.tau0}")
        if self.n_points < 3:
            raise DomainError(f"a sweep needs at least 3 points, got {self.n_points}")
        if self.reps < 0:
            raise DomainError(f"reps must be >= 0, got {self.reps}")
        if self.order not in SWEEP_ORDERS:
            raise DomainError(f"order must be one of {SWEEP_ORDERS}, got {self.order!r}")

    @property
    def taus(self) -> np.ndarray:
        return self.tau0 * np.arange(1, self.n_points + 1)


@dataclass
class SweepData:
    taus: np.ndarray
    n_ones: np.ndarray
    n_total: np.ndarray

    @property
    def fractions(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.n_ones / self.n_total

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "tau_s": self.taus,
            "n_ones": self.n_ones.astype(int),
            "n_total": self.n_total.astype(int),
            "fraction": self.fractions,
        })


@dataclass(frozen=True)
class ExpFitResult:
    """Fit of p(tau) = offset + amplitude * exp(-rate * tau)"""

    t1: float
    t1_err: float
    rate: float
    rate_err: float
    offset: float
    amplitude: float
    alpha: float
    beta: float
    residual_norm: float

    def to_dict(self) -> Dict[str, float]:
        return {
            "t1_s": self.t1,
            "t1_err_s": self.t1_err,
            "rate_per_s": self.rate,
            "rate_err_per_s": self.rate_err,
            "offset": self.offset,
            "amplitude": self.amplitude,
            "alpha": self.alpha,
            "beta": self.beta,
            "residual_norm": self.residual_norm,
        }


# lower bound on share and on 1 - offset; keeps the fitted amplitude strictly positive
MIN_SHARE = 1e-9


def _decay_model(tau, offset, share, rate):
    # amplitude is parametrized as share * (1 - offset) so offset + amplitude <= 1
    return offset + share * (1.0 - offset) * np.exp(-rate * tau)


def _initial_guess(taus: np.ndarray, fractions: np.ndarray) -> Tuple[float, float, float]:
    n_tail = max(1, len(taus) // 10)
    offset = float(np.clip(np.mean(fractions[-n_tail:]), 1e-6, 1 - 1e-6))
    amplitude = float(fractions[0] - offset)
    share = float(np.clip(amplitude / (1.0 - offset), 1e-3, 1.0 - MIN_SHARE))

    excess = fractions - offset
    usable = excess > 0.05 * max(amplitude, 1e-9)
    rate = float("nan")
    if np.count_nonzero(usable) >= 2:
        slope, _ = np.polyfit(taus[usable], np.log(excess[usable]), 1)
        rate = -slope
    if not (math.isfinite(rate) and rate > 0):
        rate = 1.0 / float(np.mean(taus))
    return offset, share, rate


def fit_exponential(taus: Sequence[float], fractions: Sequence[float], n_per_point: Sequence[float]) -> ExpFitResult:
    """
    Weighted least-squares fit of a three-parameter exponential decay

    Args:
        taus: Waiting times (s)
        fractions: Observed fraction of m=1 outcomes at each tau
        n_per_point: Shots behind each fraction (sets the binomial weights)

    Returns:
        ExpFitResult with covariance-derived errors and implied SPAM

    Raises:
        InsufficientData: fewer than three usable points
        FitDiverged: solver failure, singular covariance or nonpositive rate
    """
    taus = np.asarray(taus, dtype=float)
    fractions = np.asarray(fractions, dtype=float)
    counts = np.broadcast_to(np.asarray(n_per_point, dtype=float), taus.shape)

    usable = counts > 0
    if np.count_nonzero(usable) < 3:
        raise InsufficientData(f"exponential fit needs >= 3 populated points, got {np.count_nonzero(usable)}")
    taus, fractions, counts = taus[usable], fractions[usable], counts[usable]

    # binomial standard errors, regularized so 0/1 fractions keep finite weight
    p_reg = (fractions * counts + 0.5) / (counts + 1.0)
    sigma = np.sqrt(p_reg * (1.0 - p_reg) / counts)

    p0 = _initial_guess(taus, fractions)
    try:
        popt, pcov = optimize.curve_fit(
            _decay_model, taus, fractions, p0=p0, sigma=sigma, absolute_sigma=True,
            bounds=([0.0, MIN_SHARE, 0.0], [1.0 - MIN_SHARE, 1.0, np.inf]), method="trf",
            xtol=1e-14, ftol=1e-14, gtol=1e-14, max_nfev=20000
        )
    except (RuntimeError, ValueError) as e:
        raise FitDiverged(f"exponential fit failed: {str(e)}")

    offset, share, rate = (float(v) for v in popt)
    if not rate > 0:
        raise FitDiverged(f"fit returned nonpositive rate {rate}")
    if not np.all(np.isfinite(pcov)):
        raise FitDiverged("fit covariance is singular")

    rate_err = math.sqrt(max(pcov[2, 2], 0.0))
    amplitude = share * (1.0 - offset)
    residual = (_decay_model(taus, *popt) - fractions) / sigma

    return ExpFitResult(
        t1=1.0 / rate,
        t1_err=rate_err / rate ** 2,
        rate=rate,
        rate_err=rate_err,
        offset=offset,
        amplitude=amplitude,
        alpha=1.0 - offset - amplitude,
        beta=offset,
        residual_norm=float(np.linalg.norm(residual))
    )


def collect_sweep(source: MeasurementSource, cfg: SweepConfig, rep_index: int = 0) -> SweepData:
    """Take cfg.reps shots at every sweep point in the configured order"""
    taus = cfg.taus
    n_ones = np.zeros(cfg.n_points)
    n_total = np.zeros(cfg.n_points)

    if cfg.order == "sequential":
        order = [(i, r) for i in range(cfg.n_points) for r in range(cfg.reps)]
    else:
        order = [(i, r) for r in range(cfg.reps) for i in range(cfg.n_points)]

    for shot_index, (i, _) in enumerate(order):
        record = source.probe(float(taus[i]), rep_index=rep_index, shot_index=shot_index)
        n_ones[i] += record.outcome
        n_total[i] += 1

    return SweepData(taus=taus, n_ones=n_ones, n_total=n_total)


def sweep_and_fit(source: MeasurementSource, cfg: SweepConfig) -> ExpFitResult:
    """Standard nonadaptive T1 experiment: linear sweep followed by an exponential fit"""
    data = collect_sweep(source, cfg)
    return fit_exponential(data.taus, data.fractions, data.n_total)


@dataclass(frozen=True)
class MapEstimate:
    rate: float

    @property
    def t1(self) -> float:
        return 1.0 / self.rate


def map_fixed_tau_counts(n_ones: float, n_total: float, tau: float, prior: GammaPosterior,
                         spam: SpamModel) -> MapEstimate:
    """
    Maximum a-posteriori rate from the number of m=1 outcomes at one waiting time

    Bounded scalar search over log(rate), sixteen e-folds either side of the
    prior mean.
    """
    if n_total < 1:
        raise InsufficientData("MAP estimate needs at least one shot")
    if not tau > 0:
        raise DomainError(f"tau must be positive, got {tau}")
    n_zeros = n_total - n_ones
    log_alpha = math.log(spam.alpha) if spam.alpha > 0 else -math.inf
    log_beta = math.log(spam.beta) if spam.beta > 0 else -math.inf
    log_contrast = math.log(spam.contrast)

    def neg_log_post(u: float) -> float:
        lam = math.exp(u)
        x = lam * tau
        log_p1 = np.logaddexp(log_beta, log_contrast - x)
        log_p0 = np.logaddexp(log_alpha, log_contrast + math.log(-math.expm1(-x)))
        value = (prior.k - 1.0) * u - prior.theta * lam
        if n_ones:
            value += n_ones * log_p1
        if n_zeros:
            value += n_zeros * log_p0
        return -float(value)

    center = math.log(prior.mean_rate)
    result = optimize.minimize_scalar(neg_log_post, bounds=(center - 16.0, center + 16.0), method="bounded",
                                      options={"xatol": 1e-12, "maxiter": 2000})
    return MapEstimate(rate=math.exp(result.x))


def map_fixed_tau(outcomes: Iterable[int], tau: float, prior: GammaPosterior, spam: SpamModel) -> MapEstimate:
    """MAP rate estimate from individual outcomes taken at the same waiting time"""
    shots = [int(m) for m in outcomes]
    if any(m not in (0, 1) for m in shots):
        raise DomainError("outcomes must be 0 or 1")
    return map_fixed_tau_counts(sum(shots), len(shots), tau, prior, spam)


@dataclass(frozen=True)
class EstimatorSpec:
    """Estimator entering a comparison study: adaptive with prefactor c, or fixed tau"""

    name: str
    kind: str
    c: Optional[float] = None
    tau: Optional[float] = None

    @classmethod
    def adaptive(cls, c: float = 1.0, name: Optional[str] = None) -> "EstimatorSpec":
        return cls(name=name or "adaptive", kind="adaptive", c=c)

    @classmethod
    def fixed(cls, tau: float, name: Optional[str] = None) -> "EstimatorSpec":
        return cls(name=name or f"fixed_{tau * 1e6:g}us", kind="fixed", tau=tau)


def _trial_estimates(t1: float, grid_index: int, trial: int, seed: int, n_shots: int, spam_sim: SpamModel,
                     spam_est: SpamModel, prior: GammaPosterior,
                     estimators: Sequence[EstimatorSpec]) -> List[Optional[float]]:
    estimates: List[Optional[float]] = []
    for j, spec in enumerate(estimators):
        if spec.kind == "adaptive":
            # same stream for every adaptive estimator: common random numbers
            sim = QubitSimulator(RateProcess(1.0 / t1), spam_sim, idle_time=0.0, seed=seed,
                                 stream=(grid_index, trial))
            config = EstimationConfig(prior=prior, spam=spam_est, policy=AdaptivePolicy(c=spec.c),
                                      n_shots=n_shots)
            run = run_estimation(sim, config, rep_index=trial)
            estimates.append(None if run.failed else run.t1_hat)
        else:
            rng = make_rng(seed, grid_index, trial, 1 + j)
            p_one = spam_sim.p_one(math.exp(-spec.tau / t1))
            n_ones = int(rng.binomial(n_shots, p_one))
            estimates.append(map_fixed_tau_counts(n_ones, n_shots, spec.tau, prior, spam_est).t1)
    return estimates


def compare_study(
    t1_grid: Sequence[float],
    trials: int,
    n_shots: int,
    spam_sim: SpamModel,
    spam_est: SpamModel,
    estimators: Sequence[EstimatorSpec],
    prior: GammaPosterior,
    seed: int = 0,
    max_workers: int = 1,
    progress: bool = False
) -> pd.DataFrame:
    """
    Monte-Carlo comparison of estimators on static sources

    Args:
        t1_grid: True T1 values (s)
        trials: Trials per grid point
        n_shots: Shots per trial
        spam_sim: SPAM used to simulate outcomes
        spam_est: SPAM assumed by the estimators
        estimators: Adaptive and fixed-tau estimators to compare
        prior: Gamma prior shared by all estimators
        seed: User seed
        max_workers: Worker threads for the trial fan-out
        progress: Show progress bars

    Returns:
        DataFrame with columns true_t1_s, estimator, mare, msre, bias, trials, failed
    """
    grid = list(t1_grid)
    if not grid or not estimators:
        raise DomainError("comparison grid and estimator list must be non-empty")
    if trials < 1:
        raise DomainError(f"trials must be >= 1, got {trials}")

    rows = []
    for grid_index, t1 in enumerate(grid):
        results = ordered_map(
            lambda trial: _trial_estimates(t1, grid_index, trial, seed, n_shots, spam_sim, spam_est,
                                           prior, estimators),
            range(trials), max_workers=max_workers, desc=f"T1={t1 * 1e6:.0f}us", progress=progress
        )
        for j, spec in enumerate(estimators):
            values = np.array([r[j] for r in results if r[j] is not None], dtype=float)
            failed = trials - len(values)
            rel = (t1 - values) / t1
            rows.append({
                "true_t1_s": t1,
                "estimator": spec.name,
                "mare": float(np.mean(np.abs(rel))) if len(values) else float("nan"),
                "msre": float(np.mean(rel ** 2)) if len(values) else float("nan"),
                "bias": float(np.mean(values / t1) - 1.0) if len(values) else float("nan"),
                "trials": len(values),
                "failed": failed,
            })
        logger.info(f"Comparison at T1={t1 * 1e6:.0f}us done ({trials} trials)")

    return pd.DataFrame(rows, columns=["true_t1_s", "estimator", "mare", "msre", "bias", "trials", "failed"])


@dataclass
class InterleavedResult:
    """Adaptive repetitions and the sweep shots taken between their shots"""

    runs: List[EstimationRun]
    sweep: SweepData
    fit: Optional[ExpFitResult] = None
    adaptive_mean: float = float("nan")
    adaptive_se: float = float("nan")
    z_score: float = float("nan")
    sweep_shots: List = field(default_factory=list)

    @property
    def agree(self) -> bool:
        """Adaptive mean and sweep fit lie within two joint standard errors"""
        return math.isfinite(self.z_score) and self.z_score <= 2.0


def run_interleaved(
    source: MeasurementSource,
    config: EstimationConfig,
    sweep: SweepConfig,
    n_reps: int
) -> InterleavedResult:
    """
    Alternate adaptive shots with linear-sweep shots on one source

    After every adaptive shot the next sweep point (cycling through
    tau_i = i * tau0) is measured, so both estimators see the same drift.
    """
    taus = sweep.taus
    n_ones = np.zeros(sweep.n_points)
    n_total = np.zeros(sweep.n_points)
    sweep_shots = []
    cursor = {"i": 0}

    runs: List[EstimationRun] = []
    for rep in range(n_reps):
        def take_sweep_shot(shot_index: int, rep: int = rep) -> None:
            i = cursor["i"]
            record = source.probe(float(taus[i]), rep_index=rep, shot_index=shot_index)
            n_ones[i] += record.outcome
            n_total[i] += 1
            sweep_shots.append(record)
            cursor["i"] = (i + 1) % sweep.n_points

        runs.append(run_estimation(source, config, rep_index=rep, between_shots=take_sweep_shot))

    data = SweepData(taus=taus, n_ones=n_ones, n_total=n_total)
    result = InterleavedResult(runs=runs, sweep=data, sweep_shots=sweep_shots)
    if n_reps == 0:
        return result

    estimates = np.array([r.t1_hat for r in runs if not r.failed])
    if len(estimates):
        result.adaptive_mean = float(np.mean(estimates))
        result.adaptive_se = float(np.std(estimates, ddof=1) / math.sqrt(len(estimates))) if len(estimates) > 1 else float("nan")

    try:
        result.fit = fit_exponential(taus, data.fractions, n_total)
    except (InsufficientData, FitDiverged) as e:
        logger.warning(f"Sweep fit unavailable: {str(e)}")
        return result

    joint = math.sqrt(result.adaptive_se ** 2 + result.fit.t1_err ** 2)
    if joint > 0 and math.isfinite(joint):
        result.z_score = abs(result.adaptive_mean - result.fit.t1) / joint
    return result
