"""
Adaptive Bayesian estimator for the qubit relaxation rate
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Protocol, Tuple

from scipy import optimize, special, stats

from .errors import DomainError, NumericalError, ZeroEvidence
from .utils.logger import get_app_logger

logger = get_app_logger()

# Upper bound on c: 2 + W0(-2/e^2), the shot-limited optimum without SPAM errors
C_MAX = 2.0 + float(special.lambertw(-2.0 * math.exp(-2.0), 0).real)

DEFAULT_TAU_MIN = 1e-6
DEFAULT_TAU_MAX = 5e-3
QUANTILE_TOL = 1e-10


@dataclass(frozen=True)
class SpamModel:
    """
    State-preparation-and-measurement misclassification probabilities

    Attributes:
        alpha: P(read 0 | qubit in |1>)
        beta: P(read 1 | qubit in |0>)
    """

    alpha: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.alpha < 1.0 and 0.0 <= self.beta < 1.0):
            raise DomainError(f"SPAM probabilities must lie in [0, 1), got alpha={self.alpha}, beta={self.beta}")
        if self.alpha + self.beta >= 1.0:
            raise DomainError(f"alpha + beta must be < 1, got {self.alpha + self.beta}")

    @property
    def contrast(self) -> float:
        return 1.0 - self.alpha - self.beta

    def a(self, m: int) -> float:
        """Constant term of the likelihood for outcome m"""
        return (1 - m) * (1.0 - self.beta) + m * self.beta

    def b(self, m: int) -> float:
        """Coefficient of exp(-gamma1 * tau) in the likelihood for outcome m"""
        return (1 - 2 * m) * self.contrast

    def p_one(self, survival: float) -> float:
        """Probability of reading 1 given the excited-state survival probability"""
        return self.beta + self.contrast * survival


def _check_outcome(m: int) -> int:
    if m not in (0, 1):
        raise DomainError(f"outcome must be 0 or 1, got {m!r}")
    return int(m)


def likelihood(m: int, gamma1: float, tau: float, spam: SpamModel) -> float:
    """
    Probability of outcome m after waiting tau at decay rate gamma1

    Args:
        m: Measured outcome (0 or 1)
        gamma1: Decay rate (1/s)
        tau: Waiting time (s)
        spam: Misclassification model

    Returns:
        a_m - b_m * exp(-gamma1 * tau)
    """
    m = _check_outcome(m)
    if tau < 0 or gamma1 < 0:
        raise DomainError(f"tau and gamma1 must be non-negative, got tau={tau}, gamma1={gamma1}")
    return spam.a(m) - spam.b(m) * math.exp(-gamma1 * tau)


@dataclass(frozen=True, slots=True)
class GammaPosterior:
    """
    Gamma belief over the decay rate, pdf proportional to x^(k-1) exp(-theta x)

    Attributes:
        k: Shape (dimensionless)
        theta: Parameter multiplying the rate in the exponent (s)
    """

    k: float
    theta: float

    def __post_init__(self):
        if not (math.isfinite(self.k) and math.isfinite(self.theta) and self.k > 0 and self.theta > 0):
            raise DomainError(f"gamma posterior needs finite k > 0 and theta > 0, got k={self.k}, theta={self.theta}")

    @property
    def mean_rate(self) -> float:
        return self.k / self.theta

    @property
    def rate_std(self) -> float:
        return math.sqrt(self.k) / self.theta

    @property
    def t1_hat(self) -> float:
        """Point estimate of T1 = theta / k"""
        return self.theta / self.k

    @property
    def t1_std(self) -> float:
        """Reported uncertainty of T1, theta * k^(-3/2)"""
        return self.theta * self.k ** -1.5

    @property
    def t1_median(self) -> float:
        return 1.0 / self.quantile_rate(0.5)

    def distribution(self):
        """Frozen scipy distribution of the rate"""
        return stats.gamma(a=self.k, scale=1.0 / self.theta)

    def pdf(self, rate):
        return self.distribution().pdf(rate)

    def cdf(self, rate):
        return self.distribution().cdf(rate)

    def logpdf(self, rate: float) -> float:
        """Scalar log density of the rate, without building a scipy distribution"""
        if rate <= 0.0:
            return -math.inf
        return (self.k * math.log(self.theta) + (self.k - 1.0) * math.log(rate) - self.theta * rate
                - math.lgamma(self.k))

    def quantile_rate(self, p: float) -> float:
        """
        Inverse CDF of the rate via the regularized incomplete gamma function

        Falls back to bracketed bisection when the direct inversion is not finite.
        """
        if not 0.0 < p < 1.0:
            raise DomainError(f"quantile level must be in (0, 1), got {p}")

        x = float(special.gammaincinv(self.k, p))
        if math.isfinite(x) and x > 0 and abs(special.gammainc(self.k, x) - p) <= QUANTILE_TOL:
            return x / self.theta

        hi = max(1.0, self.k)
        while special.gammainc(self.k, hi) < p:
            hi *= 2.0
        x = optimize.brentq(lambda u: special.gammainc(self.k, u) - p, 0.0, hi, xtol=1e-300, rtol=1e-15)
        return x / self.theta


def credible_interval(posterior: GammaPosterior, level: float) -> Tuple[float, float]:
    """
    Equal-tailed credible interval for T1 = 1 / rate

    Args:
        posterior: Current belief
        level: Probability mass inside the interval, in (0, 1)

    Returns:
        (lower, upper) bounds on T1 in seconds
    """
    if not 0.0 < level < 1.0:
        raise DomainError(f"credible level must be in (0, 1), got {level}")

    rate_lo = posterior.quantile_rate(0.5 * (1.0 - level))
    rate_hi = posterior.quantile_rate(0.5 * (1.0 + level))
    return 1.0 / rate_hi, 1.0 / rate_lo


def update(prior: GammaPosterior, m: int, tau: float, spam: SpamModel) -> GammaPosterior:
    """
    Moment-matched Bayes update of the gamma belief after one shot

    Args:
        prior: Belief before the shot
        m: Measured outcome
        tau: Waiting time of the shot (s)
        spam: Misclassification model

    Returns:
        Gamma belief sharing mean and variance with the exact posterior

    Raises:
        ZeroEvidence: the outcome is impossible under the prior
    """
    m = _check_outcome(m)
    if tau < 0:
        raise DomainError(f"tau must be non-negative, got {tau}")

    k, theta = prior.k, prior.theta
    a, b = spam.a(m), spam.b(m)

    # conjugate case: likelihood is a pure exponential
    if a == 0.0:
        return GammaPosterior(k, theta + tau)

    r = theta / (theta + tau)
    evidence = a - b * r ** k
    if evidence <= 1e-15 * (abs(a) + abs(b)):
        raise ZeroEvidence(f"outcome m={m} at tau={tau:.3e}s has zero probability under (k={k:.4g}, theta={theta:.4g})")

    def f(j: float, g_j: float) -> float:
        return (j / theta) * (a - b * r ** (j + 1)) / g_j

    f_k = f(k, evidence)
    f_k1 = f(k + 1, a - b * r ** (k + 1))

    inv_theta = f_k1 - f_k
    inv_k = f_k1 / f_k - 1.0
    if not (inv_theta > 0 and inv_k > 0 and math.isfinite(inv_theta) and math.isfinite(inv_k)):
        raise NumericalError(f"moment matching produced a degenerate posterior (1/theta={inv_theta}, 1/k={inv_k})")

    return GammaPosterior(1.0 / inv_k, 1.0 / inv_theta)


@dataclass(frozen=True)
class AdaptivePolicy:
    """Waiting-time rule tau = c * T1_hat clamped to [tau_min, tau_max]"""

    c: float
    tau_min: float = DEFAULT_TAU_MIN
    tau_max: float = DEFAULT_TAU_MAX

    def __post_init__(self):
        if not 0.0 < self.c <= C_MAX:
            raise DomainError(f"c must lie in (0, {C_MAX:.4f}], got {self.c}")
        if not 0.0 < self.tau_min < self.tau_max:
            raise DomainError(f"need 0 < tau_min < tau_max, got [{self.tau_min}, {self.tau_max}]")


def next_tau(posterior: GammaPosterior, policy: AdaptivePolicy) -> float:
    """Waiting time for the next shot"""
    return min(max(policy.c * posterior.t1_hat, policy.tau_min), policy.tau_max)


@dataclass(frozen=True, slots=True)
class ProbeRecord:
    """
    One probe cycle

    Attributes:
        tau: Waiting time (s)
        outcome: Measured bit
        lab_time: Lab clock at shot start (s)
        rep_index: Repetition the shot belongs to
        shot_index: Position inside the repetition
        gamma_eff: Time-averaged true rate over the wait, when known (1/s)
    """

    tau: float
    outcome: int
    lab_time: float
    rep_index: int = 0
    shot_index: int = 0
    gamma_eff: Optional[float] = None

    def __post_init__(self):
        if not self.tau > 0:
            raise DomainError(f"probe waiting time must be positive, got {self.tau}")
        _check_outcome(self.outcome)


class MeasurementSource(Protocol):
    """Anything that answers single-shot queries and keeps a lab clock"""

    @property
    def lab_time(self) -> float:
        ...

    def probe(self, tau: float, rep_index: int = 0, shot_index: int = 0) -> ProbeRecord:
        ...


@dataclass(frozen=True)
class EstimationConfig:
    """
    Settings for one estimation repetition

    n_shots caps the repetition; time_budget and target_std stop it early
    when given.
    """

    prior: GammaPosterior
    spam: SpamModel
    policy: AdaptivePolicy
    n_shots: int
    time_budget: Optional[float] = None
    target_std: Optional[float] = None

    def __post_init__(self):
        if self.n_shots < 1:
            raise DomainError(f"n_shots must be >= 1, got {self.n_shots}")
        if self.time_budget is not None and not self.time_budget > 0:
            raise DomainError(f"time_budget must be positive, got {self.time_budget}")
        if self.target_std is not None and not self.target_std > 0:
            raise DomainError(f"target_std must be positive, got {self.target_std}")


@dataclass
class EstimationRun:
    """Result of one repetition: every record and the posterior after it"""

    prior: GammaPosterior
    spam: SpamModel
    policy: AdaptivePolicy
    n_shots: int
    rep_index: int = 0
    start_time: float = 0.0
    end_time: float = 0.0
    posterior_trace: List[GammaPosterior] = field(default_factory=list)
    records: List[ProbeRecord] = field(default_factory=list)
    failed: bool = False
    error: Optional[str] = None

    @property
    def final(self) -> GammaPosterior:
        return self.posterior_trace[-1] if self.posterior_trace else self.prior

    @property
    def t1_hat(self) -> float:
        return self.final.t1_hat

    @property
    def elapsed(self) -> float:
        return self.end_time - self.start_time

    @property
    def shots_taken(self) -> int:
        return len(self.records)


def run_estimation(
    source: MeasurementSource,
    config: EstimationConfig,
    rep_index: int = 0,
    between_shots: Optional[Callable[[int], None]] = None
) -> EstimationRun:
    """
    Run one adaptive estimation repetition from the configured prior

    Args:
        source: Measurement source answering tau -> outcome
        config: Prior, SPAM model, policy and stop rules
        rep_index: Repetition number stamped on every record
        between_shots: Optional hook called with the shot index after each update

    Returns:
        EstimationRun; on ZeroEvidence the run is flagged failed and stops
    """
    run = EstimationRun(
        prior=config.prior,
        spam=config.spam,
        policy=config.policy,
        n_shots=config.n_shots,
        rep_index=rep_index,
        start_time=source.lab_time
    )
    posterior = config.prior

    for shot_index in range(config.n_shots):
        tau = next_tau(posterior, config.policy)
        record = source.probe(tau, rep_index=rep_index, shot_index=shot_index)

        try:
            posterior = update(posterior, record.outcome, record.tau, config.spam)
        except ZeroEvidence as e:
            run.failed = True
            run.error = str(e)
            logger.warning(f"Repetition {rep_index} aborted at shot {shot_index}: {str(e)}")
            break

        run.records.append(record)
        run.posterior_trace.append(posterior)

        if between_shots is not None:
            between_shots(shot_index)

        if config.time_budget is not None and source.lab_time - run.start_time >= config.time_budget:
            break
        if config.target_std is not None and posterior.t1_std <= config.target_std:
            break

    run.end_time = source.lab_time
    return run


def run_repetitions(source: MeasurementSource, config: EstimationConfig, n_reps: int,
                    first_rep: int = 0) -> List[EstimationRun]:
    """Back-to-back repetitions on one source; each starts again from the prior"""
    return [run_estimation(source, config, rep_index=first_rep + i) for i in range(n_reps)]


def posterior_row(lab_time: float, posterior: GammaPosterior, level: float) -> Dict[str, float]:
    """Trace CSV row for one posterior"""
    lo, hi = credible_interval(posterior, level)
    return {
        "lab_time_s": lab_time,
        "k": posterior.k,
        "theta_s": posterior.theta,
        "t1_hat_s": posterior.t1_hat,
        "ci_lo_s": lo,
        "ci_hi_s": hi,
    }
