"""
Exact posteriors and approximation diagnostics for the gamma estimator
"""

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, List, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import integrate, optimize, stats

from .errors import (DomainError, MomentMatchingError, NumericalError, QuadratureFailure, TooManyShots,
                     ZeroEvidence)
from .estimator import EstimationRun, GammaPosterior, ProbeRecord, SpamModel, credible_interval, update
from .utils.logger import get_app_logger

logger = get_app_logger()

MAX_EXACT_RECORDS = 20
TAIL_MASS = 1e-10
KL_ABS_TOL = 1e-6
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

RecordLike = Union[ProbeRecord, Tuple[float, int]]


def _as_pair(record: RecordLike) -> Tuple[float, int]:
    if isinstance(record, ProbeRecord):
        return record.tau, record.outcome
    tau, m = record
    return float(tau), int(m)


@dataclass(frozen=True)
class GammaMixture:
    """
    Signed mixture of gamma densities sharing one shape

    Weights sum to one; individual weights may be negative.
    """

    weights: np.ndarray
    shapes: np.ndarray
    thetas: np.ndarray

    @classmethod
    def from_posterior(cls, posterior: GammaPosterior) -> "GammaMixture":
        return cls(np.array([1.0]), np.array([posterior.k]), np.array([posterior.theta]))

    def __len__(self) -> int:
        return len(self.weights)

    @property
    def mean(self) -> float:
        return float(np.sum(self.weights * self.shapes / self.thetas))

    @property
    def second_moment(self) -> float:
        return float(np.sum(self.weights * self.shapes * (self.shapes + 1.0) / self.thetas ** 2))

    @property
    def variance(self) -> float:
        return self.second_moment - self.mean ** 2

    def _components(self, fn, x):
        x = np.asarray(x, dtype=float)
        values = fn(x[..., None], a=self.shapes, scale=1.0 / self.thetas)
        return values @ self.weights

    def pdf(self, x):
        return self._components(stats.gamma.pdf, x)

    def pdf_scalar(self, x: float) -> float:
        if x <= 0.0:
            return 0.0
        lx = math.log(x)
        total = 0.0
        for w, k, theta in zip(self.weights.tolist(), self.shapes.tolist(), self.thetas.tolist()):
            total += w * math.exp(k * math.log(theta) + (k - 1.0) * lx - theta * x - math.lgamma(k))
        return total

    def cdf(self, x):
        return self._components(stats.gamma.cdf, x)

    def sf(self, x):
        return self._components(stats.gamma.sf, x)

    def upper_rate(self, tail_mass: float = TAIL_MASS) -> float:
        """Rate above which at most tail_mass of the probability remains"""
        sd = math.sqrt(max(self.variance, 0.0))
        hi = self.mean + 10.0 * sd
        while float(self.sf(hi)) > tail_mass:
            hi *= 2.0
        lo = self.mean
        if float(self.sf(lo)) <= tail_mass:
            return lo
        return optimize.brentq(lambda x: float(self.sf(x)) - tail_mass, lo, hi, rtol=1e-12)

    def min_pdf_on_grid(self, points: int = 512) -> float:
        grid = np.linspace(0.0, self.upper_rate(), points)[1:]
        return float(np.min(self.pdf(grid)))


def _merge(weights: List[float], thetas: List[float]) -> Tuple[List[float], List[float]]:
    order = np.argsort(thetas)
    merged_w: List[float] = []
    merged_t: List[float] = []
    for idx in order:
        w, t = weights[idx], thetas[idx]
        if merged_t and abs(t - merged_t[-1]) <= 1e-12 * t:
            merged_w[-1] += w
        else:
            merged_w.append(w)
            merged_t.append(t)
    return merged_w, merged_t


def exact_posterior(prior: GammaPosterior, records: Sequence[RecordLike], spam: SpamModel) -> GammaMixture:
    """
    Exact posterior after a sequence of shots, as a signed gamma mixture

    Each shot multiplies the density by a - b * exp(-rate * tau), which splits
    every component (w, k, theta) into (a w, k, theta) and
    (-b w (theta / (theta + tau))^k, k, theta + tau). Components with equal
    theta are merged.

    Raises:
        TooManyShots: more than MAX_EXACT_RECORDS records
        ZeroEvidence: the record sequence has zero probability
    """
    pairs = [_as_pair(r) for r in records]
    if len(pairs) > MAX_EXACT_RECORDS:
        raise TooManyShots(f"exact posterior supports at most {MAX_EXACT_RECORDS} records, got {len(pairs)}")

    k = prior.k
    weights: List[float] = [1.0]
    thetas: List[float] = [prior.theta]

    for tau, m in pairs:
        a, b = spam.a(m), spam.b(m)
        new_w: List[float] = []
        new_t: List[float] = []
        for w, theta in zip(weights, thetas):
            if a != 0.0:
                new_w.append(w * a)
                new_t.append(theta)
            if b != 0.0 and tau >= 0:
                new_w.append(-w * b * (theta / (theta + tau)) ** k)
                new_t.append(theta + tau)
        weights, thetas = _merge(new_w, new_t)

    evidence = math.fsum(weights)
    if not evidence > 1e-300:
        raise ZeroEvidence(f"record sequence has zero probability under the prior (evidence={evidence})")

    mixture = GammaMixture(
        weights=np.array(weights) / evidence,
        shapes=np.full(len(weights), k),
        thetas=np.array(thetas)
    )

    lowest = mixture.min_pdf_on_grid()
    if lowest < -1e-8 * float(np.max(mixture.pdf(np.array([mixture.mean])))):
        raise NumericalError(f"mixture density is negative on the grid (min {lowest:.3e})")
    return mixture


def quadrature_moments(prior: GammaPosterior, records: Sequence[RecordLike], spam: SpamModel) -> Tuple[float, float]:
    """
    Posterior mean and variance of the rate by direct quadrature of prior x likelihood

    Independent of the mixture algebra; used to cross-check it.
    """
    pairs = [_as_pair(r) for r in records]
    dist = prior.distribution()

    def unnormalized(x: float) -> float:
        value = dist.pdf(x)
        for tau, m in pairs:
            value *= spam.a(m) - spam.b(m) * math.exp(-x * tau)
        return value

    upper = 60.0 * prior.k / prior.theta + 60.0 / prior.theta
    moments = []
    for power in (0, 1, 2):
        value, _ = integrate.quad(lambda x: unnormalized(x) * x ** power, 0.0, upper,
                                  points=[prior.mean_rate], limit=400, epsabs=0.0, epsrel=1e-12)
        moments.append(value)
    z, m1, m2 = moments
    if not z > 0:
        raise ZeroEvidence("quadrature evidence vanished")
    mean = m1 / z
    return mean, m2 / z - mean ** 2


def _inverse_mills(a: float) -> float:
    return math.exp(stats.norm.logpdf(a) - stats.norm.logsf(a))


def _truncnorm_moments(mu: float, s: float) -> Tuple[float, float]:
    a = -mu / s
    lam = _inverse_mills(a)
    return mu + s * lam, s * s * (1.0 + a * lam - lam * lam)


@dataclass(frozen=True)
class TruncatedNormal:
    """Normal(mu, scale) restricted to [0, inf)"""

    mu: float
    scale: float
    log_mass: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "log_mass", float(stats.norm.logsf(-self.mu / self.scale)))

    @property
    def mean(self) -> float:
        return _truncnorm_moments(self.mu, self.scale)[0]

    @property
    def variance(self) -> float:
        return _truncnorm_moments(self.mu, self.scale)[1]

    def logpdf(self, x: float) -> float:
        if x < 0.0:
            return -math.inf
        z = (x - self.mu) / self.scale
        return -0.5 * z * z - math.log(self.scale) - _LOG_SQRT_2PI - self.log_mass

    def distribution(self):
        return stats.truncnorm(a=-self.mu / self.scale, b=np.inf, loc=self.mu, scale=self.scale)


def match_truncated_normal(mean: float, variance: float, damping: float = 0.5, tol: float = 1e-10,
                           max_iter: int = 20000) -> TruncatedNormal:
    """
    Normal truncated to [0, inf) with the given mean and variance

    Solves the two moment equations by damped fixed-point iteration on
    (location, scale), with a root-finder fallback.

    Returns:
        TruncatedNormal
    """
    if not (mean > 0 and variance > 0):
        raise DomainError(f"need positive mean and variance, got {mean}, {variance}")
    if variance >= mean ** 2:
        raise MomentMatchingError("a normal truncated at zero cannot have std >= mean")

    mu, s = mean, math.sqrt(variance)
    converged = False
    for _ in range(max_iter):
        a = -mu / s
        lam = _inverse_mills(a)
        factor = 1.0 + a * lam - lam * lam
        if not factor > 0:
            break
        s_new = math.sqrt(variance / factor)
        mu_new = mean - s_new * lam
        mu_next = (1.0 - damping) * mu + damping * mu_new
        s_next = (1.0 - damping) * s + damping * s_new
        step = abs(mu_next - mu) + abs(s_next - s)
        mu, s = mu_next, s_next
        if step <= tol * (abs(mu) + s):
            converged = True
            break

    if not converged:
        def equations(params):
            m_hat, v_hat = _truncnorm_moments(params[0], math.exp(params[1]))
            return [m_hat / mean - 1.0, v_hat / variance - 1.0]

        solution = optimize.root(equations, [mu, math.log(s)], method="hybr", tol=1e-14)
        if not solution.success:
            raise MomentMatchingError(f"truncated-normal moment matching failed: {solution.message}")
        mu, s = float(solution.x[0]), math.exp(float(solution.x[1]))

    m_hat, v_hat = _truncnorm_moments(mu, s)
    if abs(m_hat / mean - 1.0) > 1e-8 or abs(v_hat / variance - 1.0) > 1e-8:
        raise MomentMatchingError("truncated-normal moments do not match after iteration")
    return TruncatedNormal(mu, s)


def kl_divergence(p_exact: GammaMixture, q_approx) -> float:
    """
    Kullback-Leibler divergence D(p || q) in nats

    Args:
        p_exact: Exact posterior
        q_approx: Approximation exposing a scalar logpdf

    Raises:
        QuadratureFailure: integration did not reach the tolerance
    """
    upper = p_exact.upper_rate()
    mean = p_exact.mean
    sd = math.sqrt(max(p_exact.variance, 0.0))
    points = sorted({x for x in (mean - sd, mean, mean + sd, mean + 3 * sd) if 0.0 < x < upper})

    def integrand(x: float) -> float:
        px = p_exact.pdf_scalar(x)
        if px <= 0.0:
            return 0.0
        return px * (math.log(px) - float(q_approx.logpdf(x)))

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            value, err = integrate.quad(integrand, 0.0, upper, points=points or None, limit=500,
                                        epsabs=1e-10, epsrel=1e-10)
        except integrate.IntegrationWarning as e:
            raise QuadratureFailure(f"KL quadrature did not converge: {str(e)}")

    if not math.isfinite(value) or err > KL_ABS_TOL:
        raise QuadratureFailure(f"KL quadrature error {err:.2e} exceeds tolerance")
    if -KL_ABS_TOL < value < 0.0:
        value = 0.0
    return value


def kl_scan(k_grid: Iterable[float], tau_over_theta_grid: Iterable[float], spam_grid: Iterable[float],
            m: int) -> pd.DataFrame:
    """
    KL divergence of the gamma and truncated-normal approximations after one shot

    The prior has theta = 1; divergences are invariant to rescaling theta.
    Each spam_grid value v means alpha = beta = v. Cells whose quadrature or
    moment matching fails are left empty.
    """
    rows = []
    for k in k_grid:
        prior = GammaPosterior(float(k), 1.0)
        for level in spam_grid:
            spam = SpamModel(alpha=float(level), beta=float(level))
            for ratio in tau_over_theta_grid:
                tau = float(ratio)
                row = {"k": float(k), "tau_over_theta": tau, "alpha": spam.alpha, "beta": spam.beta,
                       "outcome": m, "kl_gamma": float("nan"), "kl_truncnorm": float("nan")}
                try:
                    exact = exact_posterior(prior, [(tau, m)], spam)
                    approx = update(prior, m, tau, spam)
                    row["kl_gamma"] = kl_divergence(exact, approx)
                    row["kl_truncnorm"] = kl_divergence(exact, match_truncated_normal(exact.mean, exact.variance))
                except (QuadratureFailure, MomentMatchingError) as e:
                    logger.warning(f"KL cell k={k}, tau/theta={tau}, spam={level} missing: {str(e)}")
                rows.append(row)
    return pd.DataFrame(rows, columns=["k", "tau_over_theta", "alpha", "beta", "outcome", "kl_gamma",
                                       "kl_truncnorm"])


def frequentist_limit(t1: float, total_time: float) -> float:
    """Binomial-statistics floor on the T1 uncertainty: T1 * sqrt(T1 / T)"""
    if not total_time > 0:
        raise DomainError(f"total time must be positive, got {total_time}")
    return t1 * math.sqrt(t1 / total_time)


def frequentist_study(runs: Sequence[EstimationRun], groups: int = 4,
                      level: float = 0.68) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """
    Compare posterior uncertainties with the frequentist limit

    Args:
        runs: Completed estimation repetitions
        groups: Number of elapsed-time quantile groups
        level: Credible level whose interval width is the uncertainty dT1

    Returns:
        (per-run frame, per-group frame). The ratio column equals
        dT1 * sqrt(T) / T1_hat^(3/2).
    """
    rows = []
    for run in runs:
        if run.failed or not run.records:
            continue
        final = run.final
        lo, hi = credible_interval(final, level)
        limit = frequentist_limit(final.t1_hat, run.elapsed)
        rows.append({
            "rep_index": run.rep_index,
            "elapsed_s": run.elapsed,
            "t1_hat_s": final.t1_hat,
            "dt1_s": hi - lo,
            "limit_s": limit,
            "ratio": (hi - lo) / limit,
        })
    frame = pd.DataFrame(rows, columns=["rep_index", "elapsed_s", "t1_hat_s", "dt1_s", "limit_s", "ratio"])
    if frame.empty:
        return frame, pd.DataFrame(columns=["group", "elapsed_lo_s", "elapsed_hi_s", "runs", "mean_ratio"])

    labels = pd.qcut(frame["elapsed_s"], q=min(groups, len(frame)), labels=False, duplicates="drop")
    grouped = frame.groupby(labels)
    summary = pd.DataFrame({
        "group": sorted(labels.unique()),
        "elapsed_lo_s": grouped["elapsed_s"].min().values,
        "elapsed_hi_s": grouped["elapsed_s"].max().values,
        "runs": grouped.size().values,
        "mean_ratio": grouped["ratio"].mean().values,
    })
    return frame, summary
