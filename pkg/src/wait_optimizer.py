"""
Optimal probing waiting time from binomial statistics
"""

import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
import pandas as pd
from scipy import optimize, special

from .errors import DomainError, NoMinimum
from .estimator import SpamModel
from .utils.logger import get_app_logger

logger = get_app_logger()

BRANCH_POINT = -1.0 / math.e
DEFAULT_BRACKET = (1e-3, 20.0)
CLOSED_FORM_CASES = ("n_limited_no_spam", "n_limited_beta0", "t0_beta0")


@dataclass(frozen=True)
class ExperimentBudget:
    """
    Resources available to an estimation

    Exactly one of total_time and n_shots is set; it decides whether the
    experiment is time-limited or shot-limited.
    """

    idle_time: float = 0.0
    total_time: Optional[float] = None
    n_shots: Optional[int] = None

    def __post_init__(self):
        if self.idle_time < 0:
            raise DomainError(f"idle_time must be >= 0, got {self.idle_time}")
        if (self.total_time is None) == (self.n_shots is None):
            raise DomainError("exactly one of total_time and n_shots must be given")
        if self.total_time is not None and not self.total_time > 0:
            raise DomainError(f"total_time must be positive, got {self.total_time}")
        if self.n_shots is not None and self.n_shots < 1:
            raise DomainError(f"n_shots must be >= 1, got {self.n_shots}")

    @property
    def time_limited(self) -> bool:
        return self.total_time is not None


@dataclass(frozen=True)
class TauOptimum:
    tau_opt: float
    c_opt: float
    objective_value: float
    degenerate: bool = False


def lambert_w0(x: float) -> float:
    """
    Principal branch of the Lambert W function

    Args:
        x: Argument, x >= -1/e

    Returns:
        w with w * exp(w) = x
    """
    if x < BRANCH_POINT:
        # tolerate rounding of arguments built as -1/e
        if x > BRANCH_POINT * (1.0 + 1e-15):
            return -1.0
        raise DomainError(f"lambert_w0 is undefined for x < -1/e, got {x}")
    if x == BRANCH_POINT:
        return -1.0
    return float(special.lambertw(x, 0, tol=1e-15).real)


def _survival_prob(x: float, spam: SpamModel) -> float:
    return spam.beta + spam.contrast * math.exp(-x)


def _log_sigma_sq(x: float, t_tilde: float, time_limited: bool, spam: SpamModel) -> float:
    """log of the squared objective in dimensionless units x = gamma1 * tau"""
    p = _survival_prob(x, spam)
    variance = p * (1.0 - p)
    if not variance > 0:
        raise DomainError(f"binomial variance vanishes at gamma1*tau={x}")
    value = math.log(variance) - 2.0 * math.log(spam.contrast * x) + 2.0 * x
    if time_limited:
        value += math.log(x + t_tilde)
    return value


def _dlog_sigma_sq(x: float, t_tilde: float, time_limited: bool, spam: SpamModel) -> float:
    p = _survival_prob(x, spam)
    dp = -spam.contrast * math.exp(-x)
    grad = dp / p - dp / (1.0 - p) - 2.0 / x + 2.0
    if time_limited:
        grad += 1.0 / (x + t_tilde)
    return grad


def expected_sigma(tau: float, gamma1: float, budget: ExperimentBudget, spam: SpamModel) -> float:
    """
    Expected standard deviation of the rate estimate for a fixed waiting time

    Args:
        tau: Waiting time (s)
        gamma1: Decay rate (1/s)
        budget: Time or shot budget with per-cycle idle time
        spam: Misclassification model

    Returns:
        Expected std of the estimated rate (1/s)
    """
    if not tau > 0:
        raise DomainError(f"tau must be positive, got {tau}")
    if not gamma1 > 0:
        raise DomainError(f"gamma1 must be positive, got {gamma1}")

    decay = math.exp(-gamma1 * tau)
    p = spam.beta + spam.contrast * decay
    variance = p * (1.0 - p)
    if not variance > 0:
        raise DomainError(f"outcome probability is {p} at tau={tau}; variance vanishes")

    slope = spam.contrast * tau * decay
    if budget.time_limited:
        return math.sqrt(tau + budget.idle_time) * math.sqrt(variance) / (slope * math.sqrt(budget.total_time))
    return math.sqrt(variance) / (slope * math.sqrt(budget.n_shots))


def tau_opt_closed_form(case: str, gamma1: float, alpha: float = 0.0) -> TauOptimum:
    """
    Lambert-W solutions of the optimal waiting time

    Args:
        case: One of n_limited_no_spam, n_limited_beta0, t0_beta0
        gamma1: Decay rate (1/s)
        alpha: Misclassification of the excited state (beta is zero in these cases)

    Returns:
        TauOptimum; the objective is per unit sqrt(N) or sqrt(T)
    """
    if case not in CLOSED_FORM_CASES:
        raise DomainError(f"unknown closed-form case {case!r}; expected one of {CLOSED_FORM_CASES}")
    if not 0.0 <= alpha < 1.0:
        raise DomainError(f"alpha must be in [0, 1), got {alpha}")
    if not gamma1 > 0:
        raise DomainError(f"gamma1 must be positive, got {gamma1}")

    if case == "n_limited_no_spam":
        alpha = 0.0
        x = 2.0 + lambert_w0(-2.0 * math.exp(-2.0))
    elif case == "n_limited_beta0":
        x = 2.0 + lambert_w0(2.0 * (alpha - 1.0) * math.exp(-2.0))
    else:
        x = 1.0 + lambert_w0((alpha - 1.0) / math.e)

    spam = SpamModel(alpha=alpha, beta=0.0)
    if x <= 0.0:
        return TauOptimum(tau_opt=0.0, c_opt=0.0, objective_value=float("nan"), degenerate=True)

    if case == "t0_beta0":
        budget = ExperimentBudget(idle_time=0.0, total_time=1.0)
    else:
        budget = ExperimentBudget(n_shots=1)
    return TauOptimum(
        tau_opt=x / gamma1,
        c_opt=x,
        objective_value=expected_sigma(x / gamma1, gamma1, budget, spam)
    )


def tau_opt_numeric(
    gamma1: float,
    budget: ExperimentBudget,
    spam: SpamModel,
    bracket: tuple = DEFAULT_BRACKET,
    grid_points: int = 400
) -> TauOptimum:
    """
    Numerically minimize expected_sigma over the waiting time

    Works in x = gamma1 * tau. A log-spaced scan locates the sign change of the
    objective's derivative, which a bracketed root solve then refines.

    Raises:
        NoMinimum: the objective is monotone on the bracket
    """
    if not gamma1 > 0:
        raise DomainError(f"gamma1 must be positive, got {gamma1}")
    lo, hi = bracket
    t_tilde = gamma1 * budget.idle_time
    time_limited = budget.time_limited

    xs = np.geomspace(lo, hi, grid_points)
    grads = np.array([_dlog_sigma_sq(x, t_tilde, time_limited, spam) for x in xs])

    crossings = np.nonzero((grads[:-1] < 0) & (grads[1:] >= 0))[0]
    if crossings.size == 0:
        if grads[0] >= 0:
            edge = lo
        else:
            edge = hi
        value = expected_sigma(edge / gamma1, gamma1, budget, spam)
        raise NoMinimum(
            f"objective is monotone on [{lo}, {hi}]/gamma1; boundary at c={edge}",
            boundary_tau=edge / gamma1,
            boundary_value=value
        )

    # keep the lowest if the scan finds several minima
    candidates = []
    for i in crossings:
        a, b = xs[i], xs[i + 1]
        if grads[i + 1] == 0.0:
            x = b
        else:
            x = optimize.brentq(_dlog_sigma_sq, a, b, args=(t_tilde, time_limited, spam), xtol=1e-14, rtol=1e-15)
        candidates.append((_log_sigma_sq(x, t_tilde, time_limited, spam), x))
    _, x_best = min(candidates)

    tau = x_best / gamma1
    return TauOptimum(tau_opt=tau, c_opt=x_best, objective_value=expected_sigma(tau, gamma1, budget, spam))


def c_for_idle_time(idle_time: float, reference_t1: float, spam: SpamModel) -> float:
    """Time-limited optimal prefactor c at a reference T1"""
    budget = ExperimentBudget(idle_time=idle_time, total_time=1.0)
    return tau_opt_numeric(1.0 / reference_t1, budget, spam).c_opt


def export_c_table(gamma1_grid: Iterable[float], t_grid: Iterable[float], spam: SpamModel) -> pd.DataFrame:
    """
    Lookup table of the optimal prefactor c over decay rates and idle times

    Args:
        gamma1_grid: Decay rates (1/s), sorted
        t_grid: Idle times (s), sorted
        spam: Misclassification model

    Returns:
        DataFrame with columns gamma1_per_s, idle_s, c_opt (NaN where no interior minimum exists)
    """
    gammas = list(gamma1_grid)
    idles = list(t_grid)
    if not gammas or not idles:
        raise DomainError("c-table grids must be non-empty")
    if gammas != sorted(gammas) or idles != sorted(idles):
        raise DomainError("c-table grids must be sorted")

    rows = []
    for gamma1 in gammas:
        for idle in idles:
            budget = ExperimentBudget(idle_time=idle, total_time=1.0)
            try:
                c_opt = tau_opt_numeric(gamma1, budget, spam).c_opt
            except NoMinimum as e:
                logger.warning(f"No interior optimum at gamma1={gamma1:.4g}/s, t={idle:.4g}s: {str(e)}")
                c_opt = float("nan")
            rows.append({"gamma1_per_s": gamma1, "idle_s": idle, "c_opt": c_opt})

    return pd.DataFrame(rows, columns=["gamma1_per_s", "idle_s", "c_opt"])


def tau_opt_vs_idle(gamma1: float, t_grid: Iterable[float], spam: SpamModel) -> pd.DataFrame:
    """Optimal waiting time as a function of idle time at fixed decay rate"""
    rows = []
    for idle in t_grid:
        budget = ExperimentBudget(idle_time=idle, total_time=1.0)
        try:
            opt = tau_opt_numeric(gamma1, budget, spam)
            rows.append({"idle_s": idle, "tau_opt_s": opt.tau_opt, "c_opt": opt.c_opt,
                         "sigma_sqrt_t": opt.objective_value})
        except NoMinimum:
            rows.append({"idle_s": idle, "tau_opt_s": float("nan"), "c_opt": float("nan"),
                         "sigma_sqrt_t": float("nan")})
    return pd.DataFrame(rows, columns=["idle_s", "tau_opt_s", "c_opt", "sigma_sqrt_t"])
