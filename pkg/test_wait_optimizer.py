"""
Tests for the optimal waiting time: closed forms, numeric minimizer and c-table
"""

import math

import numpy as np
import pytest

from src.errors import DomainError, NoMinimum
from src.estimator import C_MAX, SpamModel
from src.wait_optimizer import (BRANCH_POINT, ExperimentBudget, c_for_idle_time, expected_sigma, export_c_table,
                                lambert_w0, tau_opt_closed_form, tau_opt_numeric, tau_opt_vs_idle)

LAB_SPAM = SpamModel(alpha=0.11, beta=0.14)
REFERENCE_T1 = 100e-6


def test_lambert_w0_values():
    assert lambert_w0(0.0) == 0.0
    assert lambert_w0(math.e) == pytest.approx(1.0, rel=1e-14)
    assert lambert_w0(BRANCH_POINT) == -1.0
    w = lambert_w0(-0.2)
    assert w * math.exp(w) == pytest.approx(-0.2, rel=1e-13)


def test_lambert_w0_rejects_below_branch_point():
    with pytest.raises(DomainError):
        lambert_w0(-0.5)


def test_shot_limited_no_spam_constant():
    opt = tau_opt_closed_form("n_limited_no_spam", gamma1=1e4)
    assert opt.c_opt == pytest.approx(1.5936, abs=1e-4)
    assert opt.c_opt == pytest.approx(C_MAX, rel=1e-12)
    assert opt.tau_opt == pytest.approx(opt.c_opt / 1e4)
    assert not opt.degenerate


@pytest.mark.parametrize("gamma1", [1e3, 6.3e3, 2e4])
def test_numeric_matches_no_spam_closed_form(gamma1):
    numeric = tau_opt_numeric(gamma1, ExperimentBudget(n_shots=100), SpamModel())
    closed = tau_opt_closed_form("n_limited_no_spam", gamma1)
    assert numeric.tau_opt == pytest.approx(closed.tau_opt, rel=1e-6)


@pytest.mark.parametrize("alpha", [0.05, 0.11])
def test_numeric_matches_beta0_closed_forms(alpha):
    spam = SpamModel(alpha=alpha, beta=0.0)
    gamma1 = 1.0 / REFERENCE_T1

    shots = tau_opt_numeric(gamma1, ExperimentBudget(n_shots=1), spam)
    assert shots.c_opt == pytest.approx(tau_opt_closed_form("n_limited_beta0", gamma1, alpha).c_opt, rel=1e-6)

    timed = tau_opt_numeric(gamma1, ExperimentBudget(total_time=1.0), spam)
    closed = tau_opt_closed_form("t0_beta0", gamma1, alpha)
    assert timed.c_opt == pytest.approx(closed.c_opt, rel=1e-6)
    assert closed.c_opt == pytest.approx(1.0 + lambert_w0((alpha - 1.0) / math.e), rel=1e-12)


def test_time_limited_without_spam_is_degenerate():
    opt = tau_opt_closed_form("t0_beta0", gamma1=1e4, alpha=0.0)
    assert opt.degenerate
    assert opt.tau_opt == 0.0


def test_unknown_closed_form_case():
    with pytest.raises(DomainError):
        tau_opt_closed_form("t_limited_everything", 1e4)


def test_c_at_long_idle_time():
    assert c_for_idle_time(345e-6, REFERENCE_T1, LAB_SPAM) == pytest.approx(0.98, abs=0.05)


def test_c_at_short_overheads():
    assert c_for_idle_time(12.7e-6, REFERENCE_T1, LAB_SPAM) == pytest.approx(0.51, abs=0.05)


def test_c_at_hardware_idle_time():
    c = c_for_idle_time(23.2e-6, REFERENCE_T1, LAB_SPAM)
    assert c == pytest.approx(0.585, abs=0.01)
    assert c > c_for_idle_time(12.7e-6, REFERENCE_T1, LAB_SPAM)


def test_c_grows_with_idle_time():
    cs = [c_for_idle_time(t, REFERENCE_T1, LAB_SPAM) for t in (0.0, 10e-6, 50e-6, 200e-6, 1e-3)]
    assert all(np.diff(cs) > 0)


def test_numeric_optimum_is_a_minimum():
    budget = ExperimentBudget(idle_time=23.2e-6, total_time=1.0)
    gamma1 = 1.0 / REFERENCE_T1
    opt = tau_opt_numeric(gamma1, budget, LAB_SPAM)
    for factor in (0.9, 1.1):
        assert expected_sigma(opt.tau_opt * factor, gamma1, budget, LAB_SPAM) > opt.objective_value


@pytest.mark.parametrize("scale", [0.1, 7.0])
@pytest.mark.parametrize("budget", [ExperimentBudget(idle_time=23.2e-6, total_time=1.0),
                                    ExperimentBudget(idle_time=23.2e-6, n_shots=50)])
def test_tau_opt_scales_with_rate(budget, scale):
    gamma1 = 1.0 / REFERENCE_T1
    base = tau_opt_numeric(gamma1, budget, LAB_SPAM)
    rescaled_budget = ExperimentBudget(idle_time=budget.idle_time / scale, total_time=budget.total_time,
                                       n_shots=budget.n_shots)
    rescaled = tau_opt_numeric(gamma1 * scale, rescaled_budget, LAB_SPAM)

    assert rescaled.tau_opt == pytest.approx(base.tau_opt / scale, rel=1e-9)
    assert rescaled.c_opt == pytest.approx(base.c_opt, rel=1e-9)


def test_monotone_bracket_raises_no_minimum():
    with pytest.raises(NoMinimum) as exc_info:
        tau_opt_numeric(1e4, ExperimentBudget(n_shots=10), LAB_SPAM, bracket=(1e-3, 1e-2))
    assert exc_info.value.boundary_tau == pytest.approx(1e-2 / 1e4)
    assert exc_info.value.boundary_value > 0


def test_expected_sigma_scaling():
    spam = SpamModel()
    one = expected_sigma(100e-6, 1e4, ExperimentBudget(n_shots=1), spam)
    hundred = expected_sigma(100e-6, 1e4, ExperimentBudget(n_shots=100), spam)
    assert hundred == pytest.approx(one / 10.0)


def test_budget_requires_exactly_one_limit():
    with pytest.raises(DomainError):
        ExperimentBudget(total_time=1.0, n_shots=10)
    with pytest.raises(DomainError):
        ExperimentBudget()


def test_c_table_shape_and_values():
    gammas = [5e3, 1e4]
    idles = [0.0, 23.2e-6, 345e-6]
    table = export_c_table(gammas, idles, LAB_SPAM)

    assert list(table.columns) == ["gamma1_per_s", "idle_s", "c_opt"]
    assert len(table) == 6
    row = table[(table.gamma1_per_s == 1e4) & (table.idle_s == 345e-6)].iloc[0]
    assert row.c_opt == pytest.approx(0.98, abs=0.05)


def test_c_table_requires_sorted_grids():
    with pytest.raises(DomainError):
        export_c_table([1e4, 5e3], [0.0], LAB_SPAM)


def test_tau_opt_vs_idle_curve():
    curve = tau_opt_vs_idle(1e4, [0.0, 50e-6, 500e-6], LAB_SPAM)
    assert list(curve.columns) == ["idle_s", "tau_opt_s", "c_opt", "sigma_sqrt_t"]
    assert curve.tau_opt_s.is_monotonic_increasing
    assert curve.c_opt.iloc[1] == pytest.approx(curve.tau_opt_s.iloc[1] * 1e4)
