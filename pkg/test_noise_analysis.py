"""
Tests for the PSD/Allan noise analysis of T1 traces
"""

import math
import warnings

import numpy as np
import pandas as pd
import pytest

from src.errors import DomainError, ModelSelectionAmbiguous, TraceTooShort
from src.noise_analysis import (AllanResult, NoiseFitModel, TraceAnalysis, UniformTrace, adev_lorentzian,
                                adev_one_over_f, adev_white, allan_deviation, analyze_trace, default_allan_taus,
                                fit_noise_model, moving_mean_band, synthesize_trace, welch_psd, window_series,
                                windowed_analysis)
from src.simulator import Fluctuator, RateProcess, sample_rate_trace
from src.utils.rng import make_rng

DT = 0.007
A_W = 3.3e-11
A_1F = 1.0e-10
A_L = 1.0e-9
GAMMA = 10.0
SPAN = 2 ** 16 * DT


@pytest.fixture(scope="module")
def reference_model():
    return NoiseFitModel(a_w=A_W, a_1f=A_1F, lorentzians=[(A_L, GAMMA)])


def test_welch_parseval_for_white_noise():
    sigma = 2e-5
    trace = UniformTrace(make_rng(1).normal(0.0, sigma, 2 ** 15), DT)
    freqs, psd = welch_psd(trace)
    df = freqs[1] - freqs[0]

    assert float(np.sum(psd) * df) == pytest.approx(sigma ** 2, rel=0.05)
    assert float(np.mean(psd)) == pytest.approx(2.0 * sigma ** 2 * DT, rel=0.05)
    assert freqs[0] > 0


def test_synthesized_white_level():
    trace = synthesize_trace(NoiseFitModel(a_w=A_W, a_1f=0.0), 2 ** 15, DT, make_rng(2))
    _, psd = welch_psd(trace)
    assert float(np.mean(psd)) == pytest.approx(A_W, rel=0.05)


def test_white_allan_deviation():
    trace = synthesize_trace(NoiseFitModel(a_w=A_W, a_1f=0.0), 2 ** 16, DT, make_rng(3))
    allan = allan_deviation(trace, taus=DT * np.array([1, 2, 4, 8, 16, 32, 64, 128, 256]))
    expected = adev_white(allan.taus, A_W)
    assert np.all(np.abs(allan.adev / expected - 1.0) < 0.10)


def test_one_over_f_allan_plateau():
    trace = synthesize_trace(NoiseFitModel(a_w=0.0, a_1f=A_1F), 2 ** 17, DT, make_rng(4))
    allan = allan_deviation(trace, taus=DT * np.array([4, 8, 16, 32, 64, 128, 256]))
    plateau = math.sqrt(2.0 * A_1F * math.log(2.0))
    assert adev_one_over_f(allan.taus, A_1F)[0] == pytest.approx(plateau)
    assert np.all(np.abs(allan.adev / plateau - 1.0) < 0.15)


def test_lorentzian_allan_matches_telegraph_simulation():
    delta = 2000.0
    gamma = 10.0
    dt = 0.01
    process = RateProcess(5000.0, [Fluctuator(rate_up=gamma / 2, rate_down=gamma / 2, delta_gamma=delta)])
    trace = UniformTrace(sample_rate_trace(process, dt, 2 ** 18, make_rng(5)), dt)

    taus = dt * np.array([1, 2, 5, 10, 20, 50, 100])
    allan = allan_deviation(trace, taus=taus)
    model = adev_lorentzian(allan.taus, delta ** 2 / 4.0, gamma)
    assert np.all(np.abs(allan.adev / model - 1.0) < 0.10)

    printed = adev_lorentzian(allan.taus, delta ** 2 / 4.0, gamma, as_printed=True)
    assert not np.allclose(printed, model)


def test_lorentzian_bracket_is_continuous_at_series_switch():
    below = adev_lorentzian(np.array([0.999e-4]), 1.0, 1.0)[0]
    above = adev_lorentzian(np.array([1.001e-4]), 1.0, 1.0)[0]
    assert below == pytest.approx(above, rel=1e-2)
    assert adev_lorentzian(np.array([1e-9]), 1.0, 1.0)[0] > 0


def test_white_as_printed_differs_by_sqrt_two():
    taus = np.array([0.1, 1.0])
    assert np.allclose(adev_white(taus, A_W, as_printed=True), math.sqrt(2.0) * adev_white(taus, A_W))


def test_default_allan_taus_are_sample_multiples():
    trace = UniformTrace(np.zeros(3000), 0.5)
    taus = default_allan_taus(trace)
    multiples = taus / 0.5
    assert np.allclose(multiples, np.round(multiples))
    assert taus[0] == 0.5
    assert taus[-1] <= 1000 * 0.5


def test_allan_rejects_long_averaging_time():
    trace = UniformTrace(np.zeros(300), 1.0)
    with pytest.raises(DomainError):
        allan_deviation(trace, taus=[150.0])


def test_short_trace_is_rejected():
    with pytest.raises(TraceTooShort):
        welch_psd(UniformTrace(np.zeros(10), 1.0))


def test_fit_recovers_exact_model(reference_model):
    freqs = np.logspace(-2, math.log10(0.5 / DT), 120)
    taus = np.geomspace(DT, SPAN / 3, 40)
    allan = AllanResult(taus, reference_model.adev(taus), np.ones(40, dtype=int))
    fit = fit_noise_model(freqs, reference_model.psd(freqs), allan, n_lorentzians=1, span=SPAN, dt=DT)

    assert fit.a_w == pytest.approx(A_W, rel=1e-3)
    assert fit.a_1f == pytest.approx(A_1F, rel=1e-3)
    assert fit.lorentzians[0][0] == pytest.approx(A_L, rel=1e-3)
    assert fit.lorentzians[0][1] == pytest.approx(GAMMA, rel=1e-3)
    assert not fit.model_selection_ambiguous


def test_superfluous_lorentzian_is_flagged():
    model = NoiseFitModel(a_w=A_W, a_1f=A_1F)
    freqs = np.logspace(-2, math.log10(0.5 / DT), 120)
    taus = np.geomspace(DT, SPAN / 3, 40)
    allan = AllanResult(taus, model.adev(taus), np.ones(40, dtype=int))

    with pytest.warns(ModelSelectionAmbiguous):
        fit = fit_noise_model(freqs, model.psd(freqs), allan, n_lorentzians=1, span=SPAN, dt=DT)
    assert fit.model_selection_ambiguous


@pytest.mark.parametrize("seed", [11, 12, 13])
def test_fit_round_trip_on_synthetic_trace(reference_model, seed):
    trace = synthesize_trace(reference_model, 2 ** 16, DT, make_rng(seed), mean=150e-6)
    fit = analyze_trace(trace, n_lorentzians=1).fit

    a_l, gamma = fit.lorentzians[0]
    assert gamma == pytest.approx(GAMMA, rel=0.2)
    assert a_l == pytest.approx(A_L, rel=0.3)
    assert fit.a_w == pytest.approx(A_W, rel=0.3)
    assert fit.a_1f == pytest.approx(A_1F, rel=0.3)


def test_refit_of_fitted_model_is_stable(reference_model):
    trace = synthesize_trace(reference_model, 2 ** 16, DT, make_rng(21))
    first = analyze_trace(trace).fit
    freqs = np.logspace(-2, math.log10(0.5 / DT), 120)
    taus = np.geomspace(DT, SPAN / 3, 40)
    allan = AllanResult(taus, first.adev(taus), np.ones(40, dtype=int))
    second = fit_noise_model(freqs, first.psd(freqs), allan, n_lorentzians=1, span=SPAN, dt=DT)

    assert second.lorentzians[0][1] == pytest.approx(first.lorentzians[0][1], rel=1e-3)
    assert second.a_w == pytest.approx(first.a_w, rel=1e-3)


def test_flat_trace_is_degenerate():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        result = analyze_trace(UniformTrace(np.zeros(4096), DT))
    assert result.fit.degenerate
    assert result.fit.a_w == 0.0


def test_windowed_analysis_tracks_switching_rate(reference_model):
    hour = int(3600 / DT)
    trace = synthesize_trace(reference_model, hour, DT, make_rng(31), mean=150e-6)
    results = windowed_analysis(trace, window_len=300.0, overlap_frac=0.5, n_lorentzians=1, max_workers=4)
    series = window_series(results, n_lorentzians=1)

    assert list(series.columns) == ["start_s", "a_w_s3", "a_1f_s2", "a_l1_s2", "gamma1_per_s"]
    assert series["start_s"].is_monotonic_increasing
    assert float(series["gamma1_per_s"].median()) == pytest.approx(GAMMA, rel=0.3)


def test_window_series_keeps_gaps():
    gap = TraceAnalysis(5.0, 10, np.array([]), np.array([]), AllanResult(np.array([]), np.array([]), np.array([])),
                        fit=None, error="too short")
    series = window_series([gap], n_lorentzians=1)
    assert series.loc[0, "start_s"] == 5.0
    assert math.isnan(series.loc[0, "gamma1_per_s"])


def test_windowed_analysis_rejects_long_window():
    trace = UniformTrace(np.zeros(100), 1.0)
    with pytest.raises(DomainError):
        windowed_analysis(trace, window_len=200.0)


def test_moving_mean_band():
    band = moving_mean_band([1.0, 2.0, 3.0, 4.0, 5.0], [1.0] * 5, window=3)
    assert np.allclose(band["t1_mean_s"], [1.5, 2.0, 3.0, 4.0, 4.5])
    half = 1.0 / math.sqrt(3.0)
    assert np.allclose(band["band_hi_s"] - band["t1_mean_s"], half)
    assert np.allclose(band["t1_mean_s"] - band["band_lo_s"], half)


def test_moving_mean_without_std_has_zero_width():
    band = moving_mean_band([2.0, 4.0], None, window=2)
    assert np.allclose(band["band_lo_s"], band["band_hi_s"])


def test_uniform_trace_from_lab_times():
    times = [0.0, 1.1, 1.9, 3.2, 4.0]
    values = [10.0, 11.0, 12.0, 13.0, 14.0]
    trace = UniformTrace.from_lab_times(times, values, std=[1, 2, 3, 4, 5])
    assert trace.dt == pytest.approx(1.0)
    assert list(trace.values) == values
    assert list(trace.std) == [1, 2, 3, 4, 5]

    with pytest.raises(DomainError):
        UniformTrace.from_lab_times([0.0, 2.0, 1.0], [1.0, 2.0, 3.0])


def test_trace_slice_and_span():
    trace = UniformTrace(np.arange(10.0), 0.5, std=np.ones(10))
    piece = trace.slice(2, 6)
    assert len(piece) == 4
    assert piece.span == pytest.approx(2.0)
    assert isinstance(window_series([], 1), pd.DataFrame)
