"""
Tests for the telegraph-fluctuator qubit simulator and presets
"""

import math

import numpy as np
import pytest

from src.errors import DomainError, UnknownPreset
from src.estimator import SpamModel
from src.noise_analysis import lorentzian_corner, welch_psd, UniformTrace
from src.presets import PRESETS, build_rate_process, make_paper_preset, preset_overrides
from src.simulator import (EnsembleSpec, Fluctuator, QubitSimulator, RateProcess, ShotClock, StaticSource, evolve,
                           sample_rate_trace, single_shot)
from src.utils.rng import make_rng


def telegraph(rate=20.0, gamma_lo=1.0 / 500e-6, gamma_hi=1.0 / 100e-6):
    return RateProcess(gamma_lo, [Fluctuator(rate_up=rate / 2, rate_down=rate / 2, delta_gamma=gamma_hi - gamma_lo)])


def test_make_rng_is_deterministic_per_stream():
    a = make_rng(7, 3).random(5)
    b = make_rng(7, 3).random(5)
    c = make_rng(7, 4).random(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_make_rng_rejects_negative_seed():
    with pytest.raises(ValueError):
        make_rng(-1)


def test_fluctuator_validation():
    with pytest.raises(DomainError):
        Fluctuator(rate_up=0.0, rate_down=1.0, delta_gamma=1.0)
    with pytest.raises(DomainError):
        Fluctuator(rate_up=1.0, rate_down=1.0, delta_gamma=-1.0)


def test_static_process_has_constant_rate():
    process = RateProcess(5000.0)
    events, gamma_bar = evolve(process, 1.0, make_rng(0))
    assert events == []
    assert gamma_bar == 5000.0


def test_evolve_time_average_is_bounded():
    process = telegraph(rate=2000.0)
    rng = make_rng(1)
    for _ in range(50):
        _, gamma_bar = evolve(process, 1e-3, rng)
        assert 1.0 / 500e-6 - 1e-9 <= gamma_bar <= 1.0 / 100e-6 + 1e-9


def test_telegraph_occupancy_matches_stationary_probability():
    fluct = Fluctuator(rate_up=30.0, rate_down=10.0, delta_gamma=1000.0)
    process = RateProcess(1000.0, [fluct])
    rng = make_rng(2)
    _, gamma_bar = evolve(process, 500.0, rng)
    on_fraction = (gamma_bar - 1000.0) / 1000.0
    assert on_fraction == pytest.approx(fluct.on_probability, abs=0.03)


def test_switch_count_matches_rates():
    process = telegraph(rate=20.0)
    events, _ = evolve(process, 200.0, make_rng(3))
    # symmetric fluctuator leaves each state at rate 10/s
    assert len(events) == pytest.approx(2000, rel=0.1)


def test_ensemble_corner_rates_in_range():
    spec = EnsembleSpec(count=50, gamma_min=1e-2, gamma_max=10.0, delta_gamma=10.0)
    flucts = spec.build(make_rng(4))
    corners = [f.corner_rate for f in flucts]
    assert len(flucts) == 50
    assert min(corners) >= 1e-2 and max(corners) <= 10.0


def test_single_shot_outcome_frequency():
    spam = SpamModel(alpha=0.11, beta=0.14)
    process = RateProcess(1.0 / 150e-6)
    clock = ShotClock(idle_time=0.0)
    rng = make_rng(5)
    tau = 100e-6
    ones = sum(single_shot(process, tau, spam, clock, rng).outcome for _ in range(20000))
    expected = spam.p_one(math.exp(-tau / 150e-6))
    assert ones / 20000 == pytest.approx(expected, abs=0.015)


def test_single_shot_rejects_zero_tau():
    with pytest.raises(DomainError):
        single_shot(RateProcess(1e4), 0.0, SpamModel(), ShotClock(), make_rng(0))


def test_simulator_clock_and_records():
    sim = QubitSimulator(RateProcess(1e4), SpamModel(), idle_time=23.2e-6, seed=9)
    first = sim.probe(50e-6, rep_index=2, shot_index=0)
    second = sim.probe(80e-6, rep_index=2, shot_index=1)

    assert first.lab_time == 0.0
    assert second.lab_time == pytest.approx(50e-6 + 23.2e-6)
    assert sim.lab_time == pytest.approx(50e-6 + 80e-6 + 2 * 23.2e-6)
    assert first.gamma_eff == 1e4
    assert second.rep_index == 2


def test_simulator_is_reproducible():
    def outcomes(seed):
        sim = QubitSimulator(telegraph(), SpamModel(0.1, 0.1), idle_time=10e-6, seed=seed, stream=(0,))
        return [sim.probe(100e-6).outcome for _ in range(200)]

    assert outcomes(11) == outcomes(11)
    assert outcomes(11) != outcomes(12)


def test_truth_rows_follow_switches():
    sim = QubitSimulator(telegraph(rate=200.0), SpamModel(), idle_time=20e-6, seed=6, record_trajectory=True)
    sim.wait(0.5)
    rows = sim.truth_rows()

    assert rows[0][0] == 0.0
    assert len(rows) == sim.switch_count() + 1
    assert sim.switch_count() > 20
    times = [t for t, _ in rows]
    assert times == sorted(times)
    assert {round(g) for _, g in rows} <= {2000, 10000}


def test_static_source_probability_and_clock():
    source = StaticSource(p_one=0.3, idle_time=5e-6, seed=1)
    ones = sum(source.probe(1e-5).outcome for _ in range(10000))
    assert ones / 10000 == pytest.approx(0.3, abs=0.02)
    assert source.lab_time == pytest.approx(10000 * 15e-6)


def test_telegraph_rate_trace_has_lorentzian_corner():
    gamma = 10.0
    dt = 5e-3
    process = telegraph(rate=gamma, gamma_lo=2000.0, gamma_hi=6000.0)
    values = sample_rate_trace(process, dt, 2 ** 15, make_rng(8))

    freqs, psd = welch_psd(UniformTrace(values=values, dt=dt), segment_len=2 ** 12)
    _, corner = lorentzian_corner(freqs, psd)
    assert corner == pytest.approx(gamma, rel=0.3)


def test_presets_build():
    for name in PRESETS:
        preset = make_paper_preset(name)
        process = preset.build_process()
        assert process.gamma_base > 0
        assert preset.n_shots > 0


def test_fig1f_preset_values():
    preset = make_paper_preset("fig1f")
    assert preset.spam == SpamModel(0.11, 0.14)
    assert preset.prior.k == 3.0
    assert preset.prior.theta == pytest.approx(450e-6)
    assert preset.policy.c == 0.51
    assert preset.idle_time == pytest.approx(23.2e-6)


def test_unknown_preset():
    with pytest.raises(UnknownPreset):
        make_paper_preset("fig9")
    with pytest.raises(KeyError):
        preset_overrides("fig9")


def test_preset_overrides_are_copies():
    overrides = preset_overrides("fig1f")
    overrides["spam"]["alpha"] = 0.4
    assert PRESETS["fig1f"]["spam"]["alpha"] == 0.11


def test_build_rate_process_from_mappings():
    process = build_rate_process(
        1000.0,
        [{"rate_up_per_s": 1.0, "rate_down_per_s": 2.0, "delta_gamma_per_s": 500.0, "initial_on": True}],
        {"count": 3, "gamma_min_per_s": 0.1, "gamma_max_per_s": 1.0, "delta_gamma_per_s": 10.0}
    )
    process.start(make_rng(0))
    assert len(process.fluctuators) == 4
    assert process.fluctuators[0].state is True
