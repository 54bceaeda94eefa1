"""
Named parameter bundles reproducing the published measurement settings

Fluctuator parameters are synthetic: they mimic the observed switching
between roughly 100 us and 500 us with dwell times of tens of milliseconds.
"""

import copy
from dataclasses import dataclass
from typing import Any, Dict, List, Optional

from .errors import UnknownPreset
from .estimator import AdaptivePolicy, GammaPosterior, SpamModel
from .simulator import EnsembleSpec, Fluctuator, RateProcess

# Per-cycle overhead: initialization, readout, resonator depletion and FPGA update
HARDWARE_IDLE_S = 23.2e-6

PRESETS: Dict[str, Dict[str, Any]] = {
    "fig1f": {
        "credible_level": 0.9,
        "prior": {"k": 3.0, "theta_s": 450e-6},
        "spam": {"alpha": 0.11, "beta": 0.14},
        "policy": {"c": 0.51},
        "simulator": {"gamma_base_per_s": 1.0 / 159e-6, "idle_time_s": HARDWARE_IDLE_S, "fluctuators": []},
        "budget": {"n_shots": 50, "repetitions": 1000},
    },
    "fig2_track": {
        "credible_level": 0.68,
        "prior": {"k": 3.0, "theta_s": 450e-6},
        "spam": {"alpha": 0.11, "beta": 0.14},
        "policy": {"c": 0.51},
        "simulator": {
            "gamma_base_per_s": 1.0 / 500e-6,
            "idle_time_s": HARDWARE_IDLE_S,
            "fluctuators": [
                {"rate_up_per_s": 20.0, "rate_down_per_s": 20.0,
                 "delta_gamma_per_s": 1.0 / 100e-6 - 1.0 / 500e-6},
            ],
        },
        "budget": {"n_shots": 100, "repetitions": 2000},
    },
    "fig2_interleaved": {
        "credible_level": 0.68,
        "prior": {"k": 3.0, "theta_s": 450e-6},
        "spam": {"alpha": 0.11, "beta": 0.14},
        "policy": {"c": 0.98},
        "simulator": {"gamma_base_per_s": 1.0 / 136.7e-6, "idle_time_s": HARDWARE_IDLE_S, "fluctuators": []},
        "budget": {"n_shots": 50, "repetitions": 2000},
        "sweep": {"tau0_s": 12e-6, "n_points": 50},
    },
    "fig3_72h_scaled": {
        "credible_level": 0.68,
        "prior": {"k": 3.0, "theta_s": 600e-6},
        "spam": {"alpha": 0.12, "beta": 0.12},
        "policy": {"c": 0.53},
        "simulator": {
            "gamma_base_per_s": 1.0 / 250e-6,
            "idle_time_s": HARDWARE_IDLE_S,
            "fluctuators": [
                {"rate_up_per_s": 5.0, "rate_down_per_s": 5.0, "delta_gamma_per_s": 2000.0},
                {"rate_up_per_s": 0.05, "rate_down_per_s": 0.05, "delta_gamma_per_s": 1500.0},
            ],
            "ensemble": {"count": 20, "gamma_min_per_s": 1e-3, "gamma_max_per_s": 10.0,
                         "delta_gamma_per_s": 150.0},
        },
        "budget": {"n_shots": 49, "repetitions": 20000},
    },
    "q2": {
        "credible_level": 0.68,
        "prior": {"k": 3.0, "theta_s": 550e-6},
        "spam": {"alpha": 0.12, "beta": 0.13},
        "policy": {"c": 1.0},
        "simulator": {
            "gamma_base_per_s": 1.0 / 400e-6,
            "idle_time_s": HARDWARE_IDLE_S,
            "fluctuators": [
                {"rate_up_per_s": 20.0, "rate_down_per_s": 20.0,
                 "delta_gamma_per_s": 1.0 / 150e-6 - 1.0 / 400e-6},
            ],
        },
        "budget": {"n_shots": 29, "repetitions": 2000},
        "sweep": {"tau0_s": 700e-6 / 29, "n_points": 29},
    },
}


@dataclass(frozen=True)
class ExperimentPreset:
    """Typed view of a preset: everything needed to build a simulator and an estimator"""

    name: str
    prior: GammaPosterior
    spam: SpamModel
    policy: AdaptivePolicy
    n_shots: int
    repetitions: int
    idle_time: float
    credible_level: float
    gamma_base: float
    fluctuators: List[Dict[str, Any]]
    ensemble: Optional[Dict[str, Any]]
    sweep: Optional[Dict[str, Any]]

    def build_process(self) -> RateProcess:
        """Fresh rate process; fluctuator states are drawn when a simulator starts it"""
        return build_rate_process(self.gamma_base, self.fluctuators, self.ensemble)


def build_rate_process(gamma_base: float, fluctuators: List[Dict[str, Any]],
                       ensemble: Optional[Dict[str, Any]] = None) -> RateProcess:
    """Rate process from schema-shaped fluctuator mappings"""
    flucts = [
        Fluctuator(
            rate_up=f["rate_up_per_s"],
            rate_down=f["rate_down_per_s"],
            delta_gamma=f["delta_gamma_per_s"],
            state=f.get("initial_on")
        )
        for f in fluctuators
    ]
    spec = None
    if ensemble:
        spec = EnsembleSpec(
            count=ensemble["count"],
            gamma_min=ensemble["gamma_min_per_s"],
            gamma_max=ensemble["gamma_max_per_s"],
            delta_gamma=ensemble["delta_gamma_per_s"]
        )
    return RateProcess(gamma_base, flucts, spec)


def preset_overrides(name: str) -> Dict[str, Any]:
    """Config mapping of a preset, ready to merge into an experiment config"""
    if name not in PRESETS:
        raise UnknownPreset(f"Unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}")
    return copy.deepcopy(PRESETS[name])


def make_paper_preset(name: str) -> ExperimentPreset:
    """
    Look up a named parameter bundle

    Args:
        name: One of fig1f, fig2_track, fig2_interleaved, fig3_72h_scaled, q2

    Returns:
        ExperimentPreset

    Raises:
        UnknownPreset: name is not registered
    """
    data = preset_overrides(name)
    sim = data["simulator"]
    return ExperimentPreset(
        name=name,
        prior=GammaPosterior(data["prior"]["k"], data["prior"]["theta_s"]),
        spam=SpamModel(data["spam"]["alpha"], data["spam"]["beta"]),
        policy=AdaptivePolicy(c=data["policy"]["c"]),
        n_shots=data["budget"]["n_shots"],
        repetitions=data["budget"]["repetitions"],
        idle_time=sim["idle_time_s"],
        credible_level=data["credible_level"],
        gamma_base=sim["gamma_base_per_s"],
        fluctuators=sim.get("fluctuators", []),
        ensemble=sim.get("ensemble"),
        sweep=data.get("sweep")
    )
