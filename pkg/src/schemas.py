"""
Pydantic schemas for experiment configuration
"""

from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .estimator import C_MAX

U64_MAX = 2 ** 64 - 1


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class PriorConfig(StrictModel):
    k: float = Field(3.0, gt=0, description="Gamma shape of the prior")
    theta_s: float = Field(450e-6, gt=0, description="Gamma parameter of the prior (s)")


class SpamConfig(StrictModel):
    alpha: float = Field(0.11, ge=0, lt=1, description="P(read 0 | excited)")
    beta: float = Field(0.14, ge=0, lt=1, description="P(read 1 | ground)")

    @model_validator(mode="after")
    def check_sum(self):
        if self.alpha + self.beta >= 1:
            raise ValueError(f"alpha + beta must be < 1, got {self.alpha + self.beta}")
        return self


class PolicyConfig(StrictModel):
    c: float = Field(0.51, gt=0, le=C_MAX, description="tau = c * T1_hat")
    tau_min_s: float = Field(1e-6, gt=0)
    tau_max_s: float = Field(5e-3, gt=0)

    @model_validator(mode="after")
    def check_clamp(self):
        if self.tau_min_s >= self.tau_max_s:
            raise ValueError("tau_min_s must be smaller than tau_max_s")
        return self


class FluctuatorConfig(StrictModel):
    rate_up_per_s: float = Field(..., gt=0)
    rate_down_per_s: float = Field(..., gt=0)
    delta_gamma_per_s: float = Field(..., ge=0)
    initial_on: Optional[bool] = None


class EnsembleConfig(StrictModel):
    count: int = Field(..., ge=1)
    gamma_min_per_s: float = Field(..., gt=0)
    gamma_max_per_s: float = Field(..., gt=0)
    delta_gamma_per_s: float = Field(..., ge=0)

    @model_validator(mode="after")
    def check_range(self):
        if self.gamma_min_per_s > self.gamma_max_per_s:
            raise ValueError("gamma_min_per_s must not exceed gamma_max_per_s")
        return self


class SimulatorConfig(StrictModel):
    gamma_base_per_s: float = Field(1.0 / 159e-6, gt=0, description="Rate floor (1/s)")
    idle_time_s: float = Field(23.2e-6, ge=0, description="Per-cycle overhead (s)")
    fluctuators: List[FluctuatorConfig] = Field(default_factory=list)
    ensemble: Optional[EnsembleConfig] = None
    record_truth: bool = True


class BudgetConfig(StrictModel):
    n_shots: int = Field(50, ge=1)
    repetitions: int = Field(1000, ge=0)
    time_budget_s: Optional[float] = Field(None, gt=0)
    target_std_s: Optional[float] = Field(None, gt=0)


class SweepSettings(StrictModel):
    tau0_s: float = Field(12e-6, gt=0)
    n_points: int = Field(50, ge=3)


class CompareSettings(StrictModel):
    t1_grid_s: List[float] = Field(default_factory=lambda: [round(1e-6 * t, 12) for t in range(100, 501, 50)])
    trials: int = Field(2000, ge=1)
    n_shots: int = Field(100, ge=1)
    c: float = Field(1.0, gt=0, le=C_MAX)
    fixed_taus_s: List[float] = Field(default_factory=lambda: [100e-6, 250e-6, 500e-6])
    spam_sim: SpamConfig = Field(default_factory=lambda: SpamConfig(alpha=0.12, beta=0.12))
    spam_est: Optional[SpamConfig] = None


class SpamSweepSettings(StrictModel):
    t1_grid_s: List[float] = Field(default_factory=lambda: [round(1e-6 * t, 12) for t in range(100, 501, 50)])
    trials: int = Field(2000, ge=1)
    n_shots: int = Field(100, ge=1)
    c: float = Field(1.0, gt=0, le=C_MAX)
    alpha_sim: float = Field(0.025, ge=0, lt=0.5)
    alpha_est_grid: List[float] = Field(default_factory=lambda: [0.005, 0.01, 0.025, 0.05, 0.1])


class KlScanSettings(StrictModel):
    k_grid: List[float] = Field(default_factory=lambda: [3.0, 5.0, 10.0, 20.0])
    tau_over_theta_min: float = Field(0.01, gt=0)
    tau_over_theta_max: float = Field(10.0, gt=0)
    tau_over_theta_points: int = Field(41, ge=2)
    spam_grid: List[float] = Field(default_factory=lambda: [0.005, 0.01, 0.025, 0.05, 0.1])
    outcome: int = Field(1, ge=0, le=1)


class OptTauSettings(StrictModel):
    reference_t1_s: float = Field(100e-6, gt=0)
    t1_grid_s: List[float] = Field(default_factory=lambda: [50e-6, 100e-6, 200e-6, 400e-6])
    idle_grid_s: List[float] = Field(default_factory=lambda: [0.0, 12.7e-6, 23.2e-6, 50e-6, 100e-6, 345e-6, 1e-3])
    curve_points: int = Field(60, ge=2)
    curve_max_idle_over_t1: float = Field(10.0, gt=0)


class SyntheticTraceSettings(StrictModel):
    a_w: float = Field(3.3e-11, ge=0, description="White PSD level (s^3)")
    a_1f: float = Field(1.0e-10, ge=0, description="1/f amplitude (s^2)")
    lorentzians: List[Tuple[float, float]] = Field(default_factory=lambda: [(1.0e-9, 10.0)])
    n_samples: int = Field(2 ** 16, ge=16)
    dt_s: float = Field(0.007, gt=0)
    mean_t1_s: float = Field(150e-6, gt=0)


class AnalyzeSettings(StrictModel):
    trace_path: Optional[str] = None
    synthetic: SyntheticTraceSettings = Field(default_factory=SyntheticTraceSettings)
    segment_fraction: float = Field(0.125, gt=0, le=1)
    overlap: float = Field(0.5, ge=0, lt=1)
    window: str = "hann"
    allan_per_decade: int = Field(10, ge=1)
    n_lorentzians: int = Field(1, ge=0, le=2)
    fit_weight: float = Field(1.0, ge=0)
    window_s: Optional[float] = Field(None, gt=0)
    window_overlap: float = Field(0.8, ge=0, lt=1)


class DetectSettings(StrictModel):
    duration_s: float = Field(30.0, gt=0)
    interval_s: float = Field(0.2, gt=0)
    band_lo_s: float = Field(100e-6, gt=0)
    band_hi_s: float = Field(400e-6, gt=0)
    min_jump_s: float = Field(100e-6, ge=0)
    level: float = Field(0.975, gt=0, lt=1)

    @model_validator(mode="after")
    def check_band(self):
        if self.band_lo_s >= self.band_hi_s:
            raise ValueError("band_lo_s must be smaller than band_hi_s")
        return self


class ValidateSettings(StrictModel):
    n_test: int = Field(200, ge=0)
    q: float = Field(0.2, gt=0, lt=1)
    level: float = Field(0.95, gt=0, lt=1)
    strata_edges_s: List[float] = Field(default_factory=lambda: [round(1e-6 * t, 12) for t in range(100, 351, 50)])
    histogram_bins: int = Field(20, ge=1)


class FreqLimitSettings(StrictModel):
    runs: int = Field(1000, ge=1)
    n_shots: int = Field(30, ge=1)
    groups: int = Field(4, ge=1)
    level: float = Field(0.68, gt=0, lt=1)


class ExperimentConfig(StrictModel):
    """Fully resolved experiment description; every run starts from one of these"""

    preset: Optional[str] = None
    seed: int = Field(0, ge=0, le=U64_MAX)
    output_dir: str = "./results"
    format_version: int = 1
    credible_level: float = Field(0.9, gt=0, lt=1)
    moving_window: int = Field(100, ge=1)
    prior: PriorConfig = Field(default_factory=PriorConfig)
    spam: SpamConfig = Field(default_factory=SpamConfig)
    policy: PolicyConfig = Field(default_factory=PolicyConfig)
    simulator: SimulatorConfig = Field(default_factory=SimulatorConfig)
    budget: BudgetConfig = Field(default_factory=BudgetConfig)
    sweep: SweepSettings = Field(default_factory=SweepSettings)
    compare: CompareSettings = Field(default_factory=CompareSettings)
    spam_sweep: SpamSweepSettings = Field(default_factory=SpamSweepSettings)
    kl_scan: KlScanSettings = Field(default_factory=KlScanSettings)
    opt_tau: OptTauSettings = Field(default_factory=OptTauSettings)
    analyze: AnalyzeSettings = Field(default_factory=AnalyzeSettings)
    detect: DetectSettings = Field(default_factory=DetectSettings)
    validation: ValidateSettings = Field(default_factory=ValidateSettings)
    freq_limit: FreqLimitSettings = Field(default_factory=FreqLimitSettings)
