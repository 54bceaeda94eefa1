"""
Experiment commands: resolve a config, run the owning modules, write result files
"""

import hashlib
import json
import logging
import math
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from .baselines import EstimatorSpec, SweepConfig, compare_study, run_interleaved
from .errors import ConfigError
from .estimator import (AdaptivePolicy, EstimationConfig, EstimationRun, GammaPosterior, SpamModel,
                        posterior_row, run_estimation)
from .noise_analysis import (NoiseFitModel, UniformTrace, analyze_trace, moving_mean_band, synthesize_trace,
                             window_series, windowed_analysis)
from .oracle import frequentist_study, kl_scan
from .presets import build_rate_process, preset_overrides
from .schemas import ExperimentConfig
from .simulator import QubitSimulator
from .storage import StorageManager, load_trace_csv, trace_std
from .switch_detector import detect_switches, run_for_duration
from .utils.config import DEFAULT_CONFIG_PATH, deep_merge, load_yaml
from .utils.rng import make_rng
from .validation import run_validation_protocol
from .wait_optimizer import (CLOSED_FORM_CASES, c_for_idle_time, export_c_table, tau_opt_closed_form,
                             tau_opt_vs_idle)

HASH_EXCLUDE = {"output_dir"}


def resolve_config(
    config_file: Optional[str] = None,
    preset: Optional[str] = None,
    seed: Optional[int] = None,
    out: Optional[str] = None,
    defaults_path: str = DEFAULT_CONFIG_PATH,
    default_output_dir: Optional[str] = None
) -> ExperimentConfig:
    """
    Merge defaults, preset, experiment file and CLI flags into one validated config

    Args:
        config_file: Experiment YAML file
        preset: Preset name; overrides the file's preset key
        seed: Seed flag
        out: Output directory flag
        defaults_path: Project defaults YAML
        default_output_dir: Output directory used when neither file nor flag sets one

    Returns:
        ExperimentConfig

    Raises:
        ConfigError, FileNotFoundError, pydantic.ValidationError
    """
    raw_defaults = load_yaml(defaults_path)
    fields = set(ExperimentConfig.model_fields)
    merged = {k: v for k, v in raw_defaults.items() if k in fields}
    if default_output_dir is not None:
        merged["output_dir"] = default_output_dir

    overrides = load_yaml(config_file) if config_file else {}
    name = preset or overrides.get("preset") or merged.get("preset")
    if name:
        merged = deep_merge(merged, preset_overrides(name))
    merged = deep_merge(merged, overrides)
    if name:
        merged["preset"] = name
    if seed is not None:
        merged["seed"] = seed
    if out is not None:
        merged["output_dir"] = out

    return ExperimentConfig.model_validate(merged)


def dump_config(config: ExperimentConfig) -> Dict[str, Any]:
    """Resolved config without machine-specific fields"""
    return config.model_dump(mode="json", exclude=HASH_EXCLUDE)


def config_hash(config: ExperimentConfig) -> str:
    canonical = json.dumps(dump_config(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass
class RunContext:
    """Everything a command needs besides its own settings"""

    config: ExperimentConfig
    storage: StorageManager
    logger: logging.Logger
    max_workers: int = 1
    progress: bool = False


def spam_model(config: ExperimentConfig) -> SpamModel:
    return SpamModel(alpha=config.spam.alpha, beta=config.spam.beta)


def estimation_config(config: ExperimentConfig, n_shots: Optional[int] = None) -> EstimationConfig:
    return EstimationConfig(
        prior=GammaPosterior(config.prior.k, config.prior.theta_s),
        spam=spam_model(config),
        policy=AdaptivePolicy(c=config.policy.c, tau_min=config.policy.tau_min_s, tau_max=config.policy.tau_max_s),
        n_shots=n_shots or config.budget.n_shots,
        time_budget=config.budget.time_budget_s,
        target_std=config.budget.target_std_s
    )


def build_simulator(config: ExperimentConfig, stream: Tuple[int, ...] = (0,)) -> QubitSimulator:
    sim = config.simulator
    process = build_rate_process(
        sim.gamma_base_per_s,
        [f.model_dump() for f in sim.fluctuators],
        sim.ensemble.model_dump() if sim.ensemble else None
    )
    return QubitSimulator(process, spam_model(config), idle_time=sim.idle_time_s, seed=config.seed,
                          stream=stream, record_trajectory=sim.record_truth)


def _run_sequence(source, est: EstimationConfig, n_reps: int, progress: bool, desc: str) -> List[EstimationRun]:
    return [run_estimation(source, est, rep_index=i)
            for i in tqdm(range(n_reps), desc=desc, disable=not progress, leave=False)]


def _trace_frame(runs: List[EstimationRun], level: float) -> pd.DataFrame:
    rows = []
    for run in runs:
        row = posterior_row(run.end_time, run.final, level)
        row["dt1_std_s"] = run.final.t1_std
        row["rep_index"] = run.rep_index
        row["shots"] = run.shots_taken
        row["failed"] = run.failed
        rows.append(row)
    columns = ["rep_index", "lab_time_s", "k", "theta_s", "t1_hat_s", "dt1_std_s", "ci_lo_s", "ci_hi_s",
               "shots", "failed"]
    return pd.DataFrame(rows, columns=columns)


def _shots_frame(runs: List[EstimationRun]) -> pd.DataFrame:
    rows = [
        {"rep_index": r.rep_index, "shot_index": r.shot_index, "lab_time_s": r.lab_time, "tau_s": r.tau,
         "outcome": r.outcome, "gamma_eff_per_s": r.gamma_eff}
        for run in runs for r in run.records
    ]
    return pd.DataFrame(rows, columns=["rep_index", "shot_index", "lab_time_s", "tau_s", "outcome",
                                       "gamma_eff_per_s"])


def _truth_frame(sim: QubitSimulator) -> pd.DataFrame:
    rows = sim.truth_rows()
    return pd.DataFrame({
        "time_s": [t for t, _ in rows],
        "gamma1_per_s": [g for _, g in rows],
        "t1_s": [1.0 / g for _, g in rows],
    })


def cmd_track(ctx: RunContext) -> Dict[str, Any]:
    """Repeated adaptive estimations against the simulator"""
    cfg = ctx.config
    sim = build_simulator(cfg)
    runs = _run_sequence(sim, estimation_config(cfg), cfg.budget.repetitions, ctx.progress, "track")

    trace = _trace_frame(runs, cfg.credible_level)
    ctx.storage.save_csv("shots.csv", _shots_frame(runs))
    ctx.storage.save_csv("trace.csv", trace)

    ok = trace[~trace["failed"].astype(bool)]
    band = moving_mean_band(ok["t1_hat_s"].to_numpy(), ok["dt1_std_s"].to_numpy(), cfg.moving_window)
    band.insert(0, "lab_time_s", ok["lab_time_s"].to_numpy())
    ctx.storage.save_csv("moving_mean.csv", band)
    if cfg.simulator.record_truth:
        ctx.storage.save_csv("truth.csv", _truth_frame(sim))

    summary = {
        "repetitions": len(runs),
        "failed": int(trace["failed"].sum()) if len(trace) else 0,
        "mean_t1_hat_s": float(ok["t1_hat_s"].mean()) if len(ok) else None,
        "elapsed_s": sim.lab_time,
        "true_switches": sim.switch_count(),
    }
    ctx.storage.save_json("track.json", summary)
    return summary


def cmd_interleave(ctx: RunContext) -> Dict[str, Any]:
    """Adaptive and linear-sweep shots alternating on one simulator"""
    cfg = ctx.config
    sim = build_simulator(cfg)
    sweep = SweepConfig(tau0=cfg.sweep.tau0_s, n_points=cfg.sweep.n_points, reps=1)
    result = run_interleaved(sim, estimation_config(cfg), sweep, cfg.budget.repetitions)

    ctx.storage.save_csv("interleave_adaptive.csv", _trace_frame(result.runs, cfg.credible_level))
    ctx.storage.save_csv("interleave_sweep.csv", result.sweep.to_frame())
    summary = {
        "repetitions": len(result.runs),
        "adaptive_mean_t1_s": result.adaptive_mean,
        "adaptive_se_s": result.adaptive_se,
        "sweep_fit": result.fit.to_dict() if result.fit else None,
        "z_score": result.z_score,
        "agree": result.agree,
    }
    ctx.storage.save_json("interleave.json", summary)
    return summary


def cmd_compare(ctx: RunContext) -> Dict[str, Any]:
    """Adaptive versus fixed-tau estimation error over a T1 grid"""
    cfg = ctx.config
    settings = cfg.compare
    spam_sim = SpamModel(settings.spam_sim.alpha, settings.spam_sim.beta)
    spam_est = SpamModel(settings.spam_est.alpha, settings.spam_est.beta) if settings.spam_est else spam_sim
    estimators = [EstimatorSpec.adaptive(settings.c)] + [EstimatorSpec.fixed(t) for t in settings.fixed_taus_s]

    frame = compare_study(settings.t1_grid_s, settings.trials, settings.n_shots, spam_sim, spam_est, estimators,
                          GammaPosterior(cfg.prior.k, cfg.prior.theta_s), seed=cfg.seed,
                          max_workers=ctx.max_workers, progress=ctx.progress)
    ctx.storage.save_csv("compare.csv", frame)

    adaptive = frame[frame["estimator"] == "adaptive"]["mare"]
    flatness = float(adaptive.max() / adaptive.min()) if len(adaptive) and adaptive.min() > 0 else None
    lines = [f"{row.estimator:>16s}  T1={row.true_t1_s * 1e6:7.1f} us  MARE={row.mare:.4f}  bias={row.bias:+.4f}"
             for row in frame.itertuples()]
    lines.append(f"adaptive MARE max/min: {flatness}")
    ctx.storage.save_summary("compare.txt", lines)
    return {"rows": len(frame), "adaptive_mare_max_over_min": flatness}


def cmd_spam_sweep(ctx: RunContext) -> Dict[str, Any]:
    """Adaptive error when the assumed SPAM rates differ from the true ones"""
    cfg = ctx.config
    settings = cfg.spam_sweep
    spam_sim = SpamModel(settings.alpha_sim, settings.alpha_sim)
    prior = GammaPosterior(cfg.prior.k, cfg.prior.theta_s)

    frames = []
    for alpha_est in settings.alpha_est_grid:
        frame = compare_study(settings.t1_grid_s, settings.trials, settings.n_shots, spam_sim,
                              SpamModel(alpha_est, alpha_est), [EstimatorSpec.adaptive(settings.c)], prior,
                              seed=cfg.seed, max_workers=ctx.max_workers, progress=ctx.progress)
        frame.insert(0, "alpha_est", alpha_est)
        frames.append(frame)
    table = pd.concat(frames, ignore_index=True)
    ctx.storage.save_csv("spam_sweep.csv", table)

    mean_error = table.groupby("alpha_est")["mare"].mean()
    mean_abs_bias = table.assign(abs_bias=table["bias"].abs()).groupby("alpha_est")["abs_bias"].mean()
    best = float(mean_error.idxmin())
    least_biased = float(mean_abs_bias.idxmin())
    ctx.storage.save_summary("spam_sweep.txt", [f"alpha_est={a:g}  mean MARE={e:.4f}" for a, e in mean_error.items()]
                             + [f"lowest error at alpha_est={best:g} (true {settings.alpha_sim:g})",
                                f"smallest |bias| at alpha_est={least_biased:g}"])
    return {"best_alpha_est": best, "least_biased_alpha_est": least_biased, "alpha_sim": settings.alpha_sim}


def cmd_kl_scan(ctx: RunContext) -> Dict[str, Any]:
    """Divergence of the gamma and truncated-normal approximations after one shot"""
    settings = ctx.config.kl_scan
    ratios = np.logspace(math.log10(settings.tau_over_theta_min), math.log10(settings.tau_over_theta_max),
                         settings.tau_over_theta_points)
    frame = kl_scan(settings.k_grid, ratios, settings.spam_grid, settings.outcome)
    ctx.storage.save_csv("kl_scan.csv", frame)

    worst = frame.groupby(["k", "alpha"])[["kl_gamma", "kl_truncnorm"]].max().reset_index()
    ctx.storage.save_csv("kl_worst.csv", worst)
    return {"cells": len(frame), "missing": int(frame["kl_gamma"].isna().sum())}


def cmd_opt_tau(ctx: RunContext) -> Dict[str, Any]:
    """Optimal prefactor lookup table and closed-form checks"""
    cfg = ctx.config
    settings = cfg.opt_tau
    spam = spam_model(cfg)

    gammas = sorted(1.0 / t for t in settings.t1_grid_s)
    ctx.storage.save_csv("c_table.csv", export_c_table(gammas, sorted(settings.idle_grid_s), spam))

    reference_gamma = 1.0 / settings.reference_t1_s
    idles = np.linspace(0.0, settings.curve_max_idle_over_t1 * settings.reference_t1_s, settings.curve_points)
    ctx.storage.save_csv("tau_opt_curve.csv", tau_opt_vs_idle(reference_gamma, idles, spam))

    closed = []
    for case in CLOSED_FORM_CASES:
        opt = tau_opt_closed_form(case, reference_gamma, alpha=spam.alpha)
        closed.append({"case": case, "tau_opt_s": opt.tau_opt, "c_opt": opt.c_opt, "degenerate": opt.degenerate})
    ctx.storage.save_csv("closed_forms.csv", pd.DataFrame(closed))

    reference = {f"{idle * 1e6:g}us": c_for_idle_time(idle, settings.reference_t1_s, spam)
                 for idle in sorted(settings.idle_grid_s)}
    ctx.storage.save_json("opt_tau.json", {"reference_t1_s": settings.reference_t1_s, "c_at_idle": reference})
    return {"c_at_idle": reference}


def _analysis_trace(ctx: RunContext) -> Tuple[UniformTrace, Optional[NoiseFitModel]]:
    settings = ctx.config.analyze
    if settings.trace_path:
        frame = load_trace_csv(settings.trace_path)
        trace = UniformTrace.from_lab_times(frame["lab_time_s"], frame["t1_hat_s"], trace_std(frame))
        return trace, None

    synth = settings.synthetic
    model = NoiseFitModel(a_w=synth.a_w, a_1f=synth.a_1f, lorentzians=[tuple(p) for p in synth.lorentzians])
    trace = synthesize_trace(model, synth.n_samples, synth.dt_s, make_rng(ctx.config.seed, 0), mean=synth.mean_t1_s)
    ctx.storage.save_csv("synthetic_trace.csv", pd.DataFrame({
        "lab_time_s": synth.dt_s * np.arange(len(trace)),
        "t1_hat_s": trace.values,
    }))
    return trace, model


def cmd_analyze(ctx: RunContext) -> Dict[str, Any]:
    """PSD, Allan deviation and noise fit of a T1 trace"""
    settings = ctx.config.analyze
    trace, generator = _analysis_trace(ctx)
    ctx.logger.info(f"Analyzing {len(trace)} samples at dt={trace.dt:.4g} s")

    options = dict(segment_fraction=settings.segment_fraction, overlap_frac=settings.overlap,
                   window=settings.window, per_decade=settings.allan_per_decade, weight=settings.fit_weight)
    full = analyze_trace(trace, n_lorentzians=settings.n_lorentzians, **options)
    ctx.storage.save_csv("psd.csv", pd.DataFrame({"freq_hz": full.freqs, "psd_s3": full.psd}))
    ctx.storage.save_csv("allan.csv", full.allan.to_frame())

    report: Dict[str, Any] = {"fit": full.fit.to_dict(), "n_samples": len(trace), "dt_s": trace.dt}
    if generator is not None:
        report["generator"] = generator.to_dict()

    if settings.window_s is not None:
        windows = windowed_analysis(trace, settings.window_s, settings.window_overlap, n_lorentzians=1,
                                    max_workers=ctx.max_workers, progress=ctx.progress, **options)
        ctx.storage.save_csv("windows.csv", window_series(windows, 1))
        report["windows"] = len(windows)
        report["window_gaps"] = sum(1 for w in windows if w.fit is None)

    if trace.std is not None:
        band = moving_mean_band(trace.values, trace.std, ctx.config.moving_window)
        ctx.storage.save_csv("moving_mean.csv", band)

    ctx.storage.save_json("fit.json", report)
    return {"fit": report["fit"]}


def cmd_detect(ctx: RunContext) -> Dict[str, Any]:
    """Verified T1 switches between consecutive short intervals"""
    cfg = ctx.config
    settings = cfg.detect
    sim = build_simulator(cfg)
    runs = run_for_duration(sim, estimation_config(cfg), settings.duration_s)
    report = detect_switches(runs, spam_model(cfg), interval_len=settings.interval_s,
                             band=(settings.band_lo_s, settings.band_hi_s), min_jump=settings.min_jump_s,
                             level=settings.level)

    ctx.storage.save_csv("switch_events.csv", report.events)
    payload = report.to_dict()
    payload["repetitions"] = len(runs)
    payload["true_switches"] = sim.switch_count()
    payload["true_switches_per_s"] = sim.switch_count() / sim.lab_time if sim.lab_time > 0 else 0.0
    ctx.storage.save_json("switch_report.json", payload)

    lines = [
        f"intervals: {report.n_intervals}",
        f"filtered: {report.filtered_fraction:.2%} of consecutive pairs",
        f"verified: {report.verified_fraction:.2%} of candidates",
        f"events per second: {report.events_per_s:.4g}",
        f"mean time between events: {report.mean_interevent_s} s",
    ]
    ctx.storage.save_summary("switch_report.txt", lines)
    return payload


def cmd_validate(ctx: RunContext) -> Dict[str, Any]:
    """Weak and strong binomial tests with interleaved test shots"""
    cfg = ctx.config
    settings = cfg.validation
    sim = build_simulator(cfg)
    report = run_validation_protocol(sim, estimation_config(cfg), settings.n_test, cfg.budget.repetitions,
                                     q=settings.q, level=settings.level, strata_edges=settings.strata_edges_s,
                                     bins=settings.histogram_bins)
    ctx.storage.save_csv("validation_runs.csv", report.rows)
    ctx.storage.save_csv("validation_strata.csv", report.strata)
    ctx.storage.save_csv("validation_histogram.csv", report.histogram)
    ctx.storage.save_json("validation.json", report.to_dict())
    return report.overall


def cmd_freq_limit(ctx: RunContext) -> Dict[str, Any]:
    """Posterior uncertainty against the frequentist limit"""
    cfg = ctx.config
    settings = cfg.freq_limit
    sim = build_simulator(cfg)
    runs = _run_sequence(sim, estimation_config(cfg, n_shots=settings.n_shots), settings.runs, ctx.progress,
                         "freq-limit")
    per_run, groups = frequentist_study(runs, groups=settings.groups, level=settings.level)
    ctx.storage.save_csv("freq_limit_runs.csv", per_run)
    ctx.storage.save_csv("freq_limit_groups.csv", groups)

    summary = {
        "runs": len(per_run),
        "mean_ratio": float(per_run["ratio"].mean()) if len(per_run) else None,
        "group_spread": float(groups["mean_ratio"].max() / groups["mean_ratio"].min() - 1.0) if len(groups) else None,
    }
    ctx.storage.save_json("freq_limit.json", summary)
    return summary


COMMANDS: Dict[str, Callable[[RunContext], Dict[str, Any]]] = {
    "track": cmd_track,
    "interleave": cmd_interleave,
    "compare": cmd_compare,
    "spam-sweep": cmd_spam_sweep,
    "kl-scan": cmd_kl_scan,
    "opt-tau": cmd_opt_tau,
    "analyze": cmd_analyze,
    "detect": cmd_detect,
    "validate": cmd_validate,
    "freq-limit": cmd_freq_limit,
}


def run_command(name: str, config: ExperimentConfig, logger: logging.Logger, max_workers: int = 1,
                progress: bool = False) -> Dict[str, Any]:
    """Run one command and write its outputs plus the resolved config"""
    if name not in COMMANDS:
        raise ConfigError(f"Unknown command {name!r}; available: {', '.join(COMMANDS)}")

    storage = StorageManager(config.output_dir, config_hash(config))
    storage.save_config(dump_config(config))
    ctx = RunContext(config=config, storage=storage, logger=logger, max_workers=max_workers, progress=progress)
    return COMMANDS[name](ctx)
