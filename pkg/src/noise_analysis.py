"""
Spectral and Allan-deviation characterization of T1 traces

All spectra are one-sided: integrating a PSD over (0, f_Nyquist] gives the
trace variance. Noise components:

    white       S = A_w                              sigma^2 = A_w / (2 tau)
    1/f         S = A_1f / f                         sigma^2 = 2 ln2 A_1f
    Lorentzian  S = 4 A_L g / (g^2 + (2 pi f)^2)     sigma^2 = A_L (4e^-x - e^-2x + 2x - 3) / x^2,  x = g tau
"""

import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import allantools
import numpy as np
import pandas as pd
from scipy import optimize, signal

from .errors import DomainError, FitDiverged, ModelSelectionAmbiguous, NumericalError, TraceTooShort
from .utils.logger import get_app_logger
from .utils.parallel import ordered_map

logger = get_app_logger()

MIN_SPECTRAL_LENGTH = 16
LORENTZIAN_PEAK_X = 1.89
LORENTZIAN_PEAK_VALUE = 0.381
AMBIGUITY_THRESHOLD = 0.05
COST_FLOOR = 1e-12
LOG_AMPLITUDE_BOUNDS = (math.log(1e-40), math.log(1e6))


@dataclass
class UniformTrace:
    """
    Uniformly sampled T1_hat series

    Attributes:
        values: T1_hat samples (s)
        dt: Sampling period (s)
        std: Optional posterior standard deviation per sample (s)
    """

    values: np.ndarray
    dt: float
    std: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1:
            raise DomainError("trace values must be one-dimensional")
        if not self.dt > 0:
            raise DomainError(f"dt must be positive, got {self.dt}")
        if self.std is not None:
            self.std = np.asarray(self.std, dtype=float)
            if self.std.shape != self.values.shape:
                raise DomainError("std must have the same length as values")

    def __len__(self) -> int:
        return len(self.values)

    @property
    def span(self) -> float:
        return len(self.values) * self.dt

    def slice(self, start: int, stop: int) -> "UniformTrace":
        std = None if self.std is None else self.std[start:stop]
        return UniformTrace(self.values[start:stop], self.dt, std)

    @classmethod
    def from_lab_times(cls, lab_times: Sequence[float], values: Sequence[float],
                       std: Optional[Sequence[float]] = None) -> "UniformTrace":
        """
        Resample an irregular series onto its mean period by nearest-sample assignment

        Args:
            lab_times: Increasing sample times (s)
            values: T1_hat samples (s)
            std: Optional posterior standard deviations (s)
        """
        t = np.asarray(lab_times, dtype=float)
        v = np.asarray(values, dtype=float)
        if len(t) != len(v):
            raise DomainError("lab_times and values must have the same length")
        if len(t) < 2:
            raise TraceTooShort(f"need at least 2 samples to infer a period, got {len(t)}")
        if np.any(np.diff(t) <= 0):
            raise DomainError("lab_times must be strictly increasing")

        dt = float((t[-1] - t[0]) / (len(t) - 1))
        grid = t[0] + dt * np.arange(len(t))
        right = np.clip(np.searchsorted(t, grid), 1, len(t) - 1)
        left = right - 1
        nearest = np.where(np.abs(t[left] - grid) <= np.abs(t[right] - grid), left, right)

        s = None if std is None else np.asarray(std, dtype=float)[nearest]
        return cls(v[nearest], dt, s)


def _require_length(trace: UniformTrace, minimum: int = MIN_SPECTRAL_LENGTH) -> None:
    if len(trace) < minimum:
        raise TraceTooShort(f"trace has {len(trace)} samples, need at least {minimum}")


def psd_white(freqs, a_w: float) -> np.ndarray:
    return np.full_like(np.asarray(freqs, dtype=float), a_w)


def psd_one_over_f(freqs, a_1f: float) -> np.ndarray:
    return a_1f / np.asarray(freqs, dtype=float)


def psd_lorentzian(freqs, a_l: float, gamma: float) -> np.ndarray:
    f = np.asarray(freqs, dtype=float)
    return 4.0 * a_l * gamma / (gamma ** 2 + (2.0 * math.pi * f) ** 2)


def adev_white(taus, a_w: float, as_printed: bool = False) -> np.ndarray:
    """White-noise Allan deviation; as_printed drops the one-sided factor 1/2"""
    tau = np.asarray(taus, dtype=float)
    return np.sqrt(a_w / tau) if as_printed else np.sqrt(a_w / (2.0 * tau))


def adev_one_over_f(taus, a_1f: float) -> np.ndarray:
    return np.full_like(np.asarray(taus, dtype=float), math.sqrt(2.0 * a_1f * math.log(2.0)))


def _telegraph_bracket(x: np.ndarray) -> np.ndarray:
    # 4e^-x - e^-2x + 2x - 3; series below 1e-4 where the terms cancel
    small = x < 1e-4
    exact = 4.0 * np.exp(-x) - np.exp(-2.0 * x) + 2.0 * x - 3.0
    series = (2.0 / 3.0) * x ** 3 - 0.5 * x ** 4
    return np.where(small, series, exact)


def adev_lorentzian(taus, a_l: float, gamma: float, as_printed: bool = False) -> np.ndarray:
    """
    Allan deviation of a Lorentzian process with variance a_l and rate gamma

    as_printed=True multiplies by gamma*tau instead of dividing, which
    reproduces the tabulated row but not the PSD it belongs to.
    """
    x = gamma * np.asarray(taus, dtype=float)
    root = np.sqrt(np.maximum(_telegraph_bracket(x), 0.0))
    if as_printed:
        return math.sqrt(a_l) * x * root
    return math.sqrt(a_l) * root / x


def psd_model(freqs, a_w: float, a_1f: float, lorentzians: Sequence[Tuple[float, float]]) -> np.ndarray:
    total = psd_white(freqs, a_w) + psd_one_over_f(freqs, a_1f)
    for a_l, gamma in lorentzians:
        total = total + psd_lorentzian(freqs, a_l, gamma)
    return total


def adev_model(taus, a_w: float, a_1f: float, lorentzians: Sequence[Tuple[float, float]],
               as_printed: bool = False) -> np.ndarray:
    var = adev_white(taus, a_w, as_printed) ** 2 + adev_one_over_f(taus, a_1f) ** 2
    for a_l, gamma in lorentzians:
        var = var + adev_lorentzian(taus, a_l, gamma, as_printed) ** 2
    return np.sqrt(var)


def welch_psd(trace: UniformTrace, segment_len: Optional[int] = None, overlap_frac: float = 0.5,
              window: str = "hann") -> Tuple[np.ndarray, np.ndarray]:
    """
    One-sided Welch PSD with per-segment mean removal

    Args:
        trace: Uniform trace, at least 16 samples
        segment_len: Samples per segment; defaults to length / 8
        overlap_frac: Fractional segment overlap in [0, 1)
        window: scipy window name

    Returns:
        (freqs in Hz, PSD in s^2/Hz), zero frequency excluded
    """
    _require_length(trace)
    if not 0.0 <= overlap_frac < 1.0:
        raise DomainError(f"overlap_frac must be in [0, 1), got {overlap_frac}")

    n = len(trace)
    nperseg = segment_len if segment_len is not None else max(MIN_SPECTRAL_LENGTH // 2, n // 8)
    if not 2 <= nperseg <= n:
        raise DomainError(f"segment_len must be in [2, {n}], got {nperseg}")
    noverlap = min(int(round(overlap_frac * nperseg)), nperseg - 1)

    freqs, psd = signal.welch(
        trace.values,
        fs=1.0 / trace.dt,
        window=window,
        nperseg=nperseg,
        noverlap=noverlap,
        detrend="constant",
        return_onesided=True,
        scaling="density"
    )
    keep = freqs > 0
    return freqs[keep], psd[keep]


def default_allan_taus(trace: UniformTrace, per_decade: int = 10) -> np.ndarray:
    """Log-spaced integer multiples of dt up to a third of the trace span"""
    _require_length(trace)
    m_max = len(trace) // 3
    decades = math.log10(m_max) if m_max > 1 else 0.0
    count = max(2, int(math.ceil(decades * per_decade)) + 1)
    m = np.unique(np.round(np.logspace(0.0, decades, count)).astype(int))
    return m * trace.dt


@dataclass
class AllanResult:
    taus: np.ndarray
    adev: np.ndarray
    n_samples: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"tau_s": self.taus, "adev_s": self.adev, "n_samples": self.n_samples})


def allan_deviation(trace: UniformTrace, taus: Optional[Sequence[float]] = None,
                    per_decade: int = 10) -> AllanResult:
    """
    Overlapped Allan deviation of the T1_hat trace

    Args:
        trace: Uniform trace
        taus: Averaging times, snapped to multiples of dt; defaults to a log grid
        per_decade: Grid density when taus is not given

    Returns:
        AllanResult with the averaging times actually used
    """
    _require_length(trace)
    if taus is None:
        tau_grid = default_allan_taus(trace, per_decade)
    else:
        m = np.unique(np.round(np.asarray(taus, dtype=float) / trace.dt).astype(int))
        if np.any(m < 1):
            raise DomainError("averaging times must be at least one sample period")
        if np.any(m > len(trace) // 3):
            raise DomainError(f"averaging times must not exceed a third of the span ({trace.span / 3:.4g} s)")
        tau_grid = m * trace.dt

    used, adev, _, counts = allantools.oadev(trace.values, rate=1.0 / trace.dt, data_type="freq",
                                             taus=tau_grid)
    return AllanResult(np.asarray(used, dtype=float), np.asarray(adev, dtype=float),
                       np.asarray(counts, dtype=int))


@dataclass
class NoiseFitModel:
    """
    White + 1/f + Lorentzian decomposition of a trace

    Attributes:
        a_w: White PSD level (s^3)
        a_1f: 1/f amplitude (s^2)
        lorentzians: (A_L in s^2, gamma in 1/s) per component, sorted by gamma
        std_errors: One-sigma errors keyed like to_dict
        residual_psd: Norm of the log-PSD residuals
        residual_allan: Norm of the weighted log-Allan residuals
        degenerate: Trace carried no fluctuations
        model_selection_ambiguous: One fewer Lorentzian fits almost as well
    """

    a_w: float
    a_1f: float
    lorentzians: List[Tuple[float, float]] = field(default_factory=list)
    std_errors: Dict[str, float] = field(default_factory=dict)
    residual_psd: float = 0.0
    residual_allan: float = 0.0
    degenerate: bool = False
    model_selection_ambiguous: bool = False

    @property
    def cost(self) -> float:
        return 0.5 * (self.residual_psd ** 2 + self.residual_allan ** 2)

    def psd(self, freqs) -> np.ndarray:
        return psd_model(freqs, self.a_w, self.a_1f, self.lorentzians)

    def adev(self, taus, as_printed: bool = False) -> np.ndarray:
        return adev_model(taus, self.a_w, self.a_1f, self.lorentzians, as_printed)

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"a_w_s3": self.a_w, "a_1f_s2": self.a_1f}
        for i, (a_l, gamma) in enumerate(self.lorentzians, start=1):
            out[f"a_l{i}_s2"] = a_l
            out[f"gamma{i}_per_s"] = gamma
        out["std_errors"] = dict(self.std_errors)
        out["residual_psd"] = self.residual_psd
        out["residual_allan"] = self.residual_allan
        out["degenerate"] = self.degenerate
        out["model_selection_ambiguous"] = self.model_selection_ambiguous
        return out


def _log_bin(freqs: np.ndarray, psd: np.ndarray, per_decade: int = 20) -> Tuple[np.ndarray, np.ndarray]:
    if len(freqs) < 2 * per_decade:
        return freqs, psd
    edges = np.logspace(math.log10(freqs[0]), math.log10(freqs[-1]),
                        int(math.ceil(math.log10(freqs[-1] / freqs[0]) * per_decade)) + 1)
    idx = np.clip(np.searchsorted(edges, freqs, side="right") - 1, 0, len(edges) - 2)
    frame = pd.DataFrame({"bin": idx, "f": freqs, "s": psd}).groupby("bin").mean()
    return frame["f"].to_numpy(), frame["s"].to_numpy()


def _allan_peaks(taus: np.ndarray, adev: np.ndarray) -> List[Tuple[float, float]]:
    peaks = []
    for i in range(1, len(adev) - 1):
        if adev[i] > adev[i - 1] and adev[i] >= adev[i + 1]:
            peaks.append((LORENTZIAN_PEAK_X / taus[i], adev[i] ** 2 / LORENTZIAN_PEAK_VALUE))
    return peaks


def _unpack(params: np.ndarray, n_lorentzians: int) -> Tuple[float, float, List[Tuple[float, float]]]:
    values = np.exp(params)
    lorentz = [(float(values[2 + 2 * i]), float(values[3 + 2 * i])) for i in range(n_lorentzians)]
    return float(values[0]), float(values[1]), lorentz


def _fit_once(freqs, log_psd, taus, log_adev, weight, n_lorentzians, gamma_bounds, starts):
    sqrt_w = math.sqrt(weight)

    def residuals(params):
        a_w, a_1f, lorentz = _unpack(params, n_lorentzians)
        r_psd = np.log(psd_model(freqs, a_w, a_1f, lorentz)) - log_psd
        r_adev = sqrt_w * (np.log(adev_model(taus, a_w, a_1f, lorentz)) - log_adev)
        return np.concatenate([r_psd, r_adev])

    lower = [LOG_AMPLITUDE_BOUNDS[0]] * 2
    upper = [LOG_AMPLITUDE_BOUNDS[1]] * 2
    for _ in range(n_lorentzians):
        lower += [LOG_AMPLITUDE_BOUNDS[0], math.log(gamma_bounds[0])]
        upper += [LOG_AMPLITUDE_BOUNDS[1], math.log(gamma_bounds[1])]
    lower_arr, upper_arr = np.array(lower), np.array(upper)

    best = None
    for x0 in starts:
        x0 = np.clip(x0, lower_arr + 1e-9, upper_arr - 1e-9)
        try:
            result = optimize.least_squares(residuals, x0, bounds=(lower_arr, upper_arr), method="trf",
                                            ftol=1e-12, xtol=1e-12, gtol=1e-12, max_nfev=5000)
        except (ValueError, FloatingPointError) as e:
            logger.debug(f"Noise fit start discarded: {str(e)}")
            continue
        if result.status <= 0 or not np.isfinite(result.cost):
            continue
        if best is None or result.cost < best.cost:
            best = result
    return best


def _std_errors(result, n_lorentzians: int) -> Dict[str, float]:
    jac = result.jac
    dof = max(1, len(result.fun) - len(result.x))
    s_sq = 2.0 * result.cost / dof
    cov = np.linalg.pinv(jac.T @ jac) * s_sq
    log_err = np.sqrt(np.maximum(np.diag(cov), 0.0))
    values = np.exp(result.x)
    names = ["a_w_s3", "a_1f_s2"]
    for i in range(1, n_lorentzians + 1):
        names += [f"a_l{i}_s2", f"gamma{i}_per_s"]
    return {name: float(v * e) for name, v, e in zip(names, values, log_err)}


def _fit_components(freqs, log_psd, taus, log_adev, weight, n_lorentzians, gamma_bounds,
                    a_w0, a_1f0, candidates) -> Optional[Tuple[Any, NoiseFitModel]]:
    base = [math.log(a_w0), math.log(a_1f0)]
    starts = []
    if n_lorentzians == 0:
        starts.append(np.array(base))
    elif n_lorentzians == 1:
        for gamma, a_l in candidates:
            starts.append(np.array(base + [math.log(a_l), math.log(gamma)]))
    else:
        for i in range(len(candidates)):
            for j in range(i + 1, len(candidates)):
                (g1, a1), (g2, a2) = candidates[i], candidates[j]
                starts.append(np.array(base + [math.log(a1), math.log(g1), math.log(a2), math.log(g2)]))

    result = _fit_once(freqs, log_psd, taus, log_adev, weight, n_lorentzians, gamma_bounds, starts)
    if result is None:
        return None

    a_w, a_1f, lorentz = _unpack(result.x, n_lorentzians)
    n_psd = len(freqs)
    model = NoiseFitModel(
        a_w=a_w,
        a_1f=a_1f,
        lorentzians=sorted(lorentz, key=lambda item: item[1]),
        std_errors=_std_errors(result, n_lorentzians),
        residual_psd=float(np.linalg.norm(result.fun[:n_psd])),
        residual_allan=float(np.linalg.norm(result.fun[n_psd:]))
    )
    return result, model


def fit_noise_model(
    freqs: np.ndarray,
    psd: np.ndarray,
    allan: AllanResult,
    n_lorentzians: int = 1,
    weight: float = 1.0,
    span: Optional[float] = None,
    dt: Optional[float] = None
) -> NoiseFitModel:
    """
    Fit white, 1/f and Lorentzian components to a PSD and an Allan deviation at once

    Minimizes sum (log S_model - log S)^2 + weight * sum (log sigma_model - log sigma)^2
    over log-parameters with bounded least squares, restarting from every
    Allan-peak and log-grid guess of the switching rate.

    Args:
        freqs: PSD frequencies (Hz), positive
        psd: PSD values
        allan: Allan deviation of the same trace
        n_lorentzians: 0, 1 or 2
        weight: Allan weight relative to the PSD
        span: Trace span (s), bounds the slowest switching rate
        dt: Sampling period (s), bounds the fastest switching rate

    Returns:
        NoiseFitModel

    Raises:
        FitDiverged: no start converged
    """
    if n_lorentzians not in (0, 1, 2):
        raise DomainError(f"n_lorentzians must be 0, 1 or 2, got {n_lorentzians}")
    freqs = np.asarray(freqs, dtype=float)
    psd = np.asarray(psd, dtype=float)
    span = span if span is not None else 1.0 / freqs[0]
    dt = dt if dt is not None else 0.5 / freqs[-1]

    if not np.any(psd > 0) and not np.any(allan.adev > 0):
        lorentz = [(0.0, 1.0 / span)] * n_lorentzians
        return NoiseFitModel(a_w=0.0, a_1f=0.0, lorentzians=lorentz, degenerate=True)

    ok_psd = (freqs > 0) & (psd > 0) & np.isfinite(psd)
    ok_adev = (allan.adev > 0) & np.isfinite(allan.adev)
    if ok_psd.sum() + ok_adev.sum() < 2 + 2 * n_lorentzians:
        raise FitDiverged("too few positive PSD/Allan points to fit the noise model")

    f_fit, s_fit = _log_bin(freqs[ok_psd], psd[ok_psd])
    taus, adevs = allan.taus[ok_adev], allan.adev[ok_adev]
    log_psd, log_adev = np.log(s_fit), np.log(adevs)

    top = s_fit[f_fit >= np.quantile(f_fit, 0.75)]
    bottom = f_fit <= np.quantile(f_fit, 0.1)
    a_w0 = float(np.median(top)) if len(top) else float(np.median(s_fit))
    a_1f0 = max(float(np.median((s_fit[bottom] - a_w0) * f_fit[bottom])) if bottom.any() else 0.0,
                1e-6 * a_w0 * f_fit[0] + 1e-300)

    gamma_bounds = (0.1 / span, 10.0 / dt)
    variance_scale = float(np.max(adevs) ** 2) if len(adevs) else a_w0 / dt
    candidates = [(g, a) for g, a in _allan_peaks(taus, adevs) if gamma_bounds[0] < g < gamma_bounds[1]]
    for g in np.logspace(math.log10(gamma_bounds[0]) + 0.5, math.log10(gamma_bounds[1]) - 0.5, 6):
        candidates.append((float(g), variance_scale))

    fitted = _fit_components(f_fit, log_psd, taus, log_adev, weight, n_lorentzians, gamma_bounds,
                             a_w0, a_1f0, candidates)
    if fitted is None:
        raise FitDiverged(f"noise fit with {n_lorentzians} Lorentzian(s) did not converge from any start")
    _, model = fitted

    if n_lorentzians >= 1:
        reduced = _fit_components(f_fit, log_psd, taus, log_adev, weight, n_lorentzians - 1, gamma_bounds,
                                  a_w0, a_1f0, candidates)
        if reduced is not None:
            smaller_cost = reduced[1].cost
            gain = (smaller_cost - model.cost) / smaller_cost if smaller_cost > COST_FLOOR else 0.0
            if gain < AMBIGUITY_THRESHOLD:
                model.model_selection_ambiguous = True
                warnings.warn(
                    f"Lorentzian component {n_lorentzians} lowers the residual by only {gain:.1%}",
                    ModelSelectionAmbiguous
                )
    return model


def lorentzian_corner(freqs: np.ndarray, psd: np.ndarray) -> Tuple[float, float]:
    """
    Fit a single Lorentzian to a telegraph PSD

    Returns:
        (A_L in s^2, gamma in 1/s)
    """
    freqs = np.asarray(freqs, dtype=float)
    psd = np.asarray(psd, dtype=float)
    keep = (freqs > 0) & (psd > 0)
    if keep.sum() < 3:
        raise FitDiverged("too few positive PSD points for a Lorentzian fit")
    f_fit, s_fit = _log_bin(freqs[keep], psd[keep])

    def residuals(params):
        return np.log(psd_lorentzian(f_fit, math.exp(params[0]), math.exp(params[1]))) - np.log(s_fit)

    plateau = float(np.median(s_fit[: max(1, len(s_fit) // 10)]))
    half = f_fit[np.argmin(np.abs(s_fit - plateau / 2.0))]
    gamma0 = 2.0 * math.pi * half
    x0 = np.array([math.log(plateau * gamma0 / 4.0), math.log(gamma0)])
    result = optimize.least_squares(residuals, x0, method="trf", ftol=1e-12, xtol=1e-12)
    if result.status <= 0:
        raise FitDiverged(f"Lorentzian corner fit failed: {result.message}")
    return float(math.exp(result.x[0])), float(math.exp(result.x[1]))


def synthesize_trace(model: NoiseFitModel, n: int, dt: float, rng: np.random.Generator,
                     mean: float = 0.0) -> UniformTrace:
    """
    Random trace whose one-sided PSD is the given model

    White noise is Gaussian, 1/f noise is shaped in the Fourier domain and
    each Lorentzian is an exactly discretized Ornstein-Uhlenbeck process.
    """
    if n < 2 or not dt > 0:
        raise DomainError(f"need n >= 2 and dt > 0, got n={n}, dt={dt}")

    values = np.full(n, float(mean))
    if model.a_w > 0:
        values += rng.normal(0.0, math.sqrt(model.a_w / (2.0 * dt)), n)

    if model.a_1f > 0:
        freqs = np.fft.rfftfreq(n, dt)
        spectrum = np.zeros(len(freqs), dtype=complex)
        scale = np.sqrt(model.a_1f / freqs[1:] * n / (4.0 * dt))
        spectrum[1:] = scale * (rng.normal(size=len(freqs) - 1) + 1j * rng.normal(size=len(freqs) - 1))
        if n % 2 == 0:
            spectrum[-1] = spectrum[-1].real * math.sqrt(2.0)
        values += np.fft.irfft(spectrum, n)

    for a_l, gamma in model.lorentzians:
        if a_l <= 0:
            continue
        rho = math.exp(-gamma * dt)
        kicks = rng.normal(0.0, math.sqrt(a_l * (1.0 - rho * rho)), n)
        x0 = rng.normal(0.0, math.sqrt(a_l))
        ou, _ = signal.lfilter([1.0], [1.0, -rho], kicks, zi=[rho * x0])
        values += ou

    return UniformTrace(values, dt)


@dataclass
class TraceAnalysis:
    start_s: float
    n_samples: int
    freqs: np.ndarray
    psd: np.ndarray
    allan: AllanResult
    fit: Optional[NoiseFitModel] = None
    error: Optional[str] = None


def analyze_trace(trace: UniformTrace, n_lorentzians: int = 1, segment_fraction: float = 0.125,
                  overlap_frac: float = 0.5, window: str = "hann", per_decade: int = 10,
                  weight: float = 1.0, start_s: float = 0.0) -> TraceAnalysis:
    """PSD, Allan deviation and noise fit of one trace"""
    segment = max(MIN_SPECTRAL_LENGTH // 2, int(len(trace) * segment_fraction))
    freqs, psd = welch_psd(trace, segment_len=min(segment, len(trace)), overlap_frac=overlap_frac,
                           window=window)
    allan = allan_deviation(trace, per_decade=per_decade)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ModelSelectionAmbiguous)
        fit = fit_noise_model(freqs, psd, allan, n_lorentzians=n_lorentzians, weight=weight,
                              span=trace.span, dt=trace.dt)
    return TraceAnalysis(start_s, len(trace), freqs, psd, allan, fit)


def windowed_analysis(
    trace: UniformTrace,
    window_len: float,
    overlap_frac: float = 0.8,
    n_lorentzians: int = 1,
    max_workers: int = 1,
    progress: bool = False,
    **analysis_kwargs
) -> List[TraceAnalysis]:
    """
    Analyze running windows of a trace

    Args:
        trace: Full uniform trace
        window_len: Window duration (s)
        overlap_frac: Fractional overlap of consecutive windows
        n_lorentzians: Lorentzians per window fit
        max_workers: Worker threads
        progress: Show a progress bar
        **analysis_kwargs: Passed to analyze_trace

    Returns:
        One TraceAnalysis per window in time order; failed windows keep
        fit=None and the error message
    """
    if not window_len > 0 or window_len > trace.span:
        raise DomainError(f"window_len must be in (0, {trace.span}], got {window_len}")
    if not 0.0 <= overlap_frac < 1.0:
        raise DomainError(f"overlap_frac must be in [0, 1), got {overlap_frac}")

    width = max(1, int(round(window_len / trace.dt)))
    step = max(1, int(round(width * (1.0 - overlap_frac))))
    starts = list(range(0, len(trace) - width + 1, step))

    def analyze(start: int) -> TraceAnalysis:
        piece = trace.slice(start, start + width)
        try:
            return analyze_trace(piece, n_lorentzians=n_lorentzians, start_s=start * trace.dt, **analysis_kwargs)
        except NumericalError as e:
            logger.warning(f"Window at {start * trace.dt:.1f} s left as a gap: {str(e)}")
            return TraceAnalysis(start * trace.dt, width, np.array([]), np.array([]),
                                 AllanResult(np.array([]), np.array([]), np.array([], dtype=int)),
                                 fit=None, error=str(e))

    return ordered_map(analyze, starts, max_workers=max_workers, desc="windows", progress=progress)


def window_series(results: Sequence[TraceAnalysis], n_lorentzians: int = 1) -> pd.DataFrame:
    """Fitted amplitudes and switching rates per window; gaps become empty cells"""
    rows = []
    for res in results:
        row: Dict[str, Any] = {"start_s": res.start_s, "a_w_s3": np.nan, "a_1f_s2": np.nan}
        for i in range(1, n_lorentzians + 1):
            row[f"a_l{i}_s2"] = np.nan
            row[f"gamma{i}_per_s"] = np.nan
        if res.fit is not None:
            row["a_w_s3"] = res.fit.a_w
            row["a_1f_s2"] = res.fit.a_1f
            for i, (a_l, gamma) in enumerate(res.fit.lorentzians, start=1):
                row[f"a_l{i}_s2"] = a_l
                row[f"gamma{i}_per_s"] = gamma
        rows.append(row)
    return pd.DataFrame(rows)


def moving_mean_band(values: Sequence[float], std: Optional[Sequence[float]], window: int) -> pd.DataFrame:
    """
    Centered moving mean with a one-standard-error band

    The band half-width is the moving mean of the posterior standard
    deviations divided by sqrt(window).
    """
    if window < 1:
        raise DomainError(f"window must be >= 1, got {window}")
    series = pd.Series(np.asarray(values, dtype=float))
    spread = pd.Series(np.zeros(len(series)) if std is None else np.asarray(std, dtype=float))

    mean = series.rolling(window, center=True, min_periods=1).mean()
    half = spread.rolling(window, center=True, min_periods=1).mean() / math.sqrt(window)
    return pd.DataFrame({
        "t1_mean_s": mean.to_numpy(),
        "band_lo_s": (mean - half).to_numpy(),
        "band_hi_s": (mean + half).to_numpy(),
    })
