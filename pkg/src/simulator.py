"""
Synthetic qubit whose decay rate is driven by telegraph fluctuators
"""

import heapq
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .errors import DomainError
from .estimator import ProbeRecord, SpamModel
from .utils.logger import get_app_logger
from .utils.rng import make_rng

logger = get_app_logger()


@dataclass
class Fluctuator:
    """
    Two-state defect adding delta_gamma to the decay rate while on

    Attributes:
        rate_up: off -> on switching rate (1/s)
        rate_down: on -> off switching rate (1/s)
        delta_gamma: Rate increment while on (1/s)
        state: True when on; None draws from the stationary distribution at start
    """

    rate_up: float
    rate_down: float
    delta_gamma: float
    state: Optional[bool] = None

    def __post_init__(self):
        if not (self.rate_up > 0 and self.rate_down > 0):
            raise DomainError(f"switching rates must be positive, got up={self.rate_up}, down={self.rate_down}")
        if self.delta_gamma < 0:
            raise DomainError(f"delta_gamma must be >= 0, got {self.delta_gamma}")

    @property
    def on_probability(self) -> float:
        return self.rate_up / (self.rate_up + self.rate_down)

    @property
    def corner_rate(self) -> float:
        """Correlation decay rate of the telegraph signal"""
        return self.rate_up + self.rate_down

    @property
    def leave_rate(self) -> float:
        return self.rate_down if self.state else self.rate_up


@dataclass(frozen=True)
class EnsembleSpec:
    """Many symmetric fluctuators with log-uniform corner rates, giving a 1/f-like spectrum"""

    count: int
    gamma_min: float
    gamma_max: float
    delta_gamma: float

    def __post_init__(self):
        if self.count < 1:
            raise DomainError(f"ensemble count must be >= 1, got {self.count}")
        if not 0 < self.gamma_min <= self.gamma_max:
            raise DomainError(f"need 0 < gamma_min <= gamma_max, got [{self.gamma_min}, {self.gamma_max}]")
        if self.delta_gamma < 0:
            raise DomainError(f"delta_gamma must be >= 0, got {self.delta_gamma}")

    def build(self, rng: np.random.Generator) -> List[Fluctuator]:
        corners = np.exp(rng.uniform(math.log(self.gamma_min), math.log(self.gamma_max), self.count))
        return [Fluctuator(rate_up=g / 2.0, rate_down=g / 2.0, delta_gamma=self.delta_gamma) for g in corners]


@dataclass(frozen=True)
class SwitchEvent:
    time: float
    index: int
    state: bool
    gamma1: float


class RateProcess:
    """Decay rate gamma_base plus the contributions of every fluctuator that is on"""

    def __init__(
        self,
        gamma_base: float,
        fluctuators: Optional[List[Fluctuator]] = None,
        ensemble: Optional[EnsembleSpec] = None
    ):
        """
        Args:
            gamma_base: Rate floor (1/s), > 0
            fluctuators: Explicit telegraph fluctuators
            ensemble: Optional 1/f ensemble appended at start
        """
        if not gamma_base > 0:
            raise DomainError(f"gamma_base must be positive, got {gamma_base}")

        self.gamma_base = gamma_base
        self.fluctuators: List[Fluctuator] = list(fluctuators or [])
        self.ensemble = ensemble
        self.time = 0.0
        self.started = False
        self._queue: List[Tuple[float, int]] = []

    @property
    def gamma1(self) -> float:
        return self.gamma_base + sum(f.delta_gamma for f in self.fluctuators if f.state)

    def start(self, rng: np.random.Generator, t0: float = 0.0) -> None:
        """Draw initial states and first switching times"""
        if self.started:
            return
        if self.ensemble is not None:
            self.fluctuators.extend(self.ensemble.build(rng))

        self.time = t0
        for idx, fluct in enumerate(self.fluctuators):
            if fluct.state is None:
                fluct.state = bool(rng.random() < fluct.on_probability)
            self._schedule(idx, t0, rng)
        self.started = True

    def _schedule(self, idx: int, now: float, rng: np.random.Generator) -> None:
        fluct = self.fluctuators[idx]
        heapq.heappush(self._queue, (now + rng.exponential(1.0 / fluct.leave_rate), idx))


def evolve(process: RateProcess, duration: float, rng: np.random.Generator) -> Tuple[List[SwitchEvent], float]:
    """
    Advance the rate process exactly through every switch in the window

    Args:
        process: Rate process, mutated in place
        duration: Window length (s)
        rng: Random generator

    Returns:
        (switch events, time-averaged decay rate over the window)
    """
    if duration < 0:
        raise DomainError(f"duration must be >= 0, got {duration}")
    if not process.started:
        process.start(rng)

    end = process.time + duration
    cursor = process.time
    gamma = process.gamma1
    integral = 0.0
    events: List[SwitchEvent] = []

    queue = process._queue
    while queue and queue[0][0] < end:
        t_switch, idx = heapq.heappop(queue)
        integral += gamma * (t_switch - cursor)
        cursor = t_switch

        fluct = process.fluctuators[idx]
        fluct.state = not fluct.state
        gamma = process.gamma1
        events.append(SwitchEvent(time=t_switch, index=idx, state=fluct.state, gamma1=gamma))
        process._schedule(idx, t_switch, rng)

    integral += gamma * (end - cursor)
    process.time = end

    if duration == 0:
        return events, gamma
    return events, integral / duration


@dataclass
class ShotClock:
    """Lab clock advancing by tau plus a fixed per-cycle overhead"""

    lab_time: float = 0.0
    idle_time: float = 0.0

    def __post_init__(self):
        if self.idle_time < 0:
            raise DomainError(f"idle_time must be >= 0, got {self.idle_time}")

    def advance(self, tau: float) -> None:
        self.lab_time += tau + self.idle_time


def single_shot(
    process: RateProcess,
    tau: float,
    spam: SpamModel,
    clock: ShotClock,
    rng: np.random.Generator,
    rep_index: int = 0,
    shot_index: int = 0,
    trajectory: Optional[List[SwitchEvent]] = None
) -> ProbeRecord:
    """
    Prepare the excited state, wait tau, and read out with SPAM errors

    The qubit survives with probability exp(-mean_rate * tau), where mean_rate
    is the exact time average over the wait. Fluctuators keep switching during
    the idle part of the cycle.
    """
    if not tau > 0:
        raise DomainError(f"tau must be positive, got {tau}")

    start = clock.lab_time
    events, gamma_bar = evolve(process, tau, rng)
    excited = rng.random() < math.exp(-gamma_bar * tau)

    if excited:
        outcome = 0 if rng.random() < spam.alpha else 1
    else:
        outcome = 1 if rng.random() < spam.beta else 0

    if clock.idle_time > 0:
        idle_events, _ = evolve(process, clock.idle_time, rng)
        events.extend(idle_events)
    clock.advance(tau)

    if trajectory is not None:
        trajectory.extend(events)

    return ProbeRecord(
        tau=tau,
        outcome=outcome,
        lab_time=start,
        rep_index=rep_index,
        shot_index=shot_index,
        gamma_eff=gamma_bar
    )


class QubitSimulator:
    """Measurement source backed by a rate process, a lab clock and one RNG stream"""

    def __init__(
        self,
        process: RateProcess,
        spam: SpamModel,
        idle_time: float = 0.0,
        seed: int = 0,
        stream: Tuple[int, ...] = (),
        record_trajectory: bool = False
    ):
        """
        Args:
            process: Decay-rate process (owned by this simulator afterwards)
            spam: Readout misclassification model
            idle_time: Per-cycle overhead (s)
            seed: User seed
            stream: Stream ids for the Philox key
            record_trajectory: Keep every switch event for ground-truth output
        """
        self.process = process
        self.spam = spam
        self.rng = make_rng(seed, *stream)
        self.clock = ShotClock(lab_time=0.0, idle_time=idle_time)
        self.process.start(self.rng, t0=0.0)
        self.initial_gamma = self.process.gamma1
        self.trajectory: Optional[List[SwitchEvent]] = [] if record_trajectory else None

    @property
    def lab_time(self) -> float:
        return self.clock.lab_time

    @property
    def gamma1(self) -> float:
        return self.process.gamma1

    def probe(self, tau: float, rep_index: int = 0, shot_index: int = 0) -> ProbeRecord:
        return single_shot(self.process, tau, self.spam, self.clock, self.rng,
                           rep_index=rep_index, shot_index=shot_index, trajectory=self.trajectory)

    def wait(self, duration: float) -> float:
        """Let the process run without probing; returns the time-averaged rate"""
        events, gamma_bar = evolve(self.process, duration, self.rng)
        self.clock.lab_time += duration
        if self.trajectory is not None:
            self.trajectory.extend(events)
        return gamma_bar

    def truth_rows(self) -> List[Tuple[float, float]]:
        """Ground-truth (time_s, gamma1_per_s) steps; first row is the initial rate"""
        rows = [(0.0, self.initial_gamma)]
        if self.trajectory:
            rows.extend((e.time, e.gamma1) for e in self.trajectory)
        return rows

    def switch_count(self) -> int:
        return len(self.trajectory or [])


def sample_rate_trace(process: RateProcess, dt: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Decay rate averaged over consecutive bins of length dt"""
    if n < 1 or not dt > 0:
        raise DomainError(f"need n >= 1 and dt > 0, got n={n}, dt={dt}")
    out = np.empty(n)
    for i in range(n):
        _, out[i] = evolve(process, dt, rng)
    return out


@dataclass
class StaticSource:
    """Fixed-probability source: reads 1 with probability p_one regardless of tau"""

    p_one: float
    idle_time: float = 0.0
    seed: int = 0
    stream: Tuple[int, ...] = ()
    clock: ShotClock = field(init=False)

    def __post_init__(self):
        if not 0.0 <= self.p_one <= 1.0:
            raise DomainError(f"p_one must be a probability, got {self.p_one}")
        self.rng = make_rng(self.seed, *self.stream)
        self.clock = ShotClock(idle_time=self.idle_time)

    @property
    def lab_time(self) -> float:
        return self.clock.lab_time

    def probe(self, tau: float, rep_index: int = 0, shot_index: int = 0) -> ProbeRecord:
        start = self.clock.lab_time
        outcome = int(self.rng.random() < self.p_one)
        self.clock.advance(tau)
        return ProbeRecord(tau=tau, outcome=outcome, lab_time=start, rep_index=rep_index, shot_index=shot_index)
