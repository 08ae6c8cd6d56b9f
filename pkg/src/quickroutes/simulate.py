"""Synthetic climb traffic for a sensored line.

Generates per-position raw acceleration and pushes it through the
firmware model, so everything downstream sees exactly what a base
station would record. Each clip excites its quickdraw with an
exponentially decaying sinusoid on top of the gravity baseline, with
route-dependent amplitude and frequency plus Gaussian noise; climbs
are scheduled on a fixed cadence with per-climb jitter and optional
fatigue drift across repeats of the same route.

All randomness comes from numpy generators derived from a single seed
(one stream for planning, one per position), so identical inputs give
byte-identical event streams.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError
from .ingest import LineConfig
from .sensor import (
    Mode,
    RawSample,
    SampleEvent,
    SensorConfig,
    g_to_counts,
    initial_state,
    step,
)

# fixed unit direction of the swing excitation (x out of the wall, y lateral)
BURST_DIRECTION = (0.36, 0.80, 0.48)


@dataclass(frozen=True)
class RouteSpec:
    """Per-route burst parameters, one entry per position 1..ie."""

    name: str
    clip_times: tuple[float, ...]   # seconds from climb start, strictly increasing
    amplitudes: tuple[float, ...]   # mean burst amplitude in g (0 = no motion)
    durations: tuple[float, ...]    # burst length in seconds
    freq_hz: float = 2.0
    label: Optional[str] = None     # ground-truth route; defaults to name stem
    amp_fatigue: float = 0.0        # relative amplitude change per repeat
    dt_fatigue: float = 0.0         # relative clip-delta change per repeat

    def __post_init__(self):
        if not (len(self.clip_times) == len(self.amplitudes) == len(self.durations)):
            raise ConfigError(f"route {self.name}: per-position lists differ in length")
        if any(b <= a for a, b in zip(self.clip_times, self.clip_times[1:])):
            raise ConfigError(f"route {self.name}: clip times must strictly increase")
        if any(d <= 0 for d in self.durations):
            raise ConfigError(f"route {self.name}: durations must be positive")
        if any(a < 0 for a in self.amplitudes):
            raise ConfigError(f"route {self.name}: amplitudes must be >= 0")

    @property
    def route_label(self) -> str:
        return self.label if self.label is not None else self.name.split(".")[0]


@dataclass
class RouteProfile:
    """Everything the generator needs: routes, schedule, and jitter levels."""

    routes: dict[str, RouteSpec]
    climbs: list[str]               # route name per climb, in order
    climb_spacing_s: float = 240.0
    start_s: float = 60.0
    clip_jitter_s: float = 0.3      # sigma on each clip-to-clip delta
    amp_jitter: float = 0.05        # relative sigma on burst amplitudes
    noise_g: float = 0.02           # per-axis Gaussian noise during sampling
    rest_g: tuple[float, float, float] = (0.0, 0.0, 1.0)

    def __post_init__(self):
        if self.climb_spacing_s <= 0:
            raise ConfigError("climb_spacing_s must be positive")
        unknown = sorted(set(self.climbs) - set(self.routes))
        if unknown:
            raise ConfigError(f"climbs reference undefined routes: {unknown}")

    def labels(self) -> list[str]:
        return [self.routes[name].route_label for name in self.climbs]


@dataclass(frozen=True)
class _Burst:
    t0: float
    amp: float
    tau: float
    freq: float
    t_end: float


@dataclass
class ClimbTruth:
    """Generator-side ground truth for one climb."""

    climb_id: int
    route: str
    start_s: float
    clip_times: dict[int, Optional[float]] = field(default_factory=dict)


@dataclass
class LineSimulation:
    streams: dict[int, list[SampleEvent]]
    truth: list[ClimbTruth]
    end_time: float

    def all_events(self) -> list[SampleEvent]:
        flat = [e for stream in self.streams.values() for e in stream]
        flat.sort(key=lambda e: (e.t, e.position))
        return flat


def _plan_bursts(
    line: LineConfig, profile: RouteProfile, rng: np.random.Generator
) -> tuple[list[ClimbTruth], dict[int, list[_Burst]]]:
    ie = line.ie
    reps: Counter = Counter()
    truth: list[ClimbTruth] = []
    bursts: dict[int, list[_Burst]] = {p: [] for p in range(1, ie + 1)}
    for idx, name in enumerate(profile.climbs):
        route = profile.routes[name]
        if len(route.clip_times) != ie:
            raise ConfigError(
                f"route {name}: {len(route.clip_times)} positions configured "
                f"for a line with ie={ie}"
            )
        rep = reps[name]
        reps[name] += 1
        dt_mult = (1.0 + route.dt_fatigue) ** rep
        amp_mult = (1.0 + route.amp_fatigue) ** rep

        start = profile.start_s + idx * profile.climb_spacing_s
        base = np.asarray(route.clip_times) * dt_mult
        deltas = np.diff(np.concatenate(([0.0], base)))
        jitter = rng.normal(0.0, profile.clip_jitter_s, size=ie)
        # keep the clip order physical under jitter
        deltas = np.maximum(deltas + jitter, np.maximum(0.25 * deltas, 0.05))
        clips = start + np.cumsum(deltas)

        amp_noise = rng.normal(0.0, profile.amp_jitter, size=ie)
        amps = np.maximum(np.asarray(route.amplitudes) * amp_mult * (1.0 + amp_noise), 0.0)

        truth.append(ClimbTruth(climb_id=idx, route=route.route_label, start_s=start))
        for pos in range(1, ie + 1):
            amp = float(amps[pos - 1])
            if amp <= 0.0:
                continue
            duration = float(route.durations[pos - 1])
            bursts[pos].append(
                _Burst(
                    t0=float(clips[pos - 1]),
                    amp=amp,
                    tau=duration / 3.0,
                    freq=route.freq_hz,
                    t_end=float(clips[pos - 1]) + duration,
                )
            )
    return truth, bursts


class _NoiseStream:
    """Buffered per-axis Gaussian draws (cheap per-sample access)."""

    def __init__(self, rng: np.random.Generator, sigma: float):
        self._rng = rng
        self._sigma = sigma
        self._buf = np.empty((0, 3))
        self._i = 0

    def next3(self) -> np.ndarray:
        if self._sigma == 0.0:
            return np.zeros(3)
        if self._i >= len(self._buf):
            self._buf = self._rng.normal(0.0, self._sigma, size=(4096, 3))
            self._i = 0
        row = self._buf[self._i]
        self._i += 1
        return row


def _run_position(
    position: int,
    bursts: list[_Burst],
    profile: RouteProfile,
    cfg: SensorConfig,
    t_end: float,
    seed: int,
) -> list[SampleEvent]:
    rng = np.random.default_rng([seed, 1000 + position])
    noise = _NoiseStream(rng, profile.noise_g)
    rest = profile.rest_g
    rest_counts = tuple(g_to_counts(v, cfg) for v in rest)
    state = initial_state(position, rest_counts)

    sleep_ticks = max(1, round(cfg.active_rate_hz / cfg.sleep_rate_hz))
    dir_x, dir_y, dir_z = BURST_DIRECTION
    events: list[SampleEvent] = []
    tick = 0
    first_burst = 0
    n_bursts = len(bursts)
    while True:
        t = tick / cfg.active_rate_hz
        if t > t_end:
            break
        while first_burst < n_bursts and t > bursts[first_burst].t_end:
            first_burst += 1
        swing = 0.0
        j = first_burst
        while j < n_bursts and bursts[j].t0 <= t:
            b = bursts[j]
            if t <= b.t_end:
                dt = t - b.t0
                swing += b.amp * math.exp(-dt / b.tau) * math.sin(2.0 * math.pi * b.freq * dt)
            j += 1
        n = noise.next3()
        raw = RawSample(
            t,
            g_to_counts(rest[0] + dir_x * swing + n[0], cfg),
            g_to_counts(rest[1] + dir_y * swing + n[1], cfg),
            g_to_counts(rest[2] + dir_z * swing + n[2], cfg),
        )
        state, emitted = step(state, raw, cfg)
        events.extend(emitted)
        tick += 1 if state.mode is Mode.ACTIVE else sleep_ticks
    return events


def simulate_line(
    line: LineConfig,
    profile: RouteProfile,
    seed: int,
    cfg: Optional[SensorConfig] = None,
) -> LineSimulation:
    """Run the whole line through the firmware model.

    Returns only what was actually transmitted, per position, plus the
    generator's ground truth: route label and first transmitted event per
    (climb, position). Deterministic given (line, profile, seed).
    """
    cfg = cfg or SensorConfig()
    plan_rng = np.random.default_rng([seed, 0])
    truth, bursts = _plan_bursts(line, profile, plan_rng)

    last_burst_end = max(
        (b.t_end for blist in bursts.values() for b in blist),
        default=profile.start_s,
    )
    t_end = last_burst_end + cfg.sleep_after_s + 30.0

    streams = {
        position: _run_position(position, bursts[position], profile, cfg, t_end, seed)
        for position in line.positions
    }

    if truth:
        boundaries = [
            0.5 * (a.start_s + b.start_s) for a, b in zip(truth, truth[1:])
        ]
        edges = [-math.inf] + boundaries + [math.inf]
        for position, stream in streams.items():
            for climb, lo, hi in zip(truth, edges, edges[1:]):
                first = next((e.t for e in stream if lo <= e.t < hi), None)
                climb.clip_times[position] = first
    return LineSimulation(streams=streams, truth=truth, end_time=t_end)
