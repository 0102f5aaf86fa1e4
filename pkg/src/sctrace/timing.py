"""Discrete-event model of BLE advertising, scanning and signature refresh.

All times are integer milliseconds.  A broadcast is heard only when it lands
inside one of the receiver's scan windows; there is no other loss mechanism
and the three advertising channels are collapsed into one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .signal_model import PathLossModel, RssSample

ADVERTISE_MODES = {
    "ADVERTISE_MODE_LOW_LATENCY": 100,
    "ADVERTISE_MODE_BALANCED": 250,
    "ADVERTISE_MODE_LOW_POWER": 1000,
}


@dataclass(frozen=True)
class DeviceTimingConfig:
    T_a: int = 100
    T_s: int = 1000
    T_w: int = 1000
    T_g: int = 5 * 60 * 1000
    phase_offset: int = 0
    jitter_max: int = 10

    def __post_init__(self):
        if not 0 < self.T_w <= self.T_s:
            raise ValueError(f"need 0 < T_w <= T_s, got T_w={self.T_w}, T_s={self.T_s}")
        if self.T_a <= 0 or self.T_g <= 0:
            raise ValueError("T_a and T_g must be > 0")
        if not 0 <= self.jitter_max < self.T_a:
            # jitter >= T_a would let consecutive events swap order
            raise ValueError(f"need 0 <= jitter_max < T_a, got {self.jitter_max}")

    @classmethod
    def preset(cls, mode: str, **kw) -> "DeviceTimingConfig":
        return cls(T_a=ADVERTISE_MODES[mode], **kw)


@dataclass(frozen=True)
class DistanceProfile:
    """Piecewise-constant distance in metres, from ``(t_start_ms, distance)`` breakpoints.

    A distance of ``math.inf`` means the devices are out of range.
    """

    breakpoints: tuple[tuple[int, float], ...]

    def __post_init__(self):
        bps = tuple(sorted((int(t), float(d)) for t, d in self.breakpoints))
        if not bps or bps[0][0] > 0:
            raise ValueError("distance profile must define the distance at t = 0")
        if any(not d > 0 for _, d in bps):
            raise ValueError("distances must be > 0")
        object.__setattr__(self, "breakpoints", bps)

    @classmethod
    def constant(cls, distance: float) -> "DistanceProfile":
        return cls(((0, distance),))

    def __call__(self, t):
        starts = np.array([b[0] for b in self.breakpoints])
        dists = np.array([b[1] for b in self.breakpoints])
        idx = np.searchsorted(starts, t, side="right") - 1
        out = dists[np.maximum(idx, 0)]
        return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class EncounterScenario:
    duration: int
    distance_profile: DistanceProfile
    case: str = "HH"
    tx_config: DeviceTimingConfig = field(default_factory=DeviceTimingConfig)
    rx_config: DeviceTimingConfig = field(default_factory=DeviceTimingConfig)
    seed: int = 0
    tx_id: str = "tx"
    rx_id: str = "rx"

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError(f"scenario duration must be > 0, got {self.duration}")


@dataclass(frozen=True, eq=False)
class PacketTrace:
    times: np.ndarray
    rss: np.ndarray
    distances: np.ndarray
    broadcast_count: int

    @property
    def received_count(self) -> int:
        return len(self.times)

    @property
    def receptions(self) -> list[tuple[int, float]]:
        return list(zip(self.times.tolist(), self.rss.tolist()))

    def __eq__(self, other):
        if not isinstance(other, PacketTrace):
            return NotImplemented
        return (self.broadcast_count == other.broadcast_count
                and np.array_equal(self.times, other.times)
                and np.array_equal(self.rss, other.rss)
                and np.array_equal(self.distances, other.distances))


def advertising_times(config: DeviceTimingConfig, duration: int, seed=None) -> np.ndarray:
    """Event times ``phase_offset + k*T_a + jitter_k`` that fall before ``duration``."""
    if not duration > 0:
        raise ValueError("duration must be > 0")
    rng = np.random.default_rng(seed)
    span = duration - config.phase_offset
    k_max = max(0, -(-span // config.T_a))
    base = config.phase_offset + config.T_a * np.arange(k_max, dtype=np.int64)
    if config.jitter_max > 0:
        base = base + rng.integers(0, config.jitter_max + 1, size=k_max)
    return base[(base >= 0) & (base < duration)]


def scan_windows(config: DeviceTimingConfig, duration: int) -> list[tuple[int, int]]:
    """Half-open listening windows ``[k*T_s + offset, k*T_s + offset + T_w)`` clipped to the run."""
    if not duration > 0:
        raise ValueError("duration must be > 0")
    off, T_s, T_w = config.phase_offset, config.T_s, config.T_w
    k = math.floor((-off - T_w) / T_s) + 1
    out = []
    while k * T_s + off < duration:
        start, end = max(0, k * T_s + off), min(duration, k * T_s + off + T_w)
        if start < end:
            out.append((start, end))
        k += 1
    return out


def in_windows(times: np.ndarray, windows: Sequence[tuple[int, int]]) -> np.ndarray:
    if not windows:
        return np.zeros(len(times), dtype=bool)
    starts = np.array([w[0] for w in windows])
    ends = np.array([w[1] for w in windows])
    idx = np.searchsorted(starts, times, side="right") - 1
    return (idx >= 0) & (times < ends[np.maximum(idx, 0)])


def simulate_reception(tx: DeviceTimingConfig | None, rx: DeviceTimingConfig | None,
                       scenario: EncounterScenario, model: PathLossModel,
                       noise_lookup: Callable[[float], float] | None = None) -> PacketTrace:
    """Replay one encounter; ``tx``/``rx`` default to the scenario's configs."""
    tx = tx or scenario.tx_config
    rx = rx or scenario.rx_config
    rng = np.random.default_rng(scenario.seed)
    adv = advertising_times(tx, scenario.duration, rng)
    heard = in_windows(adv, scan_windows(rx, scenario.duration))
    dist = np.asarray(scenario.distance_profile(adv), dtype=float).reshape(-1)
    heard &= np.isfinite(dist)
    times, d = adv[heard], dist[heard]
    z = rng.standard_normal(len(times))
    if noise_lookup is None:
        sd = np.zeros(len(times))
    else:
        sd = np.sqrt([float(noise_lookup(x)) for x in d]) if len(d) else np.zeros(0)
    rss = model.c + d ** (-model.n) + sd * z
    return PacketTrace(times, rss, d, int(len(adv)))


def reception_rate(tx: DeviceTimingConfig, rx: DeviceTimingConfig, duration: int,
                   trials: int, seed=None) -> float:
    """Mean fraction of broadcasts heard, over random tx/rx phase offsets.

    Trials in which nothing is broadcast are left out of the mean.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    ratios = []
    for _ in range(trials):
        txp = replace(tx, phase_offset=int(rng.integers(0, tx.T_a)))
        rxp = replace(rx, phase_offset=int(rng.integers(0, rx.T_s)))
        adv = advertising_times(txp, duration, rng)
        if len(adv):
            ratios.append(np.count_nonzero(in_windows(adv, scan_windows(rxp, duration))) / len(adv))
    return float(np.mean(ratios)) if ratios else 0.0


def run_encounter(scenario: EncounterScenario, model: PathLossModel,
                  noise_lookup: Callable[[float], float] | None = None) -> list[RssSample]:
    trace = simulate_reception(None, None, scenario, model, noise_lookup)
    gaps = np.diff(trace.times, prepend=trace.times[:1])
    return [
        RssSample(rss=float(r), timestamp=float(t), true_distance=float(d),
                  tx_id=scenario.tx_id, rx_id=scenario.rx_id, case=scenario.case, elapsed=float(g))
        for t, r, d, g in zip(trace.times, trace.rss, trace.distances, gaps)
    ]


# -- scenario / trace files -------------------------------------------------

_SCENARIO_INT_KEYS = ("duration", "T_a", "T_s", "T_w", "T_g", "jitter", "seed", "tx_phase", "rx_phase")


def parse_scenario(text: str) -> EncounterScenario:
    """Parse ``key=value`` header lines followed by ``t_start_ms,distance_m`` rows."""
    header: dict[str, str] = {}
    bps = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            key, _, val = line.partition("=")
            header[key.strip()] = val.strip()
        else:
            parts = line.split(",")
            if len(parts) != 2:
                raise ValueError(f"line {lineno}: expected t_start_ms,distance_m")
            bps.append((int(float(parts[0])), float(parts[1])))
    unknown = set(header) - set(_SCENARIO_INT_KEYS) - {"case"}
    if unknown:
        raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
    if "duration" not in header:
        raise ValueError("scenario needs a duration")
    if not bps:
        raise ValueError("scenario needs at least one distance breakpoint")
    v = {k: int(float(header[k])) for k in _SCENARIO_INT_KEYS if k in header}
    common = dict(T_a=v.get("T_a", 100), T_s=v.get("T_s", 1000), T_w=v.get("T_w", 1000),
                  T_g=v.get("T_g", 5 * 60 * 1000), jitter_max=v.get("jitter", 10))
    return EncounterScenario(
        duration=v["duration"],
        distance_profile=DistanceProfile(tuple(bps)),
        case=header.get("case", "HH"),
        tx_config=DeviceTimingConfig(phase_offset=v.get("tx_phase", 0), **common),
        rx_config=DeviceTimingConfig(phase_offset=v.get("rx_phase", 0), **common),
        seed=v.get("seed", 0),
    )


def read_scenario(path) -> EncounterScenario:
    return parse_scenario(Path(path).read_text())


def write_trace(samples: Sequence[RssSample], path) -> None:
    rows = ["time_ms,rss_dbm,true_distance_m"]
    rows += [f"{int(s.timestamp)},{s.rss!r},{s.true_distance!r}" for s in samples]
    Path(path).write_text("\n".join(rows) + "\n")
