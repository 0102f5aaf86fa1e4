"""Two-phase tracing demo: log signatures during encounters, then match after a diagnosis.

Devices sit at fixed positions around the infected one.  Every ordered pair
runs the advertising/scanning simulator; each reception logs the sender's
current payload together with its RSS.  After the infected device uploads
its broadcast payloads, every other device matches its own log and turns
the matched RSS readings into a risk label.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .classifiers import ABSENT, HIGH, LOW, TrainedClassifier, encode_many, pl_classify
from .filtering import moving_average
from .signal_model import PathLossModel, estimate_distance, reference_model, table2_variance
from .signature import (EXPIRY_MS, ObservedVector, SignatureLog, SignaturePayload, SignatureRecord,
                        generate_dictionary, generate_signature, match_signatures, quantize_signature,
                        signature_bounds)
from .timing import (DeviceTimingConfig, DistanceProfile, EncounterScenario, advertising_times, scan_windows,
                     simulate_reception)

AMBIENT_RSS_RANGE = (-95.0, -55.0)


@dataclass(frozen=True)
class TraceDevice:
    """A participant at ``distance`` metres from the infected device.

    ``active`` restricts the device to ``[start, end)`` ms; ``None`` means the whole run.
    """

    dev_id: str
    distance: float
    active: tuple[int, int] | None = None

    def __post_init__(self):
        if not self.distance >= 0:
            raise ValueError(f"device {self.dev_id}: distance must be >= 0")
        if self.active is not None and not self.active[0] < self.active[1]:
            raise ValueError(f"device {self.dev_id}: empty active period")


@dataclass(frozen=True, eq=False)
class PairSchedule:
    """Everything the simulator decided for one sender/receiver pair."""

    tx: str
    rx: str
    adv_times: np.ndarray
    windows: tuple[tuple[int, int], ...]
    copresence: tuple[int, int] | None
    distance: float
    times: np.ndarray
    rss: np.ndarray


@dataclass(frozen=True)
class DeviceOutcome:
    dev_id: str
    label: int
    matches: int
    copresence_ms: int
    mean_rss: float | None
    est_distance: float | None


@dataclass
class TraceResult:
    infected: str
    outcomes: list[DeviceOutcome]
    uploaded: int
    schedules: dict[tuple[str, str], PairSchedule] = field(default_factory=dict, repr=False)
    logs: dict[str, SignatureLog] = field(default_factory=dict, repr=False)

    def format(self) -> str:
        rows = ["device,label,matches,copresence_ms,mean_rss_dbm,est_distance_m"]
        for o in self.outcomes:
            mean = "" if o.mean_rss is None else f"{o.mean_rss:.4f}"
            est = "" if o.est_distance is None else f"{o.est_distance:.4f}"
            label = f"{o.label:+d}" if o.label else "0"
            rows.append(f"{o.dev_id},{label},{o.matches},{o.copresence_ms},{mean},{est}")
        rows.append("# no duration cutoff applied: co-presence time is reported, not thresholded")
        return "\n".join(rows) + "\n"


def default_devices(n_devices: int, duration: int) -> list[TraceDevice]:
    """Infected ``d0`` plus others cycling through 1 m, 5 m, 1.5 m, 4 m; the last one arrives after ``d0`` leaves."""
    if n_devices < 2:
        raise ValueError("need at least two devices")
    cycle = (1.0, 5.0, 1.5, 4.0)
    half = duration // 2
    devs = [TraceDevice("d0", 0.0, (0, half))]
    for i in range(1, n_devices):
        if i == n_devices - 1 and n_devices > 2:
            devs.append(TraceDevice(f"d{i}", 1.0, (half, duration)))
        else:
            devs.append(TraceDevice(f"d{i}", cycle[(i - 1) % len(cycle)], (0, half)))
    return devs


def _positions(devices, infected: str, seed) -> dict[str, np.ndarray]:
    rng = np.random.default_rng([int(seed), 17])
    pos = {}
    for dev in devices:
        theta = rng.uniform(0.0, 2.0 * math.pi)
        r = 0.0 if dev.dev_id == infected else dev.distance
        pos[dev.dev_id] = r * np.array([math.cos(theta), math.sin(theta)])
    return pos


def _overlap(a: TraceDevice, b: TraceDevice, duration: int) -> tuple[int, int] | None:
    lo = max(a.active[0] if a.active else 0, b.active[0] if b.active else 0)
    hi = min(a.active[1] if a.active else duration, b.active[1] if b.active else duration)
    return (lo, hi) if lo < hi else None


def _profile(span, distance: float) -> DistanceProfile:
    if span is None:
        return DistanceProfile(((0, math.inf),))
    lo, hi = span
    bps = [(0, math.inf if lo > 0 else distance), (lo, distance), (hi, math.inf)]
    return DistanceProfile(tuple(bps))


def _payload(dictionary, seed, dev_index: int, epoch: int, m: int) -> SignaturePayload:
    rng = np.random.default_rng([int(seed), dev_index, epoch])
    obs = ObservedVector(rng.uniform(*AMBIENT_RSS_RANGE, size=m))
    return quantize_signature(generate_signature(dictionary, obs), signature_bounds(m))


def run_trace_demo(devices, infected: str, duration: int, seed=0, model: PathLossModel | None = None,
                   timing: DeviceTimingConfig | None = None, threshold: float = 2.0, window: int = 100,
                   n_ambient: int = 8, classifier: TrainedClassifier | None = None) -> TraceResult:
    """Simulate all encounters, upload the infected device's payloads and match on every other device.

    A device with no match gets label 0 (absent).  Otherwise the matched RSS
    stream is smoothed with a trailing ``window`` and its mean is classified by
    the path-loss model, or by ``classifier`` on the 8-bit feature when given.
    Co-presence time is the number of matched receptions times ``T_a``.
    """
    devices = list(devices)
    ids = [d.dev_id for d in devices]
    if len(set(ids)) != len(ids):
        raise ValueError("device ids must be unique")
    if infected not in ids:
        raise ValueError(f"infected device {infected!r} is not among the devices")
    if not duration > 0:
        raise ValueError("duration must be > 0")
    model = model or reference_model()
    timing = timing or DeviceTimingConfig()
    pos = _positions(devices, infected, seed)
    phase_rng = np.random.default_rng([int(seed), 29])
    configs = {d.dev_id: DeviceTimingConfig(timing.T_a, timing.T_s, timing.T_w, timing.T_g,
                                            int(phase_rng.integers(0, timing.T_s)), timing.jitter_max)
               for d in devices}

    dictionaries = {d.dev_id: generate_dictionary(n_ambient, [int(seed), i]) for i, d in enumerate(devices)}
    payloads: dict[tuple[str, int], SignaturePayload] = {}

    def payload_of(i: int, epoch: int) -> SignaturePayload:
        key = (ids[i], epoch)
        if key not in payloads:
            payloads[key] = _payload(dictionaries[ids[i]], seed, i, epoch, n_ambient)
        return payloads[key]

    logs = {dev_id: SignatureLog() for dev_id in ids}
    for i, dev in enumerate(devices):
        lo, hi = dev.active or (0, duration)
        for epoch in range(lo // timing.T_g, -(-hi // timing.T_g)):
            tau = max(lo, epoch * timing.T_g)
            logs[dev.dev_id].append(SignatureRecord(payload_of(i, epoch), tau, "broadcast"))

    schedules = {}
    for i, a in enumerate(devices):
        for j, b in enumerate(devices):
            if i == j:
                continue
            span = _overlap(a, b, duration)
            dist = max(float(np.linalg.norm(pos[a.dev_id] - pos[b.dev_id])), 0.05)
            scen = EncounterScenario(duration, _profile(span, dist), tx_config=configs[a.dev_id],
                                     rx_config=configs[b.dev_id], seed=int(seed) * 1_000_003 + i * 1009 + j,
                                     tx_id=a.dev_id, rx_id=b.dev_id)
            trace = simulate_reception(None, None, scen, model, table2_variance)
            # same seed, same first draws: these are the times the simulator broadcast at
            adv_times = advertising_times(configs[a.dev_id], duration, np.random.default_rng(scen.seed))
            schedules[(a.dev_id, b.dev_id)] = PairSchedule(
                a.dev_id, b.dev_id, adv_times, tuple(scan_windows(configs[b.dev_id], duration)),
                span, dist, trace.times, trace.rss)
            for t, r in zip(trace.times.tolist(), trace.rss.tolist()):
                logs[b.dev_id].append(SignatureRecord(payload_of(i, t // timing.T_g), int(t), "observed", float(r),
                                                      source=a.dev_id))

    uploaded = logs[infected].broadcast_payloads()
    outcomes = []
    for dev in devices:
        if dev.dev_id == infected:
            continue
        store = logs[dev.dev_id].expire(duration, EXPIRY_MS)
        hits = match_signatures(store.observed(), uploaded)
        if not hits:
            outcomes.append(DeviceOutcome(dev.dev_id, ABSENT, 0, 0, None, None))
            continue
        rss = moving_average([h[0].rss for h in hits], window)
        mean = float(rss.mean())
        est = estimate_distance(model, mean)
        if classifier is not None:
            label = int(classifier.predict(encode_many([mean]))[0])
        else:
            label = pl_classify(model, mean, threshold)[0]
        outcomes.append(DeviceOutcome(dev.dev_id, label, len(hits), len(hits) * timing.T_a, mean, est.distance))
    return TraceResult(infected, outcomes, len(uploaded), schedules, logs)


__all__ = ["TraceDevice", "PairSchedule", "DeviceOutcome", "TraceResult", "default_devices",
           "run_trace_demo", "HIGH", "LOW", "ABSENT"]
