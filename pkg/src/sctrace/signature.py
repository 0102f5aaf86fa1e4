"""Environmental signatures, their 31-byte payload form, and the local log.

A device keeps a secret dictionary (a 31 x m matrix).  Multiplying it with
the vector of time-averaged RSS readings from the m ambient BLE devices gives
a 31-component signature that is quantised to fill the advertising payload.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Literal, Sequence

import numpy as np

SIGNATURE_DIM = 31
PAYLOAD_BYTES = 31
DEFAULT_BOUNDS = (-10_000.0, 10_000.0)
EXPIRY_MS = 14 * 24 * 3600 * 1000
DEFAULT_T_G_MS = 5 * 60 * 1000


class EmptyEnvironmentError(ValueError):
    pass


class DimensionError(ValueError):
    pass


class EncodingError(ValueError):
    pass


@dataclass(frozen=True)
class ObservedVector:
    values: tuple[float, ...]
    device_ids: tuple[str, ...] = ()
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        ids = tuple(self.device_ids) or tuple(f"b{j}" for j in range(len(self.values)))
        object.__setattr__(self, "device_ids", ids)
        if len(self.values) != len(self.device_ids):
            raise DimensionError("values and device_ids must have equal length")

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True, eq=False)
class Dictionary:
    matrix: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != SIGNATURE_DIM:
            raise DimensionError(f"dictionary must have {SIGNATURE_DIM} rows, got shape {m.shape}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def m(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True, eq=False)
class SignatureVector:
    components: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        comp = np.array(self.components, dtype=float)
        if comp.shape != (SIGNATURE_DIM,):
            raise DimensionError(f"signature must have {SIGNATURE_DIM} components")
        if not np.all(np.isfinite(comp)):
            raise EncodingError("signature components must be finite")
        comp.setflags(write=False)
        object.__setattr__(self, "components", comp)


@dataclass(frozen=True, order=True)
class SignaturePayload:
    data: bytes

    def __post_init__(self):
        if len(self.data) != PAYLOAD_BYTES:
            raise EncodingError(f"payload must be exactly {PAYLOAD_BYTES} bytes, got {len(self.data)}")

    def hex(self) -> str:
        return self.data.hex()

    @classmethod
    def fromhex(cls, text: str) -> "SignaturePayload":
        text = text.strip()
        if len(text) != 2 * PAYLOAD_BYTES:
            raise EncodingError(f"payload hex must be {2 * PAYLOAD_BYTES} characters")
        return cls(bytes.fromhex(text))


@dataclass(frozen=True)
class SignatureRecord:
    payload: SignaturePayload
    tau: int
    kind: Literal["broadcast", "observed"]
    rss: float | None = None
    source: str = ""  # simulation bookkeeping only; never persisted

    def __post_init__(self):
        if self.kind not in ("broadcast", "observed"):
            raise ValueError(f"unknown record kind {self.kind!r}")
        if (self.kind == "observed") != (self.rss is not None):
            raise ValueError("observed records carry an RSS value; broadcast records do not")


def generate_dictionary(m: int, seed) -> Dictionary:
    """Secret 31 x m transform with entries uniform on [-1, 1]."""
    if m < 1:
        raise EmptyEnvironmentError("no ambient devices observed (m = 0)")
    rng = np.random.default_rng(seed)
    return Dictionary(rng.uniform(-1.0, 1.0, size=(SIGNATURE_DIM, m)), seed)


def generate_signature(dictionary: Dictionary, obs: ObservedVector) -> SignatureVector:
    if dictionary.m != len(obs):
        raise DimensionError(f"dictionary has {dictionary.m} columns but observation has {len(obs)} values")
    return SignatureVector(dictionary.matrix @ np.asarray(obs.values), obs.t)


def signature_bounds(m: int) -> tuple[float, float]:
    """Quantisation range for an m-device environment (3x the |RSS| <= 100 dBm worst case)."""
    return (-300.0 * m, 300.0 * m)


def quantize_signature(sig: SignatureVector, scale_bounds: tuple[float, float] = DEFAULT_BOUNDS) -> SignaturePayload:
    lo, hi = scale_bounds
    if not lo < hi:
        raise ValueError("scale bounds need lo < hi")
    comp = np.asarray(sig.components, dtype=float)
    if not np.all(np.isfinite(comp)):
        raise EncodingError("cannot encode non-finite signature components")
    scaled = np.clip((comp - lo) / (hi - lo) * 255.0, 0.0, 255.0)
    return SignaturePayload(np.rint(scaled).astype(np.uint8).tobytes())


class SignatureLog:
    """Local signature store, kept sorted by ``tau``.

    Single-writer; ``snapshot`` returns an immutable view for readers.
    """

    def __init__(self, records: Iterable[SignatureRecord] = ()):
        self._records: list[SignatureRecord] = sorted(records, key=lambda r: r.tau)

    def __len__(self):
        return len(self._records)

    def __iter__(self):
        return iter(tuple(self._records))

    def append(self, record: SignatureRecord) -> "SignatureLog":
        if not self._records or self._records[-1].tau <= record.tau:
            self._records.append(record)
        else:
            bisect.insort_right(self._records, record, key=lambda r: r.tau)
        return self

    def snapshot(self) -> tuple[SignatureRecord, ...]:
        return tuple(self._records)

    def observed(self) -> list[SignatureRecord]:
        return [r for r in self._records if r.kind == "observed"]

    def broadcast_payloads(self) -> set[SignaturePayload]:
        return {r.payload for r in self._records if r.kind == "broadcast"}

    def expire(self, now: int, period: int = EXPIRY_MS) -> "SignatureLog":
        if not period > 0:
            raise ValueError("expiry period must be > 0")
        self._records = [r for r in self._records if now - r.tau <= period]
        return self

    def save(self, path) -> None:
        write_log(self._records, path)


def log_record(store: SignatureLog, record: SignatureRecord) -> SignatureLog:
    return store.append(record)


def expire_signatures(store: SignatureLog, now: int, period: int = EXPIRY_MS) -> SignatureLog:
    return store.expire(now, period)


def match_signatures(observed_log: Sequence[SignatureRecord],
                     uploaded: Iterable[SignaturePayload]) -> list[tuple[SignatureRecord, SignaturePayload]]:
    """Observed records whose payload equals an uploaded payload byte for byte."""
    wanted = {p.data: p for p in uploaded}
    hits = []
    for rec in observed_log:
        if rec.kind != "observed":
            raise ValueError("matching runs over observed records only")
        p = wanted.get(rec.payload.data)
        if p is not None:
            hits.append((rec, p))
    hits.sort(key=lambda h: h[0].tau)
    return hits


def write_log(records: Iterable[SignatureRecord], path) -> None:
    lines = []
    for r in records:
        rss = "" if r.rss is None else repr(float(r.rss))
        lines.append(f"{r.tau},{r.kind},{rss},{r.payload.hex()}")
    Path(path).write_text("".join(line + "\n" for line in lines))


def read_log(path) -> SignatureLog:
    log = SignatureLog()
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        parts = line.strip().split(",")
        if len(parts) != 4:
            raise ValueError(f"{path}:{lineno}: expected tau,kind,rss,payload_hex")
        tau, kind, rss, hexpayload = parts
        log.append(SignatureRecord(SignaturePayload.fromhex(hexpayload), int(tau), kind,
                                   float(rss) if rss else None))
    return log


def write_payloads(payloads: Iterable[SignaturePayload], path) -> None:
    Path(path).write_text("".join(p.hex() + "\n" for p in sorted(set(payloads))))


def read_payloads(path) -> set[SignaturePayload]:
    return {SignaturePayload.fromhex(line) for line in Path(path).read_text().splitlines() if line.strip()}
