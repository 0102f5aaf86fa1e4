"""Loading, validating and summarising RSS measurement files.

Each case (HH, HP, HB, PB, PP, BB) is held column-wise in a ``CaseDataset``.
Source files are plain CSV; a ``ColumnMapping`` says where each field lives,
either by header name or by zero-based column index.
"""

from __future__ import annotations

import csv
import logging
import math
import re
import warnings
from dataclasses import dataclass, fields
from datetime import datetime
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .signal_model import CASES, TABLE_II, DistanceStats, RssSample

log = logging.getLogger(__name__)

PUBLISHED_COUNTS = {"HH": 19_903, "HP": 16_081, "HB": 10_330, "PB": 19_161, "PP": 24_151, "BB": 34_092}
PUBLISHED_TOTAL = 123_718


class SchemaError(ValueError):
    pass


class EmptyDatasetError(ValueError):
    pass


class DegenerateSplitWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ColumnMapping:
    rss: str | int
    true_distance: str | int
    timestamp: str | int | None = None
    elapsed: str | int | None = None
    tx_name: str | int | None = None
    payload: str | int | None = None
    mac: str | int | None = None

    def __post_init__(self):
        if self.rss is None or self.true_distance is None:
            raise SchemaError("rss and true_distance mappings are mandatory")

    def uses_names(self) -> bool:
        return any(isinstance(getattr(self, f.name), str) for f in fields(self))


# Field order as logged by the measurement app: distance, phone name, MAC,
# payload, RSS, elapsed, timestamp.
DEFAULT_MAPPING = ColumnMapping(true_distance=0, tx_name=1, mac=2, payload=3, rss=4, elapsed=5, timestamp=6)
TRACE_MAPPING = ColumnMapping(rss="rss_dbm", true_distance="true_distance_m", timestamp="time_ms")


def load_mapping(path) -> ColumnMapping:
    """Read ``field=column`` lines; integer values are column indices."""
    values = {}
    names = {f.name for f in fields(ColumnMapping)}
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not sep or key not in names:
            raise SchemaError(f"bad mapping line {line!r}")
        values[key] = int(val) if re.fullmatch(r"\d+", val) else val
    try:
        return ColumnMapping(**values)
    except TypeError as exc:
        raise SchemaError(str(exc)) from None


@dataclass(frozen=True, eq=False)
class CaseDataset:
    case: str
    rss: np.ndarray
    true_distance: np.ndarray
    timestamp: np.ndarray
    elapsed: np.ndarray
    tx_id: np.ndarray
    rx_id: np.ndarray
    source: str = ""
    skipped: int = 0

    def __post_init__(self):
        n = len(self.rss)
        for name in ("true_distance", "timestamp", "elapsed", "tx_id", "rx_id"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"column {name} has the wrong length")

    def __len__(self):
        return len(self.rss)

    @classmethod
    def from_samples(cls, samples: Sequence[RssSample], case: str | None = None, source: str = "") -> "CaseDataset":
        samples = list(samples)
        labels = {s.case for s in samples}
        if case is None:
            if len(labels) > 1:
                raise ValueError(f"samples mix cases {sorted(labels)}")
            case = labels.pop() if labels else "HH"
        elif labels - {case}:
            raise ValueError(f"samples carry case labels {sorted(labels)}, expected {case}")
        return cls(
            case=case,
            rss=np.array([s.rss for s in samples], dtype=float),
            true_distance=np.array([np.nan if s.true_distance is None else s.true_distance for s in samples], dtype=float),
            timestamp=np.array([s.timestamp for s in samples], dtype=float),
            elapsed=np.array([s.elapsed for s in samples], dtype=float),
            tx_id=np.array([s.tx_id for s in samples], dtype=object),
            rx_id=np.array([s.rx_id for s in samples], dtype=object),
            source=source,
        )

    @property
    def samples(self) -> list[RssSample]:
        return [
            RssSample(rss=float(r), timestamp=float(t), true_distance=None if math.isnan(d) else float(d),
                      tx_id=str(tx), rx_id=str(rx), case=self.case, elapsed=float(e))
            for r, t, d, e, tx, rx in zip(self.rss, self.timestamp, self.true_distance,
                                          self.elapsed, self.tx_id, self.rx_id)
        ]

    def subset(self, idx) -> "CaseDataset":
        return CaseDataset(self.case, self.rss[idx], self.true_distance[idx], self.timestamp[idx],
                           self.elapsed[idx], self.tx_id[idx], self.rx_id[idx], self.source)

    def with_rss(self, rss) -> "CaseDataset":
        return CaseDataset(self.case, np.asarray(rss, dtype=float), self.true_distance, self.timestamp,
                           self.elapsed, self.tx_id, self.rx_id, self.source, self.skipped)

    def segment_ids(self) -> np.ndarray:
        """Run index of contiguous rows sharing (tx, rx, true_distance)."""
        n = len(self)
        if n == 0:
            return np.zeros(0, dtype=np.int64)
        d = np.nan_to_num(self.true_distance, nan=-1.0)
        change = (d[1:] != d[:-1]) | (self.tx_id[1:] != self.tx_id[:-1]) | (self.rx_id[1:] != self.rx_id[:-1])
        return np.concatenate([[0], np.cumsum(change)])


def as_dataset(data) -> CaseDataset:
    return data if isinstance(data, CaseDataset) else CaseDataset.from_samples(data)


def concat(datasets: Sequence[CaseDataset]) -> CaseDataset:
    if not datasets:
        raise EmptyDatasetError("nothing to concatenate")
    first = datasets[0]
    return CaseDataset(
        first.case,
        *(np.concatenate([getattr(ds, col) for ds in datasets])
          for col in ("rss", "true_distance", "timestamp", "elapsed", "tx_id", "rx_id")),
        source=";".join(ds.source for ds in datasets),
        skipped=sum(ds.skipped for ds in datasets),
    )


def _parse_time(text: str) -> float:
    """Milliseconds from a numeric stamp, an ISO datetime, or a time of day."""
    text = text.strip()
    try:
        return float(text)
    except ValueError:
        pass
    try:
        return datetime.fromisoformat(text).timestamp() * 1000.0
    except ValueError:
        pass
    m = re.fullmatch(r"(\d{1,2}):(\d{2}):(\d{2}(?:\.\d+)?)", text)
    if m:
        h, mi, s = m.groups()
        return ((int(h) * 60 + int(mi)) * 60 + float(s)) * 1000.0
    raise ValueError(f"unparseable time {text!r}")


def _resolve(mapping: ColumnMapping, header: list[str] | None) -> dict[str, int]:
    cols = {}
    for f in fields(mapping):
        ref = getattr(mapping, f.name)
        if ref is None:
            continue
        if isinstance(ref, str):
            if header is None or ref not in header:
                raise SchemaError(f"column {ref!r} for {f.name} not found in header")
            cols[f.name] = header.index(ref)
        else:
            cols[f.name] = int(ref)
    return cols


def _csv_files(path: Path) -> list[Path]:
    if path.is_dir():
        return sorted(p for p in path.rglob("*.csv") if p.is_file())
    return [path]


def load_case(path, mapping: ColumnMapping = DEFAULT_MAPPING, case: str = "HH") -> CaseDataset:
    """Read one CSV file (or every ``*.csv`` under a directory) into a dataset.

    Rows whose RSS or distance will not parse, or whose distance is not
    positive, are skipped and tallied in ``skipped``.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file or directory: {path}")
    files = _csv_files(path)
    if not files:
        raise EmptyDatasetError(f"no CSV files under {path}")
    parts = [_load_file(f, mapping, case) for f in files]
    parts = [p for p in parts if len(p)]
    skipped = 0
    if not parts:
        raise EmptyDatasetError(f"{path}: no valid rows")
    ds = concat(parts) if len(parts) > 1 else parts[0]
    skipped = ds.skipped
    if skipped:
        log.warning("%s: skipped %d malformed rows", path, skipped)
    return ds


def _load_file(path: Path, mapping: ColumnMapping, case: str) -> CaseDataset:
    with open(path, newline="", encoding="utf-8-sig") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        return CaseDataset(case, *(np.zeros(0) for _ in range(4)), np.zeros(0, object), np.zeros(0, object),
                           source=str(path))
    header = None
    if mapping.uses_names():
        header = [c.strip() for c in rows[0]]
        rows = rows[1:]
    else:
        try:
            float(rows[0][int(mapping.rss)])
        except (ValueError, IndexError):
            rows = rows[1:]
    cols = _resolve(mapping, header)
    out = {k: [] for k in ("rss", "d", "t", "e", "tx")}
    skipped = 0
    for i, row in enumerate(rows):
        try:
            rss = float(row[cols["rss"]])
            d = float(row[cols["true_distance"]])
            if not (math.isfinite(rss) and d > 0 and math.isfinite(d)):
                raise ValueError
            t = _parse_time(row[cols["timestamp"]]) if "timestamp" in cols else float(i)
            e = float(row[cols["elapsed"]]) if "elapsed" in cols else 0.0
            if e < 0 or math.isnan(e):
                raise ValueError
            tx = row[cols["tx_name"]].strip() if "tx_name" in cols else ""
        except (ValueError, IndexError):
            skipped += 1
            continue
        out["rss"].append(rss)
        out["d"].append(d)
        out["t"].append(t)
        out["e"].append(e)
        out["tx"].append(tx)
    n = len(out["rss"])
    return CaseDataset(
        case=case,
        rss=np.array(out["rss"], dtype=float),
        true_distance=np.array(out["d"], dtype=float),
        timestamp=np.array(out["t"], dtype=float),
        elapsed=np.array(out["e"], dtype=float),
        tx_id=np.array(out["tx"], dtype=object),
        rx_id=np.full(n, path.stem, dtype=object),
        source=str(path),
        skipped=skipped,
    )


def load_trace(path, case: str = "HH") -> CaseDataset:
    """Read a simulator trace (``time_ms,rss_dbm,true_distance_m``)."""
    ds = load_case(path, TRACE_MAPPING, case)
    elapsed = np.diff(ds.timestamp, prepend=ds.timestamp[:1])
    return CaseDataset(ds.case, ds.rss, ds.true_distance, ds.timestamp, elapsed,
                       np.full(len(ds), "tx", dtype=object), np.full(len(ds), "rx", dtype=object),
                       ds.source, ds.skipped)


def discover_case_files(root) -> dict[str, list[Path]]:
    """Group CSV files under ``root`` by the case token in their path (e.g. ``HH/``, ``pb_1m.csv``)."""
    root = Path(root)
    found: dict[str, list[Path]] = {}
    for f in _csv_files(root):
        rel = str(f.relative_to(root)) if root.is_dir() else f.name
        for case in CASES:
            if re.search(rf"(?<![A-Za-z]){case}(?![A-Za-z])", rel, flags=re.IGNORECASE):
                found.setdefault(case, []).append(f)
                break
    return found


def load_cases(root, mapping: ColumnMapping = DEFAULT_MAPPING) -> dict[str, CaseDataset]:
    out = {}
    for case, files in sorted(discover_case_files(root).items(), key=lambda kv: CASES.index(kv[0])):
        parts = [_load_file(f, mapping, case) for f in files]
        parts = [p for p in parts if len(p)]
        if parts:
            out[case] = concat(parts)
    return out


def summarize(dataset) -> list[DistanceStats]:
    """Count, mean and sample variance (n-1) of RSS per distinct true distance."""
    ds = as_dataset(dataset)
    if len(ds) == 0:
        raise EmptyDatasetError("cannot summarise an empty dataset")
    ok = ~np.isnan(ds.true_distance)
    d, r = ds.true_distance[ok], ds.rss[ok]
    stats = []
    for dist in np.unique(d):
        x = r[d == dist]
        var = float(np.var(x, ddof=1)) if len(x) > 1 else 0.0
        stats.append(DistanceStats(float(dist), int(len(x)), float(np.mean(x)), var))
    return stats


def format_summary(stats: Iterable[DistanceStats], delimiter: str = ",") -> str:
    rows = [delimiter.join(("distance_m", "count", "mean_rss_dbm", "var_rss_dbm2"))]
    rows += [delimiter.join((f"{s.distance:g}", str(s.count), f"{s.mean_rss:.4f}", f"{s.var_rss:.4f}")) for s in stats]
    return "\n".join(rows) + "\n"


def split_indices(n: int, fraction: float = 0.8, seed=None) -> tuple[np.ndarray, np.ndarray]:
    if n < 2:
        raise ValueError("need at least two samples to split")
    if not 0 < fraction <= 1:
        raise ValueError("fraction must be in (0, 1]")
    perm = np.random.default_rng(seed).permutation(n)
    cut = int(round(fraction * n))
    if cut >= n:
        warnings.warn("split leaves an empty test set", DegenerateSplitWarning, stacklevel=2)
    return perm[:cut], perm[cut:]


def split_train_test(dataset, fraction: float = 0.8, seed=None) -> tuple[CaseDataset, CaseDataset]:
    ds = as_dataset(dataset)
    tr, te = split_indices(len(ds), fraction, seed)
    return ds.subset(tr), ds.subset(te)


def synthesize_table2_case(seed=0, case: str = "HH", scale: float = 1.0, period_ms: int = 100,
                           means=None, variances=None) -> CaseDataset:
    """Gaussian stand-in for a measured case, one contiguous run per distance.

    Defaults reproduce the hand-to-hand per-distance counts, means and
    variances; packets are spaced ``period_ms`` apart.
    """
    rng = np.random.default_rng(seed)
    cols = {k: [] for k in ("rss", "d", "t")}
    t0 = 0.0
    for i, (dist, count, mean, var) in enumerate(TABLE_II):
        if means is not None:
            mean = means[i]
        if variances is not None:
            var = variances[i]
        k = max(1, int(round(count * scale)))
        cols["rss"].append(rng.normal(mean, math.sqrt(var), k))
        cols["d"].append(np.full(k, dist))
        cols["t"].append(t0 + period_ms * np.arange(k))
        t0 += period_ms * k + 60_000
    rss = np.concatenate(cols["rss"])
    n = len(rss)
    return CaseDataset(
        case=case, rss=rss, true_distance=np.concatenate(cols["d"]), timestamp=np.concatenate(cols["t"]),
        elapsed=np.where(np.arange(n) == 0, 0.0, float(period_ms)),
        tx_id=np.full(n, "A", dtype=object), rx_id=np.full(n, "B", dtype=object), source=f"synthetic:{seed}",
    )
