"""Causal moving-average smoothing of RSS streams."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FIG7_WINDOW = 10
SATURATION_WINDOW = 100


class UndefinedGainError(ZeroDivisionError):
    pass


@dataclass(frozen=True)
class FilterConfig:
    window: int = SATURATION_WINDOW

    def __post_init__(self):
        if int(self.window) != self.window or self.window < 1:
            raise ValueError(f"window must be a positive integer, got {self.window}")


def moving_average(values, window: int) -> np.ndarray:
    """Trailing mean over the last ``window`` values; the head uses whatever is available."""
    if window < 1:
        raise ValueError("window must be >= 1")
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        return x.copy()
    if window == 1:
        return x.copy()
    # cumulative sums drift on long streams, so sum each window directly
    padded = np.concatenate([np.zeros(window - 1), x])
    sums = np.lib.stride_tricks.sliding_window_view(padded, window).sum(axis=1)
    counts = np.minimum(np.arange(1, x.size + 1), window)
    return sums / counts


def filter_segments(values, segment_ids, window: int) -> np.ndarray:
    """Apply ``moving_average`` separately to each contiguous run of equal segment ids."""
    x = np.asarray(values, dtype=float)
    seg = np.asarray(segment_ids)
    if x.shape != seg.shape:
        raise ValueError("values and segment ids must align")
    if x.size == 0 or window == 1:
        return x.copy()
    bounds = np.flatnonzero(seg[1:] != seg[:-1]) + 1
    starts = np.concatenate([[0], bounds])
    ends = np.concatenate([bounds, [x.size]])
    out = np.empty_like(x)
    for a, b in zip(starts, ends):
        out[a:b] = moving_average(x[a:b], window)
    return out


def performance_gain(acc_filtered: float, acc_raw: float) -> float:
    """Relative accuracy change from smoothing: ``(filtered - raw) / raw``."""
    if acc_raw == 0:
        raise UndefinedGainError("raw accuracy is zero; gain is undefined")
    return (acc_filtered - acc_raw) / acc_raw
