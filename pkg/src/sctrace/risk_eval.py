"""Outcome taxonomy, confusion matrices and the accuracy studies.

Ground truth for a contact is ``h`` (within threshold), ``l`` (beyond it) or
``a`` (absent, never met the infected user).  Predictions are +1, -1 or 0,
where 0 means no signature matched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .classifiers import HIGH, LOW, encode_many, pl_classify_many, train
from .dataset_io import as_dataset, split_indices, summarize
from .filtering import filter_segments
from .signal_model import DEFAULT_D_MAX, PathLossModel, estimate_distances, fit_path_loss

METHODS = ("DT", "LDA", "NB", "kNN", "SVM", "PL")
DEFAULT_REPEATS = 30
Z95 = 1.959963984540054


class DegenerateEvaluationError(ValueError):
    pass


def classify_outcome(predicted: int, truth: str) -> str:
    """Map a (prediction, truth) pair onto tp/tn/fp/fn/miss.

    A low-risk call on a low-risk contact is a correct detection; it is
    reported as ``"tl"`` so every pair lands in exactly one bucket.
    """
    if truth not in ("h", "l", "a") or predicted not in (HIGH, LOW, 0):
        raise ValueError(f"bad outcome pair ({predicted!r}, {truth!r})")
    if predicted == HIGH:
        return "tp" if truth == "h" else "fp"
    if predicted == 0:
        return "tn" if truth == "a" else "miss"
    return "tl" if truth == "l" else "fn"


@dataclass
class OutcomeTally:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0
    miss: int = 0
    tl: int = 0

    def add(self, predicted: int, truth: str) -> None:
        bucket = classify_outcome(predicted, truth)
        setattr(self, bucket, getattr(self, bucket) + 1)

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn + self.miss + self.tl


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts indexed ``[predicted][truth]`` with index 0 = +1 and 1 = -1."""

    counts: tuple[tuple[int, int], tuple[int, int]]

    @property
    def total(self) -> int:
        return sum(map(sum, self.counts))

    @property
    def accuracy(self) -> float:
        if self.total == 0:
            raise ValueError("empty confusion matrix")
        return (self.counts[0][0] + self.counts[1][1]) / self.total

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(tuple(tuple(a + b for a, b in zip(r1, r2))
                                     for r1, r2 in zip(self.counts, other.counts)))

    def format(self) -> str:
        (pp, pn), (np_, nn) = self.counts
        return ("predicted\\truth,+1,-1\n"
                f"+1,{pp},{pn}\n"
                f"-1,{np_},{nn}\n")


def confusion_and_accuracy(predictions, truths) -> tuple[ConfusionMatrix, float]:
    p = np.asarray(predictions)
    t = np.asarray(truths)
    if p.shape != t.shape or p.size == 0:
        raise ValueError("need equal-length, non-empty label sequences")
    counts = tuple(tuple(int(np.count_nonzero((p == a) & (t == b))) for b in (HIGH, LOW)) for a in (HIGH, LOW))
    cm = ConfusionMatrix(counts)
    return cm, cm.accuracy


@dataclass(frozen=True)
class AccuracyReport:
    mean: float
    ci_lo: float
    ci_hi: float
    repeats: int
    accuracies: tuple[float, ...] = ()
    confusion: ConfusionMatrix | None = field(default=None, compare=False)


def summarize_accuracies(accs: Sequence[float], confusion=None) -> AccuracyReport:
    a = np.asarray(accs, dtype=float)
    mean = float(a.mean())
    half = Z95 * float(a.std(ddof=1)) / math.sqrt(len(a)) if len(a) > 1 else 0.0
    return AccuracyReport(mean, mean - half, mean + half, len(a), tuple(a.tolist()), confusion)


def truth_labels(true_distance, threshold: float) -> np.ndarray:
    return np.where(np.asarray(true_distance) <= threshold, HIGH, LOW)


def fit_case_model(rss, true_distance) -> PathLossModel:
    """Path-loss fit to the per-distance mean RSS of the given rows."""
    d = np.asarray(true_distance)
    r = np.asarray(rss)
    points = [(float(x), float(r[d == x].mean())) for x in np.unique(d)]
    return fit_path_loss(points)


def evaluate_case(data, method: str, window: int = 100, threshold: float = 2.0, split_seed=0,
                  repeats: int = DEFAULT_REPEATS, pl_model: PathLossModel | None = None,
                  hyperparams: dict | None = None, fraction: float = 0.8) -> AccuracyReport:
    """Repeated 80/20 evaluation of one method on one case.

    RSS is smoothed once per contiguous (tx, rx, distance) segment, then each
    repeat draws a fresh split.  ``PL`` uses ``pl_model`` when given and
    otherwise fits the path-loss model on the training split.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    ds = as_dataset(data)
    if np.any(np.isnan(ds.true_distance)):
        raise DegenerateEvaluationError("evaluation needs ground-truth distances")
    y = truth_labels(ds.true_distance, threshold)
    if np.all(y == y[0]):
        raise DegenerateEvaluationError(f"all samples fall in one class at threshold {threshold} m")
    rss = filter_segments(ds.rss, ds.segment_ids(), window)
    X = encode_many(rss) if method != "PL" else None
    accs, total = [], None
    for r in range(repeats):
        tr, te = split_indices(len(ds), fraction, seed=[int(split_seed), r])
        if len(te) == 0:
            raise DegenerateEvaluationError("empty test split")
        if method == "PL":
            model = pl_model or fit_case_model(rss[tr], ds.true_distance[tr])
            pred = pl_classify_many(model, rss[te], threshold)
        else:
            clf = train(method, X[tr], y[tr], hyperparams, seed=[int(split_seed), r])
            pred = clf.predict(X[te])
        cm, acc = confusion_and_accuracy(pred, y[te])
        accs.append(acc)
        total = cm if total is None else total + cm
    return summarize_accuracies(accs, total)


def sweep_window(data, method: str, windows: Sequence[int], **kw) -> list[tuple[int, float]]:
    return [(w, evaluate_case(data, method, window=w, **kw).mean) for w in windows]


def sweep_threshold(data, methods: Sequence[str] = ("PL", "DT", "LDA"), thresholds: Sequence[float] = (2.0,),
                    **kw) -> list[tuple[str, float, float]]:
    return [(m, t, evaluate_case(data, m, threshold=t, **kw).mean) for m in methods for t in thresholds]


def _episodes(ds):
    seg = ds.segment_ids()
    bounds = np.flatnonzero(np.diff(seg)) + 1
    return np.split(np.arange(len(ds)), bounds)


def accuracy_over_time(data, durations_s: Sequence[float], model: PathLossModel | None = None,
                       threshold: float = 2.0, tiled: bool = False) -> list[tuple[float, float]]:
    """PL accuracy when each contact episode is judged from its first ``T`` seconds.

    An episode is a contiguous run with one (tx, rx, distance); its verdict
    is the PL label of the mean RSS over the kept packets.  With
    ``tiled=True`` every episode is cut into consecutive ``T``-second blocks,
    each judged separately.
    """
    ds = as_dataset(data)
    if model is None:
        model = fit_case_model(ds.rss, ds.true_distance)
    episodes = _episodes(ds)
    out = []
    for T in durations_s:
        preds, truths = [], []
        for idx in episodes:
            t = ds.timestamp[idx] - ds.timestamp[idx[0]]
            if tiled:
                block = np.floor(t / (T * 1000.0)).astype(np.int64)
                groups = [idx[block == b] for b in np.unique(block)]
            else:
                keep = t < T * 1000.0
                keep[0] = True
                groups = [idx[keep]]
            for g in groups:
                preds.append(pl_classify_many(model, [ds.rss[g].mean()], threshold)[0])
                truths.append(HIGH if ds.true_distance[idx[0]] <= threshold else LOW)
        out.append((T, confusion_and_accuracy(preds, truths)[1]))
    return out


@dataclass(frozen=True, eq=False)
class ErrorCdf:
    errors: np.ndarray
    cdf: np.ndarray
    mae: float

    def percentile(self, q: float) -> float:
        """Smallest error e with empirical CDF(e) >= q."""
        return float(np.quantile(self.errors, q, method="inverted_cdf"))

    def rows(self) -> list[tuple[float, float]]:
        return list(zip(self.errors.tolist(), self.cdf.tolist()))


def distance_error_cdf(data, model: PathLossModel, window: int = 100, d_max: float = DEFAULT_D_MAX) -> ErrorCdf:
    ds = as_dataset(data)
    if np.any(np.isnan(ds.true_distance)):
        raise ValueError("error CDF needs ground-truth distances")
    rss = filter_segments(ds.rss, ds.segment_ids(), window)
    est, _ = estimate_distances(model, rss, d_max)
    err = np.sort(np.abs(est - ds.true_distance))
    cdf = np.arange(1, len(err) + 1) / len(err)
    return ErrorCdf(err, cdf, float(err.mean()))


def table2_rows(data):
    return summarize(data)
