"""High/low-risk classifiers over 8-bit RSS features.

Labels are +1 (high risk, within the distance threshold) and -1 (low risk).
Every learner here breaks ties toward +1: a false alarm is the safer error.
Since an 8-bit feature takes at most 256 values, most learners work on
per-pattern counts instead of raw rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import ClassVar

import numba
import numpy as np

from .signal_model import DEFAULT_D_MAX, PathLossModel, estimate_distance, estimate_distances

HIGH, LOW, ABSENT = 1, -1, 0
N_BITS = 8
_WEIGHTS = 1 << np.arange(N_BITS - 1, -1, -1)
_ALL_PATTERNS = ((np.arange(256)[:, None] >> np.arange(N_BITS - 1, -1, -1)) & 1).astype(np.uint8)
_POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.int64)

KINDS = ("DT", "LDA", "NB", "kNN", "SVM")


class DegenerateTrainingError(ValueError):
    """Training data lacks a class the learner needs."""


def encode_rss_8bit(rss: float) -> np.ndarray:
    """Big-endian bits of ``clamp(round(-rss), 0, 255)``."""
    return encode_many([rss])[0]


def encode_many(rss) -> np.ndarray:
    b = np.clip(np.rint(-np.asarray(rss, dtype=float)), 0, 255).astype(np.int64)
    return _ALL_PATTERNS[b]


def pattern_index(features) -> np.ndarray:
    """Integer 0..255 value of each bit row."""
    f = np.atleast_2d(np.asarray(features))
    if f.shape[1] != N_BITS or np.any((f != 0) & (f != 1)):
        raise ValueError("features must be rows of 8 binary values")
    return f.astype(np.int64) @ _WEIGHTS


def threshold_classify(distance: float, threshold: float = 2.0) -> int:
    if distance < 0 or not threshold > 0:
        raise ValueError("need distance >= 0 and threshold > 0")
    return HIGH if distance <= threshold else LOW


def pl_classify(model: PathLossModel, rss: float, threshold: float = 2.0,
                d_max: float = DEFAULT_D_MAX) -> tuple[int, bool]:
    """Path-loss baseline; returns ``(label, saturated)``. Saturated readings are low risk."""
    est = estimate_distance(model, rss, d_max)
    if est.saturated:
        return LOW, True
    return threshold_classify(est.distance, threshold), False


def pl_classify_many(model: PathLossModel, rss, threshold: float = 2.0,
                     d_max: float = DEFAULT_D_MAX) -> np.ndarray:
    d, sat = estimate_distances(model, rss, d_max)
    return np.where(~sat & (d <= threshold), HIGH, LOW)


def _check_labels(y) -> np.ndarray:
    y = np.asarray(y, dtype=np.int64)
    if np.any((y != HIGH) & (y != LOW)):
        raise ValueError("training labels must be +1 or -1")
    return y


def _pattern_counts(X, y):
    idx = pattern_index(X)
    pos = np.bincount(idx[y == HIGH], minlength=256)
    neg = np.bincount(idx[y == LOW], minlength=256)
    return pos, neg


@dataclass
class TrainedClassifier:
    kind: ClassVar[str] = ""
    train_meta: dict = field(default_factory=dict, kw_only=True)

    def predict(self, X) -> np.ndarray:
        idx = pattern_index(X)
        return self.pattern_labels()[idx]

    def predict_one(self, feature) -> int:
        return int(self.predict(np.asarray(feature)[None, :])[0])

    def pattern_labels(self) -> np.ndarray:
        """Label for each of the 256 possible feature patterns."""
        raise NotImplementedError

    def dump(self) -> str:
        raise NotImplementedError


# -- decision tree ----------------------------------------------------------

@dataclass
class TreeNode:
    bit: int | None = None
    zero: "TreeNode | None" = None
    one: "TreeNode | None" = None
    label: int = HIGH
    pos: int = 0
    neg: int = 0


def _gini(pos, neg):
    n = pos + neg
    with np.errstate(invalid="ignore", divide="ignore"):
        p = np.where(n > 0, pos / np.maximum(n, 1), 0.0)
    return 2.0 * p * (1.0 - p)


def _grow(patterns: np.ndarray, pos: np.ndarray, neg: np.ndarray, depth: int, max_depth):
    P, N = int(pos.sum()), int(neg.sum())
    node = TreeNode(label=HIGH if P >= N else LOW, pos=P, neg=N)
    if P == 0 or N == 0 or (max_depth is not None and depth >= max_depth):
        return node
    best = None
    for bit in range(N_BITS):
        on = patterns[:, bit] == 1
        p1, n1 = pos[on].sum(), neg[on].sum()
        p0, n0 = P - p1, N - n1
        if p1 + n1 == 0 or p0 + n0 == 0:
            continue
        score = ((p0 + n0) * _gini(p0, n0) + (p1 + n1) * _gini(p1, n1)) / (P + N)
        if best is None or score < best[0] - 1e-15:
            best = (score, bit, on)
    if best is None:
        return node
    _, bit, on = best
    node.bit = bit
    node.zero = _grow(patterns[~on], pos[~on], neg[~on], depth + 1, max_depth)
    node.one = _grow(patterns[on], pos[on], neg[on], depth + 1, max_depth)
    return node


@dataclass
class DecisionTree(TrainedClassifier):
    """CART on the bits with Gini impurity; leaves vote by majority."""

    kind: ClassVar[str] = "DT"
    root: TreeNode = field(default_factory=TreeNode)

    @classmethod
    def fit(cls, X, y, max_depth: int | None = None):
        y = _check_labels(y)
        pos, neg = _pattern_counts(X, y)
        seen = (pos + neg) > 0
        root = _grow(_ALL_PATTERNS[seen], pos[seen], neg[seen], 0, max_depth)
        return cls(root=root)

    def _leaf(self, bits) -> TreeNode:
        node = self.root
        while node.bit is not None:
            node = node.one if bits[node.bit] else node.zero
        return node

    def pattern_labels(self):
        return np.array([self._leaf(p).label for p in _ALL_PATTERNS], dtype=np.int64)

    def dump(self) -> str:
        lines = ["DT"]

        def walk(node, depth, edge):
            pad = "  " * depth
            if node.bit is None:
                lines.append(f"{pad}{edge}leaf label={node.label:+d} pos={node.pos} neg={node.neg}")
            else:
                lines.append(f"{pad}{edge}split bit={node.bit} pos={node.pos} neg={node.neg}")
                walk(node.zero, depth + 1, "0: ")
                walk(node.one, depth + 1, "1: ")

        walk(self.root, 0, "")
        return "\n".join(lines) + "\n"


# -- linear discriminant ----------------------------------------------------

@dataclass
class LinearModel(TrainedClassifier):
    weights: np.ndarray = field(default_factory=lambda: np.zeros(N_BITS))
    bias: float = 0.0

    def decision(self, X) -> np.ndarray:
        return np.atleast_2d(np.asarray(X, dtype=float)) @ self.weights + self.bias

    def predict(self, X):
        return np.where(self.decision(X) >= 0, HIGH, LOW)

    def pattern_labels(self):
        return self.predict(_ALL_PATTERNS)

    def dump(self) -> str:
        w = " ".join(repr(float(v)) for v in self.weights)
        return f"{self.kind}\nweights {w}\nbias {float(self.bias)!r}\n"


@dataclass
class LDA(LinearModel):
    """Two-class Fisher discriminant with a ridge on the pooled covariance."""

    kind: ClassVar[str] = "LDA"

    @classmethod
    def fit(cls, X, y, ridge: float = 1e-6):
        y = _check_labels(y)
        X = np.asarray(X, dtype=float)
        Xp, Xn = X[y == HIGH], X[y == LOW]
        if len(Xp) == 0 or len(Xn) == 0:
            raise DegenerateTrainingError("LDA needs samples from both classes")
        mp, mn = Xp.mean(axis=0), Xn.mean(axis=0)
        scatter = (Xp - mp).T @ (Xp - mp) + (Xn - mn).T @ (Xn - mn)
        cov = scatter / max(len(X) - 2, 1) + ridge * np.eye(N_BITS)
        w = np.linalg.solve(cov, mp - mn)
        b = -0.5 * (mp + mn) @ w + np.log(len(Xp) / len(Xn))
        return cls(weights=w, bias=float(b))


# -- naive Bayes ------------------------------------------------------------

@dataclass
class NaiveBayes(TrainedClassifier):
    """Bernoulli likelihood per bit, Laplace add-one smoothing."""

    kind: ClassVar[str] = "NB"
    log_prior: np.ndarray = field(default_factory=lambda: np.zeros(2))  # [high, low]
    log_p1: np.ndarray = field(default_factory=lambda: np.zeros((2, N_BITS)))
    log_p0: np.ndarray = field(default_factory=lambda: np.zeros((2, N_BITS)))

    @classmethod
    def fit(cls, X, y, alpha: float = 1.0):
        y = _check_labels(y)
        X = np.asarray(X, dtype=float)
        counts = np.array([(y == HIGH).sum(), (y == LOW).sum()], dtype=float)
        if np.any(counts == 0):
            raise DegenerateTrainingError("naive Bayes needs samples from both classes")
        ones = np.vstack([X[y == HIGH].sum(axis=0), X[y == LOW].sum(axis=0)])
        p1 = (ones + alpha) / (counts[:, None] + 2 * alpha)
        return cls(log_prior=np.log(counts / counts.sum()), log_p1=np.log(p1),
                   log_p0=np.log1p(-p1))

    def scores(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self.log_prior + X @ self.log_p1.T + (1 - X) @ self.log_p0.T

    def predict(self, X):
        s = self.scores(X)
        return np.where(s[:, 0] >= s[:, 1], HIGH, LOW)

    def pattern_labels(self):
        return self.predict(_ALL_PATTERNS)

    def dump(self) -> str:
        rows = ["NB", "log_prior " + " ".join(repr(float(v)) for v in self.log_prior)]
        for name, cls_i in (("high", 0), ("low", 1)):
            rows.append(f"log_p1_{name} " + " ".join(repr(float(v)) for v in self.log_p1[cls_i]))
        return "\n".join(rows) + "\n"


# -- k nearest neighbours ---------------------------------------------------

@dataclass
class KNN(TrainedClassifier):
    """Hamming-distance kNN.  Equal distances are ordered by training position."""

    kind: ClassVar[str] = "kNN"
    k: int = 5
    patterns: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    labels: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @classmethod
    def fit(cls, X, y, k: int = 5):
        y = _check_labels(y)
        if len(y) == 0:
            raise DegenerateTrainingError("kNN needs at least one sample")
        if k < 1:
            raise ValueError("k must be >= 1")
        return cls(k=k, patterns=pattern_index(X), labels=y)

    def pattern_labels(self):
        k = min(self.k, len(self.labels))
        # only the first k training rows of each pattern can ever be selected
        order = np.argsort(self.patterns, kind="stable")
        pats = self.patterns[order]
        first = np.searchsorted(pats, np.arange(256), side="left")
        last = np.searchsorted(pats, np.arange(256), side="right")
        cand_pat, cand_pos, cand_lab = [], [], []
        for p in np.flatnonzero(last > first):
            take = order[first[p]:min(last[p], first[p] + k)]
            cand_pat.append(np.full(len(take), p))
            cand_pos.append(take)
            cand_lab.append(self.labels[take])
        cand_pat = np.concatenate(cand_pat)
        cand_pos = np.concatenate(cand_pos)
        cand_lab = np.concatenate(cand_lab)
        out = np.empty(256, dtype=np.int64)
        for q in range(256):
            dist = _POPCOUNT[cand_pat ^ q]
            nearest = np.lexsort((cand_pos, dist))[:k]
            out[q] = HIGH if cand_lab[nearest].sum() >= 0 else LOW
        return out

    def predict(self, X):
        return self.pattern_labels()[pattern_index(X)]

    def dump(self) -> str:
        # row order is kept because ties are broken by training position
        return (f"kNN k={self.k} n={len(self.labels)}\n"
                f"patterns {' '.join(map(str, self.patterns.tolist()))}\n"
                f"labels {' '.join(map(str, self.labels.tolist()))}\n")


# -- linear SVM -------------------------------------------------------------

@numba.njit(cache=True)
def _hinge_sgd(X, y, order, epochs, lr, l2):
    n, m = X.shape
    w = np.zeros(m)
    b = 0.0
    for e in range(epochs):
        for t in range(n):
            i = order[e, t]
            margin = b
            for j in range(m):
                margin += w[j] * X[i, j]
            margin *= y[i]
            for j in range(m):
                g = l2 * w[j]
                if margin < 1.0:
                    g -= y[i] * X[i, j]
                w[j] -= lr * g
            if margin < 1.0:
                b += lr * y[i]
    return w, b


@dataclass
class LinearSVM(LinearModel):
    """Linear soft-margin SVM trained by per-sample hinge-loss subgradient steps."""

    kind: ClassVar[str] = "SVM"

    @classmethod
    def fit(cls, X, y, epochs: int = 200, lr: float = 0.01, l2: float = 1e-3, seed=0):
        y = _check_labels(y)
        if (y == HIGH).sum() == 0 or (y == LOW).sum() == 0:
            raise DegenerateTrainingError("SVM needs samples from both classes")
        X = np.ascontiguousarray(X, dtype=float)
        rng = np.random.default_rng(seed)
        order = np.array([rng.permutation(len(y)) for _ in range(epochs)], dtype=np.int64).reshape(epochs, len(y))
        w, b = _hinge_sgd(X, y.astype(float), order, epochs, lr, l2)
        return cls(weights=w, bias=float(b))


_LEARNERS = {"DT": DecisionTree, "LDA": LDA, "NB": NaiveBayes, "kNN": KNN, "SVM": LinearSVM}


def train(kind: str, X, y, hyperparams: dict | None = None, seed=0) -> TrainedClassifier:
    """Fit one of ``KINDS`` on bit features ``X`` and labels ``y``."""
    try:
        learner = _LEARNERS[kind]
    except KeyError:
        raise ValueError(f"unknown classifier kind {kind!r}; choose from {KINDS}") from None
    hp = dict(hyperparams or {})
    if len(np.asarray(y)) == 0:
        raise DegenerateTrainingError("no training samples")
    if kind == "SVM":
        hp.setdefault("seed", seed)
    model = learner.fit(X, y, **hp)
    model.train_meta = {"n": int(len(np.asarray(y))), "seed": seed, **hp}
    return model


def predict(model: TrainedClassifier, feature) -> int:
    return model.predict_one(feature)


def load_classifier(text: str) -> TrainedClassifier:
    """Rebuild a classifier from the text written by its ``dump`` method."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty classifier file")
    head = lines[0].split()
    kind = head[0]
    if kind in ("LDA", "SVM"):
        vals = {ln.split()[0]: [float(v) for v in ln.split()[1:]] for ln in lines[1:]}
        cls = LDA if kind == "LDA" else LinearSVM
        return cls(weights=np.array(vals["weights"]), bias=vals["bias"][0])
    if kind == "NB":
        vals = {ln.split()[0]: np.array([float(v) for v in ln.split()[1:]]) for ln in lines[1:]}
        p1 = np.vstack([vals["log_p1_high"], vals["log_p1_low"]])
        return NaiveBayes(log_prior=vals["log_prior"], log_p1=p1, log_p0=np.log1p(-np.exp(p1)))
    if kind == "kNN":
        vals = {ln.split()[0]: [int(v) for v in ln.split()[1:]] for ln in lines[1:]}
        return KNN(k=int(head[1].split("=")[1]), patterns=np.array(vals["patterns"], dtype=np.int64),
                   labels=np.array(vals["labels"], dtype=np.int64))
    if kind == "DT":
        it = iter(lines[1:])

        def build():
            body = next(it).strip().split(": ", 1)[-1].split()
            kv = dict(p.split("=") for p in body[1:])
            node = TreeNode(pos=int(kv["pos"]), neg=int(kv["neg"]))
            if body[0] == "leaf":
                node.label = int(kv["label"])
            else:
                node.bit = int(kv["bit"])
                node.label = HIGH if node.pos >= node.neg else LOW
                node.zero = build()
                node.one = build()
            return node

        return DecisionTree(root=build())
    raise ValueError(f"unknown classifier kind {kind!r}")
