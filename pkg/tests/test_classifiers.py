import numpy as np
import pytest

from sctrace.classifiers import (HIGH, KINDS, LOW, DegenerateTrainingError, encode_many, encode_rss_8bit,
                                 load_classifier, pattern_index, pl_classify, predict, threshold_classify, train)
from sctrace.signal_model import PathLossModel, table2_mean, table2_variance


def separable(seed=0, n=500):
    rng = np.random.default_rng(seed)
    near = rng.normal(table2_mean(0.5), np.sqrt(table2_variance(0.5)), n)
    far = rng.normal(table2_mean(5.0), np.sqrt(table2_variance(5.0)), n)
    return encode_many(np.r_[near, far]), np.r_[np.full(n, HIGH), np.full(n, LOW)]


def test_encoding():
    assert encode_rss_8bit(-60).tolist() == [0, 0, 1, 1, 1, 1, 0, 0]
    assert encode_rss_8bit(-300).tolist() == [1] * 8
    assert encode_rss_8bit(5).tolist() == [0] * 8
    assert encode_rss_8bit(-60.5).tolist() == encode_rss_8bit(-60).tolist()  # half-to-even
    assert pattern_index(encode_many([-60, -91])).tolist() == [60, 91]


def test_threshold_and_pl():
    assert threshold_classify(2.0) == HIGH
    assert threshold_classify(2.0001) == LOW
    with pytest.raises(ValueError):
        threshold_classify(-1.0)
    m = PathLossModel(2.0, -80.0)
    assert pl_classify(m, -79.0) == (HIGH, False)
    assert pl_classify(m, -80.0) == (LOW, True)


@pytest.mark.parametrize("kind", KINDS)
def test_every_kind_learns_separated_clusters(kind):
    X, y = encode_many(np.r_[np.full(20, -50.0), np.full(20, -95.0)]), np.r_[np.ones(20), -np.ones(20)]
    model = train(kind, X, y)
    assert np.array_equal(model.predict(X), y)
    assert predict(model, encode_rss_8bit(-50.0)) == HIGH


@pytest.mark.parametrize("kind", KINDS)
def test_dump_round_trip(kind):
    X, y = separable(3, 200)
    model = train(kind, X, y)
    back = load_classifier(model.dump())
    assert np.array_equal(back.pattern_labels(), model.pattern_labels())


def test_knn_memorises_with_k1():
    rng = np.random.default_rng(5)
    pats = rng.choice(256, size=120, replace=False)
    X = ((pats[:, None] >> np.arange(7, -1, -1)) & 1)
    y = rng.choice([HIGH, LOW], size=120)
    model = train("kNN", X, y, {"k": 1})
    assert np.array_equal(model.predict(X), y)


def test_tree_fits_consistent_data():
    rng = np.random.default_rng(6)
    pats = rng.choice(256, size=150, replace=False)
    X = ((pats[:, None] >> np.arange(7, -1, -1)) & 1)
    y = rng.choice([HIGH, LOW], size=150)
    X, y = np.repeat(X, 3, axis=0), np.repeat(y, 3)
    assert np.array_equal(train("DT", X, y).predict(X), y)


def test_degenerate_training():
    X = encode_many([-60.0, -61.0])
    with pytest.raises(DegenerateTrainingError):
        train("LDA", X, [HIGH, HIGH])
    with pytest.raises(DegenerateTrainingError):
        train("DT", X[:0], [])
    with pytest.raises(ValueError):
        train("RF", X, [HIGH, LOW])


def test_ties_go_high():
    X = encode_many([-70.0, -70.0])
    assert train("DT", X, [HIGH, LOW]).predict(X).tolist() == [HIGH, HIGH]
    assert train("kNN", X, [HIGH, LOW], {"k": 2}).predict(X).tolist() == [HIGH, HIGH]


def test_svm_seeded():
    X, y = separable(1, 150)
    a = train("SVM", X, y, seed=4)
    b = train("SVM", X, y, seed=4)
    assert np.array_equal(a.weights, b.weights) and a.bias == b.bias
    assert a.train_meta["seed"] == 4
