import numpy as np
import pytest

from sctrace.classifiers import ABSENT, HIGH, LOW, encode_many, train
from sctrace.signal_model import estimate_distance, reference_model
from sctrace.timing import DeviceTimingConfig
from sctrace.tracing import TraceDevice, default_devices, run_trace_demo

MODEL = reference_model()
DURATION = 600_000


def replay(result, window=100, threshold=2.0, T_a=100):
    """Brute force: every infected broadcast against every receiver window, then the label rule."""
    out = {}
    for (tx, rx), sch in result.schedules.items():
        if tx != result.infected:
            continue
        heard = []
        for t in sch.adv_times.tolist():
            present = sch.copresence is not None and sch.copresence[0] <= t < sch.copresence[1]
            if present and any(lo <= t < hi for lo, hi in sch.windows):
                heard.append(t)
        assert heard == sch.times.tolist()
        if not heard:
            out[rx] = (ABSENT, 0)
            continue
        x = sch.rss
        smoothed = [np.mean(x[max(0, i - window + 1):i + 1]) for i in range(len(x))]
        d, sat = estimate_distance(MODEL, float(np.mean(smoothed)))
        out[rx] = (HIGH if not sat and d <= threshold else LOW, len(heard) * T_a)
    return out


def test_forced_contact():
    devs = [TraceDevice("a", 0.0), TraceDevice("b", 1.0)]
    res = run_trace_demo(devs, "a", 120_000, seed=3)
    (o,) = res.outcomes
    assert o.label == HIGH and o.matches > 0 and o.copresence_ms == o.matches * 100


def test_disjoint_periods_are_absent():
    devs = [TraceDevice("a", 0.0, (0, 60_000)), TraceDevice("b", 1.0, (60_000, 120_000))]
    (o,) = run_trace_demo(devs, "a", 120_000, seed=3).outcomes
    assert (o.label, o.matches, o.copresence_ms) == (ABSENT, 0, 0)


def test_near_far_against_replay():
    devs = [TraceDevice("inf", 0.0), TraceDevice("n1", 1.0), TraceDevice("n2", 1.5),
            TraceDevice("f1", 5.0), TraceDevice("f2", 5.0)]
    res = run_trace_demo(devs, "inf", DURATION, seed=7)
    labels = {o.dev_id: (o.label, o.copresence_ms) for o in res.outcomes}
    assert {k: v[0] for k, v in labels.items()} == {"n1": HIGH, "n2": HIGH, "f1": LOW, "f2": LOW}
    assert labels == replay(res)


@pytest.mark.parametrize("seed", range(4))
def test_default_layout_against_replay(seed):
    res = run_trace_demo(default_devices(6, DURATION), "d0", DURATION, seed=seed)
    assert {o.dev_id: (o.label, o.copresence_ms) for o in res.outcomes} == replay(res)
    assert res.outcomes[-1].label == ABSENT


def test_only_infected_payloads_match():
    res = run_trace_demo(default_devices(4, 120_000), "d1", 120_000, seed=1)
    up = res.logs["d1"].broadcast_payloads()
    for dev, log in res.logs.items():
        if dev == "d1":
            continue
        from sctrace.signature import match_signatures
        assert all(rec.source == "d1" for rec, _ in match_signatures(log.observed(), up))


def test_duty_cycled_scanner():
    cfg = DeviceTimingConfig(T_a=100, T_s=1000, T_w=300)
    devs = [TraceDevice("a", 0.0), TraceDevice("b", 1.0)]
    res = run_trace_demo(devs, "a", 120_000, seed=2, timing=cfg)
    (o,) = res.outcomes
    assert 0 < o.matches < 1200 * 0.4
    assert {o.dev_id: (o.label, o.copresence_ms) for o in res.outcomes} == replay(res)


def test_classifier_rule():
    X = encode_many(np.r_[np.full(20, -70.0), np.full(20, -95.0)])
    clf = train("DT", X, np.r_[np.ones(20), -np.ones(20)])
    devs = [TraceDevice("a", 0.0), TraceDevice("b", 1.0)]
    (o,) = run_trace_demo(devs, "a", 60_000, seed=1, classifier=clf).outcomes
    assert o.label == int(clf.predict(encode_many([o.mean_rss]))[0])


def test_bad_inputs():
    with pytest.raises(ValueError):
        run_trace_demo([TraceDevice("a", 0.0)], "z", 1000)
    with pytest.raises(ValueError):
        run_trace_demo([TraceDevice("a", 0.0), TraceDevice("a", 1.0)], "a", 1000)
    with pytest.raises(ValueError):
        TraceDevice("a", 1.0, (5, 5))


def test_format_mentions_no_duration_cutoff():
    res = run_trace_demo(default_devices(3, 60_000), "d0", 60_000, seed=0)
    text = res.format()
    assert text.splitlines()[0].startswith("device,label")
    assert "no duration cutoff" in text
