import math

import numpy as np
import pytest

from sctrace.signal_model import PathLossModel, predict_rss
from sctrace.timing import (ADVERTISE_MODES, DeviceTimingConfig, DistanceProfile, EncounterScenario,
                            advertising_times, parse_scenario, reception_rate, run_encounter, scan_windows,
                            simulate_reception, write_trace)

MODEL = PathLossModel(2.0, -80.0)


def cfg(**kw):
    base = dict(T_a=100, T_s=1000, T_w=1000, jitter_max=0)
    base.update(kw)
    return DeviceTimingConfig(**base)


def test_config_validation():
    with pytest.raises(ValueError):
        cfg(T_w=1200)
    with pytest.raises(ValueError):
        cfg(T_w=0)
    with pytest.raises(ValueError):
        cfg(jitter_max=100)
    assert DeviceTimingConfig.preset("ADVERTISE_MODE_BALANCED").T_a == 250
    assert ADVERTISE_MODES["ADVERTISE_MODE_LOW_POWER"] == 1000


def test_ten_packets_per_second():
    assert advertising_times(cfg(), 1000).tolist() == list(range(0, 1000, 100))
    assert advertising_times(cfg(), 50).tolist() == [0]


def test_jitter_bounds_and_determinism():
    c = cfg(jitter_max=10)
    a = advertising_times(c, 60_000, 4)
    assert np.array_equal(a, advertising_times(c, 60_000, 4))
    off = a - 100 * np.arange(len(a))
    assert off.min() >= 0 and off.max() <= 10
    assert np.all(np.diff(a) > 0)


def test_scan_windows():
    assert scan_windows(cfg(), 5000) == [(k * 1000, (k + 1) * 1000) for k in range(5)]
    assert scan_windows(cfg(T_w=100), 2000) == [(0, 100), (1000, 1100)]
    # a window that started before t = 0 shows up clipped
    assert scan_windows(cfg(T_w=500, phase_offset=700), 2000) == [(0, 200), (700, 1200), (1700, 2000)]


def test_continuous_scan_hears_everything():
    scen = EncounterScenario(10_000, DistanceProfile.constant(1.0), tx_config=cfg(), rx_config=cfg())
    tr = simulate_reception(None, None, scen, MODEL)
    assert tr.received_count == tr.broadcast_count == 100


def test_disjoint_schedule_hears_nothing():
    tx = cfg(T_a=1000, phase_offset=500)
    rx = cfg(T_w=100)
    scen = EncounterScenario(20_000, DistanceProfile.constant(1.0), tx_config=tx, rx_config=rx)
    assert simulate_reception(None, None, scen, MODEL).received_count == 0


def test_out_of_range_is_not_heard():
    prof = DistanceProfile(((0, 1.0), (500, math.inf), (800, 2.0)))
    scen = EncounterScenario(1000, prof, tx_config=cfg(), rx_config=cfg())
    tr = simulate_reception(None, None, scen, MODEL)
    assert tr.times.tolist() == [0, 100, 200, 300, 400, 800, 900]
    assert tr.distances.tolist() == [1.0] * 5 + [2.0] * 2


def test_monotone_coverage():
    counts = []
    for T_w in (100, 300, 600, 1000):
        scen = EncounterScenario(30_000, DistanceProfile.constant(1.0), tx_config=cfg(jitter_max=7),
                                 rx_config=cfg(T_w=T_w, phase_offset=250), seed=3)
        counts.append(simulate_reception(None, None, scen, MODEL).received_count)
    assert counts == sorted(counts)


def test_every_window_catches_a_packet_when_T_a_below_T_w():
    rx = cfg(T_w=300, phase_offset=40)
    scen = EncounterScenario(20_000, DistanceProfile.constant(1.0), tx_config=cfg(phase_offset=13), rx_config=rx)
    tr = simulate_reception(None, None, scen, MODEL)
    for lo, hi in scan_windows(rx, 20_000):
        if hi - lo == 300:
            assert np.any((tr.times >= lo) & (tr.times < hi))


def test_reception_rate_edges():
    assert reception_rate(cfg(), cfg(), 10_000, 20, seed=1) == 1.0
    r = reception_rate(cfg(T_a=50_000, jitter_max=0), cfg(T_w=500), 10_000, 50, seed=2)
    assert 0.0 <= r <= 1.0


def test_run_encounter_noiseless():
    scen = EncounterScenario(60_000, DistanceProfile.constant(1.0), tx_config=cfg(), rx_config=cfg(), case="BB")
    samples = run_encounter(scen, MODEL)
    assert len(samples) == 600
    assert {s.true_distance for s in samples} == {1.0}
    assert {s.rss for s in samples} == {predict_rss(MODEL, 1.0)}
    assert samples[1].elapsed == 100.0 and samples[0].case == "BB"
    with pytest.raises(ValueError):
        EncounterScenario(0, DistanceProfile.constant(1.0))


def test_noise_follows_lookup():
    scen = EncounterScenario(600_000, DistanceProfile.constant(2.0), tx_config=cfg(), rx_config=cfg(), seed=5)
    tr = simulate_reception(None, None, scen, MODEL, lambda d: 9.0)
    assert tr.rss.mean() == pytest.approx(predict_rss(MODEL, 2.0), abs=0.1)
    assert tr.rss.var() == pytest.approx(9.0, rel=0.05)


def test_scenario_file(tmp_path):
    text = "duration=60000\nT_a=100\njitter=0\nseed=4\ncase=HP\n0,1.0\n30000,3.0\n"
    scen = parse_scenario(text)
    assert scen.case == "HP" and scen.distance_profile(30_000) == 3.0
    samples = run_encounter(scen, MODEL)
    write_trace(samples, tmp_path / "t.csv")
    rows = (tmp_path / "t.csv").read_text().splitlines()
    assert rows[0] == "time_ms,rss_dbm,true_distance_m" and len(rows) == 601
    with pytest.raises(ValueError):
        parse_scenario("duration=100\nT_w=2000\n0,1\n")
    with pytest.raises(ValueError):
        parse_scenario("T_a=100\n0,1\n")
