import numpy as np
import pytest

from sctrace.signature import (EXPIRY_MS, PAYLOAD_BYTES, Dictionary, DimensionError, EmptyEnvironmentError,
                               EncodingError, ObservedVector, SignatureLog, SignaturePayload, SignatureRecord,
                               SignatureVector, expire_signatures, generate_dictionary, generate_signature,
                               log_record, match_signatures, quantize_signature, read_log, read_payloads,
                               write_payloads)

DAY = 24 * 3600 * 1000


def payload(i: int) -> SignaturePayload:
    return SignaturePayload(i.to_bytes(4, "big") * 7 + b"\x00\x00\x00")


def observed(p, tau, rss=-70.0):
    return SignatureRecord(p, tau, "observed", rss)


def test_dictionary_determinism_and_seed_sensitivity():
    a, b = generate_dictionary(31, 5), generate_dictionary(31, 5)
    assert np.array_equal(a.matrix, b.matrix)
    assert not np.array_equal(generate_dictionary(5, 1).matrix, generate_dictionary(5, 2).matrix)
    assert np.all(np.abs(a.matrix) <= 1.0)
    with pytest.raises(EmptyEnvironmentError):
        generate_dictionary(0, 1)


def test_dictionary_is_read_only():
    d = generate_dictionary(4, 0)
    with pytest.raises(ValueError):
        d.matrix[0, 0] = 3.0


def test_identity_passthrough():
    obs = ObservedVector([-60.0 - k for k in range(31)])
    sig = generate_signature(Dictionary(np.eye(31)), obs)
    assert np.array_equal(sig.components, np.array(obs.values))


def test_zero_observation():
    sig = generate_signature(generate_dictionary(6, 3), ObservedVector([0.0] * 6))
    assert np.all(sig.components == 0.0)


def test_loop_oracle():
    d = generate_dictionary(8, 7)
    vals = np.random.default_rng(1).uniform(-95, -55, 8)
    sig = generate_signature(d, ObservedVector(vals))
    expect = [sum(d.matrix[i, j] * vals[j] for j in range(8)) for i in range(31)]
    assert np.allclose(sig.components, expect, rtol=0, atol=1e-9)


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        generate_signature(generate_dictionary(3, 0), ObservedVector([1.0, 2.0]))
    with pytest.raises(DimensionError):
        ObservedVector([1.0], device_ids=("a", "b"))


def test_distinct_dictionaries_distinct_signatures():
    obs = ObservedVector(np.random.default_rng(4).uniform(-95, -55, 6))
    seen = set()
    for s in range(1000):
        seen.add(generate_signature(generate_dictionary(6, [s, 1]), obs).components.tobytes())
    assert len(seen) == 1000


def test_quantize_clamps_and_midpoint():
    lo, hi = -10.0, 10.0
    assert quantize_signature(SignatureVector(np.full(31, lo)), (lo, hi)).data == bytes(31)
    assert quantize_signature(SignatureVector(np.full(31, hi)), (lo, hi)).data == b"\xff" * 31
    assert quantize_signature(SignatureVector(np.full(31, 1e9)), (lo, hi)).data == b"\xff" * 31
    assert quantize_signature(SignatureVector(np.zeros(31)), (lo, hi)).data == bytes([128]) * 31
    with pytest.raises(ValueError):
        quantize_signature(SignatureVector(np.zeros(31)), (1.0, 1.0))


def test_payload_length_and_non_finite():
    with pytest.raises(EncodingError):
        SignaturePayload(b"\x00" * 30)
    with pytest.raises(EncodingError):
        SignatureVector(np.full(31, np.nan))
    assert len(quantize_signature(SignatureVector(np.ones(31))).data) == PAYLOAD_BYTES


def test_record_kind_rules():
    with pytest.raises(ValueError):
        SignatureRecord(payload(1), 0, "observed")
    with pytest.raises(ValueError):
        SignatureRecord(payload(1), 0, "broadcast", -70.0)


def test_log_ordering_and_bulk_append():
    log = SignatureLog()
    log_record(log, observed(payload(1), 50))
    log_record(log, observed(payload(2), 10))
    assert [r.tau for r in log] == [10, 50]
    for k in range(10_000):
        log.append(observed(payload(k), k % 97))
    assert len(log) == 10_002
    taus = [r.tau for r in log.snapshot()]
    assert taus == sorted(taus)


def test_expiry():
    now = 100 * DAY
    log = SignatureLog([observed(payload(1), now - 15 * DAY), observed(payload(2), now)])
    expire_signatures(log, now)
    assert [r.payload for r in log] == [payload(2)]
    assert len(expire_signatures(SignatureLog(), now)) == 0
    with pytest.raises(ValueError):
        expire_signatures(log, now, 0)


def test_expiry_boundary():
    now = 10 ** 12
    recs = [observed(payload(i), now - EXPIRY_MS + off) for i, off in enumerate((-1, 0, 1))]
    kept = SignatureLog(recs).expire(now)
    assert [r.tau - (now - EXPIRY_MS) for r in kept] == [0, 1]


def test_match_basic():
    p = payload(3)
    rec = observed(p, 5)
    assert match_signatures([rec], set()) == []
    assert match_signatures([rec], {p}) == [(rec, p)]
    with pytest.raises(ValueError):
        match_signatures([SignatureRecord(p, 0, "broadcast")], {p})


def test_expire_then_match_commutes():
    rng = np.random.default_rng(2)
    now = 30 * DAY
    recs = [observed(payload(int(rng.integers(0, 60))), int(rng.integers(0, now))) for _ in range(500)]
    up = {payload(i) for i in range(0, 60, 3)}
    a = match_signatures(SignatureLog(recs).expire(now).observed(), up)
    b = [h for h in match_signatures(recs, up) if now - h[0].tau <= EXPIRY_MS]
    assert a == b


def test_log_and_payload_files(tmp_path):
    log = SignatureLog([observed(payload(1), 7, -71.5), SignatureRecord(payload(2), 3, "broadcast")])
    log.save(tmp_path / "log.csv")
    back = read_log(tmp_path / "log.csv")
    assert back.snapshot() == log.snapshot()
    write_payloads({payload(5), payload(1)}, tmp_path / "up.txt")
    lines = (tmp_path / "up.txt").read_text().splitlines()
    assert all(len(line) == 62 for line in lines)
    assert read_payloads(tmp_path / "up.txt") == {payload(5), payload(1)}
