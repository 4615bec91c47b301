import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import pearson as pearson_oracle

from ztguard.flowdata import (
    FEATURE_NAMES,
    AttackKind,
    Dataset,
    FlowRecord,
    Label,
    NormParams,
    Protocol,
    SchemaError,
    SynthConfig,
    apply_normalize,
    clean,
    fit_normalize,
    generate_synthetic,
    ingest_csv,
    pearson,
    select_features,
    split,
    to_dataset,
    write_csv,
)

HEADER = "device_id,timestamp,src_addr,dst_addr,protocol,packet_size,packet_rate,session_duration,label\n"


def rec(**kw):
    base = dict(device_id="d1", timestamp=1000, protocol=Protocol.TCP, packet_size=100.0,
                packet_rate=10.0, session_duration=1.0, label=Label.BENIGN)
    base.update(kw)
    return FlowRecord(**base)


# ---- ingest


def test_ingest_single_row():
    records, rejects = ingest_csv(HEADER + "d1,1000,10.0.0.1,10.0.0.2,TCP,100,10,1.5,0\n")
    assert len(records) == 1 and rejects == []
    r = records[0]
    assert (r.device_id, r.timestamp, r.protocol, r.packet_rate, r.label) == ("d1", 1000, Protocol.TCP, 10.0, Label.BENIGN)


def test_ingest_empty_rate_is_rejected():
    records, rejects = ingest_csv(HEADER + "d1,1000,a,b,TCP,100,,1.5,0\n")
    assert records == []
    assert len(rejects) == 1 and rejects[0].row == 1


def test_ingest_corrupt_middle_row():
    text = HEADER + (
        "d1,1000,a,b,TCP,100,10,1.5,0\n"
        "d2,1001,a,b,UDP,abc,10,1.5,1\n"
        "d3,1002,a,b,HTTP,300,5,9,1\n"
    )
    records, rejects = ingest_csv(text)
    assert [r.device_id for r in records] == ["d1", "d3"]
    assert [r.row for r in rejects] == [2]
    assert "abc" in rejects[0].raw


def test_ingest_missing_header_is_fatal():
    with pytest.raises(SchemaError):
        ingest_csv("")
    with pytest.raises(SchemaError):
        ingest_csv("device_id,timestamp\nd1,1\n")


def test_ingest_accepts_bytes_and_unlabeled_rows():
    data = (HEADER + "d1,1000,a,b,icmp,64,1,0.1,\n").encode()
    records, rejects = ingest_csv(io.BytesIO(data))
    assert records[0].label is None and records[0].protocol is Protocol.ICMP
    assert rejects == []


def test_ingest_schema_mapping():
    header = "dev,ts,src,dst,proto,size,rate,dur,y\n"
    schema = dict(device_id="dev", timestamp="ts", src_addr="src", dst_addr="dst", protocol="proto",
                  packet_size="size", packet_rate="rate", session_duration="dur", label="y")
    records, _ = ingest_csv(header + "d9,5,a,b,UDP,1,2,3,1\n", schema)
    assert records[0].device_id == "d9" and records[0].label is Label.ATTACK


def test_ingest_rejects_bad_label_and_protocol():
    _, rejects = ingest_csv(HEADER + "d1,1,a,b,TCP,1,1,1,7\nd1,1,a,b,SCTP,1,1,1,0\n")
    assert [r.row for r in rejects] == [1, 2]


def test_csv_round_trip():
    records = generate_synthetic(SynthConfig(n_benign=5, attacks={AttackKind.SYN_FLOOD: 5}, seed=3))
    buf = io.StringIO()
    write_csv(records, buf)
    again, rejects = ingest_csv(buf.getvalue())
    assert rejects == [] and again == records


# ---- clean


def test_clean_identity():
    records = [rec(device_id=f"d{i}") for i in range(5)]
    assert clean(records) == records


def test_clean_drops_negative_rate():
    assert clean([rec(packet_rate=-1.0)]) == []


def test_clean_hand_enumerated():
    bad = {2: dict(session_duration=float("nan")), 5: dict(packet_size=-3.0), 8: dict(label=None)}
    records = [rec(device_id=f"d{i}", **bad.get(i, {})) for i in range(10)]
    survivors = [f"d{i}" for i in (0, 1, 3, 4, 6, 7, 9)]
    assert [r.device_id for r in clean(records)] == survivors


record_strategy = st.builds(
    rec,
    packet_size=st.floats(allow_nan=True, allow_infinity=True),
    packet_rate=st.floats(allow_nan=True, allow_infinity=True),
    session_duration=st.floats(allow_nan=True, allow_infinity=True),
    label=st.sampled_from([None, Label.BENIGN, Label.ATTACK]),
)


@given(st.lists(record_strategy, max_size=20))
def test_clean_is_idempotent(records):
    once = clean(records)
    assert clean(once) == once
    assert all(r.is_valid() for r in once)


# ---- feature selection


def test_pearson_zero_variance_is_zero():
    assert pearson(np.ones(5), np.array([0, 1, 0, 1, 1])) == 0.0


def test_select_keeps_label_copy_and_drops_constant():
    y = np.array([0, 1, 0, 1, 1, 0])
    ds = Dataset(("copy", "const"), np.c_[y, np.full(6, 7.0)], y)
    kept_ds, kept = select_features(ds, threshold=0.01)
    assert kept == ["copy"]
    assert kept_ds.n_features == 1


def test_select_never_empty():
    y = np.array([0, 1, 0, 1])
    ds = Dataset(("a", "b"), np.array([[1, 1], [1, 2], [2, 1], [2, 2.5]]), y)
    _, kept = select_features(ds, threshold=1.0)
    assert kept == ["b"]


def test_select_matches_direct_pearson():
    rng = np.random.default_rng(11)
    y = np.array([0, 1] * 10)
    rows = np.c_[
        y + rng.normal(0, 0.5, 20),
        rng.normal(0, 1, 20),
        -2 * y + rng.normal(0, 1.5, 20),
        rng.uniform(0, 1, 20),
    ]
    ds = Dataset(("f0", "f1", "f2", "f3"), rows, y)
    expected = [f"f{j}" for j in range(4) if abs(pearson_oracle(list(rows[:, j]), list(y))) >= 0.3]
    _, kept = select_features(ds, threshold=0.3)
    assert kept == expected
    assert "f0" in kept and "f2" in kept


# ---- min-max scaling


def test_normalize_examples():
    ds = Dataset(("a", "b", "c"), np.array([[0, 7, 2], [5, 7, 3], [10, 7, 11]], dtype=float), [0, 1, 0])
    out, params = fit_normalize(ds)
    np.testing.assert_allclose(out.rows[:, 0], [0, 0.5, 1])
    np.testing.assert_array_equal(out.rows[:, 1], [0, 0, 0])
    np.testing.assert_allclose(out.rows[:, 2], [0, 1 / 9, 1], rtol=0, atol=1e-15)
    assert params.min_x == (0.0, 7.0, 2.0) and params.max_x == (10.0, 7.0, 11.0)


def test_apply_normalize_replays_training_range():
    p = NormParams((2.0, 0.0), (11.0, 1.0))
    np.testing.assert_array_equal(apply_normalize(p, [2.0, 0.0]), [0.0, 0.0])
    assert apply_normalize(p, [4.0, 0.5])[0] == pytest.approx(2 / 9, abs=1e-15)
    np.testing.assert_array_equal(apply_normalize(p, [50.0, -3.0]), [1.0, 0.0])
    with pytest.raises(ValueError):
        apply_normalize(p, [1.0])


def test_norm_params_reject_inverted_range():
    with pytest.raises(ValueError):
        NormParams((2.0,), (1.0,))


matrices = st.integers(2, 12).flatmap(
    lambda n: st.lists(
        st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=3, max_size=3), min_size=n, max_size=n
    )
)


@settings(max_examples=200)
@given(matrices)
def test_normalize_properties(rows):
    X = np.array(rows)
    ds = Dataset(("a", "b", "c"), X, np.arange(len(X)) % 2)
    out, p = fit_normalize(ds)
    assert np.all((out.rows >= 0) & (out.rows <= 1))
    for j in range(3):
        if X[:, j].max() > X[:, j].min():
            assert out.rows[np.argmin(X[:, j]), j] == 0.0
            assert out.rows[np.argmax(X[:, j]), j] == 1.0
            back = p.inverse(out.rows)[:, j]
            scale = np.maximum(np.abs(X[:, j]), X[:, j].max() - X[:, j].min())
            assert np.all(np.abs(back - X[:, j]) <= 1e-9 * scale)
        else:
            assert np.all(out.rows[:, j] == 0.0)


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=2, max_size=2))
def test_apply_normalize_always_in_unit_interval(row):
    p = NormParams((-1.0, 0.0), (1.0, 0.0))
    out = apply_normalize(p, row)
    assert np.all((out >= 0) & (out <= 1))


# ---- split


def _labels_ds(labels):
    labels = np.asarray(labels)
    return Dataset(("idx",), np.arange(len(labels), dtype=float)[:, None], labels)


def test_split_balanced():
    ds = _labels_ds([0] * 50 + [1] * 50)
    train, test = split(ds, 0.2, seed=1)
    assert (test.labels == 0).sum() == 10 and (test.labels == 1).sum() == 10
    assert len(train) == 80


def test_split_imbalanced_rounding():
    ds = _labels_ds([0] * 90 + [1] * 10)
    _, test = split(ds, 0.2, seed=5)
    assert (test.labels == 0).sum() == 18 and (test.labels == 1).sum() == 2


def test_split_deterministic():
    ds = _labels_ds([0] * 30 + [1] * 12)
    a = split(ds, 0.25, seed=9)
    b = split(ds, 0.25, seed=9)
    np.testing.assert_array_equal(a[1].rows, b[1].rows)
    c = split(ds, 0.25, seed=10)
    assert not np.array_equal(a[1].rows, c[1].rows)


def test_split_needs_two_rows_per_class():
    with pytest.raises(ValueError):
        split(_labels_ds([0] * 10 + [1]), 0.2, 0)
    with pytest.raises(ValueError):
        split(_labels_ds([0, 1, 0, 1]), 1.0, 0)


@given(st.integers(2, 40), st.integers(2, 40), st.floats(0.05, 0.95), st.integers(0, 2**32))
def test_split_is_partition(n0, n1, frac, seed):
    ds = _labels_ds([0] * n0 + [1] * n1)
    train, test = split(ds, frac, seed)
    ids_train = set(train.rows[:, 0])
    ids_test = set(test.rows[:, 0])
    assert len(train) + len(test) == len(ds)
    assert ids_train.isdisjoint(ids_test)
    assert ids_train | ids_test == set(range(n0 + n1))


# ---- synthesis


def test_generate_benign_only():
    records = generate_synthetic(SynthConfig(n_benign=5, attacks={}, seed=1))
    assert len(records) == 5 and all(r.label is Label.BENIGN for r in records)


def test_generate_deterministic_bytes():
    cfg = SynthConfig.standard(seed=7, n_flows=300)
    a, b = io.StringIO(), io.StringIO()
    write_csv(generate_synthetic(cfg), a)
    write_csv(generate_synthetic(SynthConfig.standard(seed=7, n_flows=300)), b)
    assert a.getvalue() == b.getvalue()


def test_generate_attack_signatures_skew_features():
    records = generate_synthetic(SynthConfig(n_benign=1000, attacks={AttackKind.SYN_FLOOD: 1000}, seed=2))
    attack = [r.packet_rate for r in records if r.label is Label.ATTACK]
    benign = [r.packet_rate for r in records if r.label is Label.BENIGN]
    assert len(attack) == len(benign) == 1000
    assert sum(attack) / len(attack) > sum(benign) / len(benign)
    syn = [r for r in records if r.label is Label.ATTACK]
    assert all(r.protocol is Protocol.TCP for r in syn)
    assert sum(r.session_duration for r in syn) / 1000 < sum(r.session_duration for r in records if r.label is Label.BENIGN) / 1000


def test_generate_flood_protocols_and_order():
    cfg = SynthConfig(n_benign=50, attacks={AttackKind.UDP_FLOOD: 40, AttackKind.HTTP_FLOOD: 40}, seed=4)
    records = generate_synthetic(cfg)
    stamps = [r.timestamp for r in records]
    assert stamps == sorted(stamps)
    attacks = [r for r in records if r.label is Label.ATTACK]
    assert {r.protocol for r in attacks} == {Protocol.UDP, Protocol.HTTP}
    assert all(r.device_id.startswith("bot-") for r in attacks)
    assert all(r.device_id.startswith("iot-") for r in records if r.label is Label.BENIGN)


def test_standard_config_counts():
    cfg = SynthConfig.standard(seed=0)
    assert cfg.total == 10_000 and sum(cfg.attacks.values()) == 3000


def test_to_dataset_shape_and_features():
    records = [rec(packet_size=100.0, packet_rate=10.0, session_duration=0.0, protocol=Protocol.HTTP, label=Label.ATTACK)]
    ds = to_dataset(records)
    assert ds.feature_names == FEATURE_NAMES
    row = dict(zip(FEATURE_NAMES, ds.rows[0]))
    assert row["bytes_per_second"] == 1000.0
    assert row["log_packet_rate"] == pytest.approx(math.log(11.0))
    assert row["proto_http"] == 1.0 and row["proto_tcp"] == 0.0
    assert ds.labels.tolist() == [1]


def test_dataset_rejects_non_finite():
    with pytest.raises(ValueError):
        Dataset(("a",), np.array([[np.nan]]), [0])
