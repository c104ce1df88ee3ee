import numpy as np
import pytest

from part import CsvParseError, InputError
from part.data import (
    BatchPlan,
    Dataset,
    gen_synthetic_task,
    load_csv,
    next_batches,
    oversample_to_equal,
    standardize_pair,
    write_csv,
)


def linear_probe_accuracy(train: Dataset, val: Dataset) -> float:
    """Independent oracle: least-squares one-hot regression, argmax readout."""
    X = np.hstack([train.features, np.ones((train.n, 1))])
    T = np.eye(train.c)[train.labels]
    W, *_ = np.linalg.lstsq(X, T, rcond=None)
    Xv = np.hstack([val.features, np.ones((val.n, 1))])
    pred = np.argmax(Xv @ W, axis=1)
    return float(np.mean(pred == val.labels))


# ---------------------------------------------------------------------------
# synthetic generation

def test_wide_margin_task_is_linearly_separable():
    rng = np.random.default_rng(0)
    train, val = gen_synthetic_task(rng, c=2, n_per_class=100, d=6, margin=8.0)
    assert linear_probe_accuracy(train, val) >= 0.99


def test_tiny_margin_task_is_at_chance():
    rng = np.random.default_rng(1)
    train, val = gen_synthetic_task(rng, c=4, n_per_class=100, d=6, margin=0.01)
    acc = linear_probe_accuracy(train, val)
    assert 0.10 <= acc <= 0.40  # 4-class chance is 0.25


def test_same_seed_gives_identical_datasets():
    a_train, a_val = gen_synthetic_task(np.random.default_rng(7), 3, 40, 5, 4.0)
    b_train, b_val = gen_synthetic_task(np.random.default_rng(7), 3, 40, 5, 4.0)
    np.testing.assert_array_equal(a_train.features, b_train.features)
    np.testing.assert_array_equal(a_train.labels, b_train.labels)
    np.testing.assert_array_equal(a_val.features, b_val.features)
    np.testing.assert_array_equal(a_val.labels, b_val.labels)


def test_split_is_stratified_80_20():
    train, val = gen_synthetic_task(np.random.default_rng(2), 3, 50, 4, 5.0)
    assert train.n == 3 * 40
    assert val.n == 3 * 10
    for k in range(3):
        assert (train.labels == k).sum() == 40
        assert (val.labels == k).sum() == 10


def test_train_split_is_standardized():
    train, _ = gen_synthetic_task(np.random.default_rng(3), 2, 80, 5, 6.0)
    np.testing.assert_allclose(train.features.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(train.features.std(axis=0), 1.0, atol=1e-12)
    assert train.mean is not None and train.std is not None


def test_degenerate_parameters_rejected():
    rng = np.random.default_rng(0)
    with pytest.raises(InputError):
        gen_synthetic_task(rng, c=1, n_per_class=20, d=4, margin=1.0)
    with pytest.raises(InputError):
        gen_synthetic_task(rng, c=2, n_per_class=20, d=1, margin=1.0)
    with pytest.raises(InputError):
        gen_synthetic_task(rng, c=2, n_per_class=20, d=4, margin=0.0)


# ---------------------------------------------------------------------------
# oversampling

def _blob(rng, n, c=2, d=3, name="ds"):
    labels = np.arange(n) % c
    return Dataset(features=rng.normal(size=(n, d)), labels=labels, c=c, name=name)


def test_oversample_to_max_size():
    rng = np.random.default_rng(4)
    out = oversample_to_equal([_blob(rng, 100), _blob(rng, 250), _blob(rng, 250)], rng)
    assert [ds.n for ds in out] == [250, 250, 250]


def test_oversample_keeps_equal_inputs_unchanged():
    rng = np.random.default_rng(5)
    inputs = [_blob(rng, 60), _blob(rng, 60)]
    out = oversample_to_equal(inputs, rng)
    assert out[0] is inputs[0]
    assert out[1] is inputs[1]


def test_oversample_originals_are_prefix_and_padding_from_original():
    rng = np.random.default_rng(6)
    small = _blob(rng, 10)
    big = _blob(rng, 50)
    out_small, out_big = oversample_to_equal([small, big], rng)
    np.testing.assert_array_equal(out_small.features[:10], small.features)
    np.testing.assert_array_equal(out_small.labels[:10], small.labels)
    assert out_big is big
    # every padding row equals some original row
    for row in out_small.features[10:]:
        assert any(np.array_equal(row, orig) for orig in small.features)


def test_oversample_preserves_class_proportions_on_average():
    # Monte-Carlo: sizes [10, 1000], mean class proportions over 100 seeds
    base_rng = np.random.default_rng(7)
    small = _blob(base_rng, 10)
    orig_p = np.bincount(small.labels, minlength=2) / small.n
    props = []
    for seed in range(100):
        rng = np.random.default_rng(1000 + seed)
        big = _blob(rng, 1000)
        out_small, _ = oversample_to_equal([small, big], rng)
        props.append(np.bincount(out_small.labels, minlength=2) / out_small.n)
    mean_p = np.mean(props, axis=0)
    assert np.all(np.abs(mean_p - orig_p) <= 0.05)


def test_oversample_rejects_empty_dataset():
    rng = np.random.default_rng(8)
    hollow = Dataset.__new__(Dataset)  # bypass invariants to hit the guard
    hollow.features = np.zeros((0, 3))
    hollow.labels = np.zeros(0, dtype=np.int64)
    hollow.c = 2
    hollow.name = "empty"
    with pytest.raises(InputError):
        oversample_to_equal([hollow], rng)


# ---------------------------------------------------------------------------
# CSV round-trip

def test_minimal_csv_loads(tmp_path):
    p = tmp_path / "mini.csv"
    p.write_text("label,f0,f1\n0,1.5,-2.0\n1,0.25,3.0\n", encoding="utf-8")
    ds = load_csv(p)
    assert ds.n == 2
    assert ds.c == 2
    np.testing.assert_array_equal(ds.features, [[1.5, -2.0], [0.25, 3.0]])


def test_label_gap_rejected(tmp_path):
    p = tmp_path / "gap.csv"
    p.write_text("label,f0\n0,1.0\n2,2.0\n", encoding="utf-8")
    with pytest.raises(CsvParseError, match="non-contiguous"):
        load_csv(p)


def test_roundtrip_write_then_load(tmp_path, rng):
    labels = np.arange(20) % 3
    ds = Dataset(features=rng.normal(size=(20, 4)), labels=labels, c=3, name="rt")
    p = tmp_path / "rt.csv"
    write_csv(p, ds)
    back = load_csv(p, name="rt")
    np.testing.assert_array_equal(back.features, ds.features)
    np.testing.assert_array_equal(back.labels, ds.labels)
    assert back.c == ds.c


def test_csv_errors_carry_line_numbers(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("label,f0\n0,1.0\n1,zebra\n", encoding="utf-8")
    with pytest.raises(CsvParseError) as exc:
        load_csv(p)
    assert exc.value.line == 3

    p2 = tmp_path / "empty.csv"
    p2.write_text("", encoding="utf-8")
    with pytest.raises(CsvParseError, match="missing header"):
        load_csv(p2)

    p3 = tmp_path / "header.csv"
    p3.write_text("labels,f0\n0,1.0\n", encoding="utf-8")
    with pytest.raises(CsvParseError):
        load_csv(p3)


def test_missing_file_is_input_error():
    with pytest.raises(InputError):
        load_csv("/nonexistent/never.csv")


# ---------------------------------------------------------------------------
# batching

def test_batch_sizes_and_cursor(rng):
    ds = _blob(rng, 10)
    plan = BatchPlan.for_dataset(ds, 4, rng)
    batches = next_batches(ds, plan, 3)
    assert [len(b) for b in batches] == [4, 4, 2]
    assert plan.cursor == 10


def test_exhausted_plan_yields_nothing(rng):
    ds = _blob(rng, 6)
    plan = BatchPlan.for_dataset(ds, 3, rng)
    next_batches(ds, plan, 2)
    assert next_batches(ds, plan, 5) == []


def test_epoch_covers_every_index_once(rng):
    ds = _blob(rng, 23)
    plan = BatchPlan.for_dataset(ds, 5, rng)
    seen = np.concatenate(next_batches(ds, plan, 100))
    assert sorted(seen.tolist()) == list(range(23))


def test_reshuffle_uses_rng(rng):
    ds = _blob(rng, 50)
    plan = BatchPlan.for_dataset(ds, 10, rng)
    first = plan.order.copy()
    plan.reshuffle(rng)
    assert plan.cursor == 0
    assert not np.array_equal(first, plan.order)
    assert sorted(plan.order.tolist()) == list(range(50))


def test_plan_must_belong_to_dataset(rng):
    ds = _blob(rng, 10)
    other = _blob(rng, 12)
    plan = BatchPlan.for_dataset(ds, 4, rng)
    with pytest.raises(InputError):
        next_batches(other, plan, 1)


def test_standardize_pair_uses_train_statistics(rng):
    train = _blob(rng, 40, d=4)
    val = _blob(rng, 20, d=4)
    st, sv = standardize_pair(train, val)
    np.testing.assert_allclose(st.features.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(st.features.std(axis=0), 1.0, atol=1e-12)
    np.testing.assert_allclose(sv.features, (val.features - st.mean) / st.std)
