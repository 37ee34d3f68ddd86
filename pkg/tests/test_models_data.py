import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from samlab.data import (
    DatasetSpec,
    batch_iterator,
    export_csv,
    generate_dataset,
    import_csv,
    sequential_batches,
)
from samlab.errors import ConfigError
from samlab.models import MLP, Batch, ModelSpec, ParamLayout, accuracy, init_params


def test_layout_round_trip():
    layout = ParamLayout((3, 4, 2))
    vec = np.arange(layout.size, dtype=float)
    assert layout.size == 3 * 4 + 4 + 4 * 2 + 2
    np.testing.assert_array_equal(layout.flatten(layout.unflatten(vec)), vec)


def test_init_is_seeded_and_biases_zero():
    spec = ModelSpec((2, 8, 3), init_seed=5)
    a, b = init_params(spec), init_params(spec)
    np.testing.assert_array_equal(a, b)
    for _, bias in spec.layout.unflatten(a):
        assert not bias.any()
    assert not np.array_equal(a, init_params(ModelSpec((2, 8, 3), init_seed=6)))


@pytest.mark.parametrize("kwargs", [
    {"widths": (2,)},
    {"widths": (2, 0, 2)},
    {"widths": (2, 3, 2), "activation": "gelu"},
    {"widths": (2, 3, 2), "loss": "hinge"},
    {"widths": (2, 3, 3, 2), "activation": ("tanh",)},
])
def test_model_spec_rejects_invalid(kwargs):
    with pytest.raises(ConfigError):
        ModelSpec(**kwargs)


def test_mixed_activations_accepted():
    spec = ModelSpec((2, 3, 3, 2), activation=("relu", "softplus"))
    assert spec.activations == ("relu", "softplus")
    assert ModelSpec.from_dict(spec.to_dict()) == spec


def test_input_dimension_mismatch_is_config_error():
    model = MLP(ModelSpec((3, 4, 2)))
    with pytest.raises(ConfigError):
        model.loss(init_params(model.spec), Batch(np.zeros((2, 2)), np.eye(2)))


def test_predict_agrees_with_graph_loss():
    spec = ModelSpec((2, 6, 1), "tanh", "mse", init_seed=2)
    model, w = MLP(spec), init_params(spec)
    x = np.array([[0.1, 0.2], [-0.5, 1.0], [0.3, -0.4]])
    y = np.array([0.5, -0.1, 0.0])
    pred = model.predict(w, x)[:, 0]
    assert model.loss(w, Batch(x, y)) == pytest.approx(np.mean((pred - y) ** 2), rel=1e-14)


def test_accuracy_is_nan_for_regression():
    spec = ModelSpec((2, 1), loss="mse")
    assert math.isnan(accuracy(MLP(spec), init_params(spec), np.zeros((2, 2)), np.zeros((2, 1))))


@pytest.mark.parametrize("kind", ["gaussian-blobs", "two-spirals", "noisy-rings"])
def test_generators_are_balanced_and_deterministic(kind):
    spec = DatasetSpec(kind, n_train=90, n_test=30, seed=3)
    a, b = generate_dataset(spec), generate_dataset(spec)
    np.testing.assert_array_equal(a.x_train, b.x_train)
    np.testing.assert_array_equal(a.y_test, b.y_test)
    assert np.bincount(a.y_train).tolist() == [45, 45]
    assert not np.array_equal(a.x_train[:30], a.x_test)


@given(rate=st.floats(0.0, 0.95), n=st.integers(2, 200))
def test_label_noise_flips_exact_count_on_train_only(rate, n):
    clean = generate_dataset(DatasetSpec("gaussian-blobs", n_train=n, n_test=20, n_classes=3, seed=1))
    noisy = generate_dataset(DatasetSpec("gaussian-blobs", n_train=n, n_test=20, n_classes=3, seed=1,
                                         label_noise=rate))
    changed = np.flatnonzero(clean.y_train != noisy.y_train)
    assert len(changed) == math.floor(rate * n)
    np.testing.assert_array_equal(changed, noisy.flipped)
    np.testing.assert_array_equal(clean.y_test, noisy.y_test)


@pytest.mark.parametrize("kwargs", [
    {"label_noise": 1.0},
    {"label_noise": -0.1},
    {"kind": "two-spirals", "n_classes": 3},
    {"kind": "random-regression", "label_noise": 0.1},
    {"kind": "moons"},
])
def test_dataset_spec_rejects_invalid(kwargs):
    with pytest.raises(ConfigError):
        DatasetSpec(**kwargs)


def test_regression_teacher_shared_between_splits():
    ds = generate_dataset(DatasetSpec("random-regression", n_train=400, n_test=400, input_dim=3, seed=2))
    coef_tr = np.linalg.lstsq(np.c_[ds.x_train, np.ones(400)], ds.y_train, rcond=None)[0]
    coef_te = np.linalg.lstsq(np.c_[ds.x_test, np.ones(400)], ds.y_test, rcond=None)[0]
    np.testing.assert_allclose(coef_tr, coef_te, atol=0.05)


@given(n=st.integers(1, 80), b=st.integers(1, 80), seed=st.integers(0, 1000))
def test_batches_partition_the_split(n, b, seed):
    if b > n:
        return
    ds = generate_dataset(DatasetSpec(n_train=n, n_test=1))
    batches = batch_iterator(ds, b, shuffle_seed=seed)
    rows = np.concatenate([bt.rows for bt in batches])
    assert sorted(rows.tolist()) == list(range(n))
    assert len(batches) == math.ceil(n / b)
    assert all(len(bt) == b for bt in batches[:-1])


def test_batch_order_depends_on_seed_and_epoch():
    ds = generate_dataset(DatasetSpec(n_train=64, n_test=1))
    first = batch_iterator(ds, 8, shuffle_seed=0, epoch=0)[0].rows
    assert not np.array_equal(first, batch_iterator(ds, 8, shuffle_seed=0, epoch=1)[0].rows)
    assert not np.array_equal(first, batch_iterator(ds, 8, shuffle_seed=1, epoch=0)[0].rows)
    np.testing.assert_array_equal(first, batch_iterator(ds, 8, shuffle_seed=0, epoch=0)[0].rows)


@pytest.mark.parametrize("b", [0, 65])
def test_invalid_batch_size(b):
    ds = generate_dataset(DatasetSpec(n_train=64, n_test=1))
    with pytest.raises(ConfigError):
        batch_iterator(ds, b, shuffle_seed=0)


def test_sequential_batches_cover_in_order():
    ds = generate_dataset(DatasetSpec(n_train=50, n_test=1))
    rows = np.concatenate([b.rows for b in sequential_batches(ds, 16)])
    np.testing.assert_array_equal(rows, np.arange(50))


def test_first_batch_is_first_stored_rows():
    ds = generate_dataset(DatasetSpec(n_train=50, n_test=1))
    np.testing.assert_array_equal(ds.first_batch(7).inputs, ds.x_train[:7])


@pytest.mark.parametrize("spec", [
    DatasetSpec("noisy-rings", n_train=40, n_test=10, n_classes=3, label_noise=0.25),
    DatasetSpec("random-regression", n_train=20, n_test=5, input_dim=4),
])
def test_csv_export_round_trips_exactly(tmp_path, spec):
    ds = generate_dataset(spec)
    paths = export_csv(ds, tmp_path)
    back = import_csv(spec, tmp_path)
    np.testing.assert_array_equal(back.x_train, ds.x_train)
    np.testing.assert_array_equal(back.y_train, ds.y_train)
    np.testing.assert_array_equal(back.x_test, ds.x_test)
    for p in paths:
        raw = p.read_bytes()
        assert b"\r" not in raw and raw.endswith(b"\n")
