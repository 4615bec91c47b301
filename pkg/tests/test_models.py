import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import euclid, gaussian_nb_posterior, knn_brute, logistic_loss_and_grad

from ztguard.detectors import (
    MODEL_ORDER,
    DivergenceError,
    ForestParams,
    GbtParams,
    GnbModel,
    KnnModel,
    KnnParams,
    SchemaVersionError,
    SgdParams,
    euclidean_distance,
    example_gradient,
    example_loss,
    fit_model,
    labels_from_scores,
    load_model,
    model_from_dict,
    predict,
    predict_knn,
    save_model,
    score_raw,
    train,
    train_forest,
    train_gbt,
    train_gnb,
    train_knn,
    train_sgd,
)
from ztguard.flowdata import Dataset, SynthConfig, generate_synthetic, to_dataset


def ds(rows, labels, names=None):
    rows = np.asarray(rows, dtype=float)
    names = names or tuple(f"f{j}" for j in range(rows.shape[1]))
    return Dataset(names, rows, labels)


@pytest.fixture(scope="module")
def blobs():
    rng = np.random.default_rng(3)
    benign = rng.normal(0.3, 0.08, size=(120, 3))
    attack = rng.normal(0.7, 0.08, size=(80, 3))
    return ds(np.clip(np.r_[benign, attack], 0, 1), [0] * 120 + [1] * 80)


# ---- KNN


def test_euclidean_examples():
    assert euclidean_distance([0, 0], [3, 4]) == 5.0
    assert euclidean_distance([1, 2, 3], [1, 2, 3]) == 0.0
    with pytest.raises(ValueError):
        euclidean_distance([1, 2], [1, 2, 3])


def test_knn_k1_returns_nearest_label():
    model = train_knn(ds([[0, 0], [1, 1], [5, 5]], [0, 0, 1]), KnnParams(k=1))
    assert predict_knn(model, [4.5, 4.5]) == (1, 1.0)
    assert predict_knn(model, [0.2, 0.1]) == (0, 0.0)


def test_knn_k3_majority():
    model = train_knn(ds([[0], [1], [2], [10]], [1, 1, 0, 0]), KnnParams(k=3))
    assert predict_knn(model, [0.5]) == (1, pytest.approx(2 / 3))


def test_knn_distance_tie_uses_stored_order():
    model = train_knn(ds([[1.0], [-1.0]], [1, 0]), KnnParams(k=1))
    assert predict_knn(model, [0.0]) == (1, 1.0)
    model = train_knn(ds([[-1.0], [1.0]], [0, 1]), KnnParams(k=1))
    assert predict_knn(model, [0.0]) == (0, 0.0)


def test_knn_even_k_vote_tie_is_benign():
    model = train_knn(ds([[0.0], [1.0], [5.0]], [1, 0, 1]), KnnParams(k=2))
    label, score = predict_knn(model, [0.4])
    assert (label, score) == (0, 0.5)
    assert labels_from_scores(model, np.array([0.5])).tolist() == [0]


def test_knn_k_bounds():
    with pytest.raises(ValueError):
        train_knn(ds([[0], [1]], [0, 1]), KnnParams(k=3))
    with pytest.raises(ValueError):
        KnnParams(k=0)


@pytest.mark.parametrize("k", [1, 3, 5])
def test_knn_matches_brute_force(k):
    rng = np.random.default_rng(k)
    stored = rng.integers(0, 5, size=(60, 3)).astype(float)  # coarse grid: many distance ties
    labels = rng.integers(0, 2, size=60)
    labels[:2] = [0, 1]
    queries = rng.integers(0, 5, size=(20, 3)).astype(float)
    model = train_knn(ds(stored, labels), KnnParams(k=k))
    for q in queries:
        assert predict_knn(model, q) == knn_brute(stored.tolist(), labels.tolist(), q.tolist(), k)


@given(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3), st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3))
def test_euclid_matches_oracle(a, b):
    assert euclidean_distance(a, b) == euclid(a, b)


# ---- SGD


def test_sgd_single_step_by_hand():
    theta, bias = np.zeros(2), 0.0
    g, gb = example_gradient(theta, bias, np.array([1.0, 2.0]), 1.0, 0.0)
    np.testing.assert_allclose(g, [-0.5, -1.0])
    assert gb == -0.5
    assert example_loss(theta, bias, np.array([1.0, 2.0]), 1.0, 0.0) == pytest.approx(math.log(2))


@settings(max_examples=100)
@given(
    st.lists(st.floats(-3, 3), min_size=4, max_size=4),
    st.floats(-2, 2),
    st.lists(st.floats(-2, 2), min_size=4, max_size=4),
    st.sampled_from([0.0, 1.0]),
    st.sampled_from([0.0, 1e-4, 0.1]),
)
def test_gradient_matches_finite_differences(theta, bias, x, y, l2):
    theta, x = np.array(theta), np.array(x)
    g, gb = example_gradient(theta, bias, x, y, l2)
    h = 1e-6
    for j in range(4):
        e = np.zeros(4)
        e[j] = h
        fd = (example_loss(theta + e, bias, x, y, l2) - example_loss(theta - e, bias, x, y, l2)) / (2 * h)
        assert abs(fd - g[j]) <= 1e-5 * max(1.0, abs(g[j]))
    fd_b = (example_loss(theta, bias + h, x, y, l2) - example_loss(theta, bias - h, x, y, l2)) / (2 * h)
    assert abs(fd_b - gb) <= 1e-5 * max(1.0, abs(gb))


def test_gradient_matches_oracle():
    theta, x = [0.3, -0.2, 0.1], [1.0, 0.5, -2.0]
    loss, grad, gb = logistic_loss_and_grad(theta, 0.25, x, 1.0, 0.01)
    g, b = example_gradient(np.array(theta), 0.25, np.array(x), 1.0, 0.01)
    np.testing.assert_allclose(g, grad, rtol=1e-14, atol=1e-15)
    assert b == pytest.approx(gb, rel=1e-14)
    assert example_loss(np.array(theta), 0.25, np.array(x), 1.0, 0.01) == pytest.approx(loss, rel=1e-13)


def test_sgd_zero_rate_keeps_zero_weights(blobs):
    model = train_sgd(blobs, SgdParams(eta=0.0, epochs=2))
    assert np.all(model.theta == 0) and model.bias == 0
    np.testing.assert_array_equal(model.scores(blobs.rows), np.full(len(blobs), 0.5))


def test_sgd_learns_and_is_seeded(blobs):
    a = train_sgd(blobs, SgdParams(eta=0.1, epochs=30, seed=4))
    b = train_sgd(blobs, SgdParams(eta=0.1, epochs=30, seed=4))
    np.testing.assert_array_equal(a.theta, b.theta)
    assert np.mean((a.scores(blobs.rows) >= 0.5) == blobs.labels) > 0.95
    assert a.epoch_losses[-1] < a.epoch_losses[0]


def test_sgd_divergence_is_reported():
    big = ds([[1e200, 1e200], [-1e200, -1e200]], [0, 1])
    with pytest.raises(DivergenceError) as info:
        train_sgd(big, SgdParams(eta=1e200, epochs=3))
    assert info.value.epoch == 1


# ---- naive Bayes


def test_gnb_matches_bayes_rule(blobs):
    model = train_gnb(blobs)
    rows, labels = blobs.rows.tolist(), blobs.labels.tolist()
    for q in ([0.3, 0.3, 0.3], [0.5, 0.5, 0.55], [0.7, 0.6, 0.8]):
        assert model.scores(np.array([q]))[0] == pytest.approx(gaussian_nb_posterior(rows, labels, q), abs=1e-9)


def test_gnb_constant_feature_stays_finite():
    model = train_gnb(ds([[1.0, 0.0], [1.0, 0.1], [1.0, 0.9], [1.0, 1.0]], [0, 0, 1, 1]))
    out = model.posteriors(np.array([[1.0, 0.05], [2.0, 0.5]]))
    assert np.all(np.isfinite(out))
    np.testing.assert_allclose(out.sum(axis=1), 1.0)


def test_gnb_priors_must_sum_to_one():
    with pytest.raises(ValueError):
        GnbModel(priors=np.array([0.6, 0.6]), means=np.zeros((2, 1)), variances=np.ones((2, 1)))


# ---- boosting


def test_gbt_six_row_fixture():
    fixture = ds(np.arange(1.0, 7.0)[:, None], [0, 0, 0, 0, 1, 1])
    model = train_gbt(fixture, GbtParams(rounds=1, max_depth=1, lam=1.0, eta=1.0))
    assert model.base_score == pytest.approx(math.log(0.5), abs=1e-15)
    leaves = model.trees[0].leaf_values(np.array([[1.0], [6.0]]))[:, 0]
    assert leaves[0] == pytest.approx(-12 / 17, abs=1e-9)
    assert leaves[1] == pytest.approx(12 / 13, abs=1e-9)


def test_gbt_loss_non_increasing(blobs):
    model = train_gbt(blobs, GbtParams(rounds=20))
    hist = np.array(model.loss_history)
    assert len(hist) == 21
    assert np.all(np.diff(hist) <= 1e-9)


def test_gbt_gamma_prunes_everything(blobs):
    model = train_gbt(blobs, GbtParams(rounds=2, gamma=1e9))
    assert all(len(t) == 1 for t in model.trees)


# ---- forest


def test_forest_single_tree_memorizes():
    data = ds([[0.0], [1.0], [2.0], [3.0]], [0, 0, 1, 1])
    model = train_forest(data, ForestParams(n_trees=1, max_depth=None, bootstrap=False))
    np.testing.assert_array_equal(model.scores(data.rows), [0, 0, 1, 1])


def test_forest_scores_are_vote_fractions(blobs):
    model = train_forest(blobs, ForestParams(n_trees=7, max_depth=3, seed=2))
    s = model.scores(blobs.rows)
    np.testing.assert_allclose(s * 7, np.round(s * 7), atol=1e-12)
    assert model.features_per_split == 2
    again = train_forest(blobs, ForestParams(n_trees=7, max_depth=3, seed=2))
    np.testing.assert_array_equal(again.scores(blobs.rows), s)


# ---- shared contract


@pytest.mark.parametrize("kind", MODEL_ORDER)
def test_single_class_training_is_rejected(kind):
    with pytest.raises(ValueError):
        train(kind, ds([[0.0], [1.0]], [1, 1]))


@pytest.mark.parametrize("kind", MODEL_ORDER)
def test_scores_in_unit_interval_and_save_load(kind, blobs, tmp_path):
    params = {"forest": ForestParams(n_trees=5), "gbt": GbtParams(rounds=5)}.get(kind)
    model = fit_model(kind, blobs, params)
    s = score_raw(model, blobs)
    assert np.all((s >= 0) & (s <= 1))
    assert np.mean((s >= 0.5) == blobs.labels) > 0.9
    path = tmp_path / f"{kind}.json"
    save_model(model, path)
    loaded = load_model(path)
    np.testing.assert_array_equal(score_raw(loaded, blobs), s)
    assert loaded.feature_names == model.feature_names


def test_predict_checks_width(blobs):
    model = fit_model("gnb", blobs)
    label, score = predict(model, [0.9, 0.9, 0.9])
    assert label == 1 and 0.5 <= score <= 1
    with pytest.raises(ValueError):
        predict(model, [0.1, 0.2])


def test_schema_version_mismatch():
    model = train_knn(ds([[0.0], [1.0]], [0, 1]), KnnParams(k=1))
    doc = model.to_dict()
    doc["schema_version"] = 99
    with pytest.raises(SchemaVersionError):
        model_from_dict(doc)


def test_knn_model_validates_k():
    with pytest.raises(ValueError):
        KnnModel(rows=np.zeros((2, 1)), labels=np.array([0, 1]), k=5)


def test_models_on_small_synthetic_set():
    data = to_dataset(generate_synthetic(SynthConfig.standard(seed=1, n_flows=600)))
    for kind in MODEL_ORDER:
        params = {"forest": ForestParams(n_trees=10), "gbt": GbtParams(rounds=10)}.get(kind)
        s = score_raw(fit_model(kind, data, params), data)
        assert np.mean((s >= 0.5) == data.labels) > 0.9, kind
