import math

import numpy as np
import pytest

from eflfg.data import PretrainSet
from eflfg.errors import InvalidInputError
from eflfg.zoo import (
    ModelCatalog,
    ModelSpec,
    PretrainedModel,
    build_catalog,
    dump_catalog,
    load_catalog,
    model_cost,
    paper_zoo,
    predict,
    train_model,
)


def pretrain_of(x, y):
    x = np.asarray(x, dtype=float)
    return PretrainSet(x, np.asarray(y, dtype=float), np.arange(len(x)))


def kernel_model(family, h, anchors, coefs, bias=0.0):
    anchors = np.asarray(anchors, dtype=float)
    return PretrainedModel(0, ModelSpec(family, h), anchors.shape[1], anchors=anchors,
                           coefficients=np.asarray(coefs, dtype=float), bias=bias)


def test_gaussian_interpolates_two_points():
    m = train_model(ModelSpec("gaussian-kernel", 1.0, ridge=1e-6), pretrain_of([[0.0], [1.0]], [0.0, 1.0]), 0)
    assert abs(predict(m, [0.0]) - 0.0) < 1e-3
    assert abs(predict(m, [1.0]) - 1.0) < 1e-3


def test_polynomial_degree_one_fits_linear_data():
    rng = np.random.default_rng(0)
    x = rng.random((60, 3))
    beta, c0 = np.array([0.3, -0.2, 0.5]), 0.1
    m = train_model(ModelSpec("polynomial-kernel", 1.0, ridge=1e-6), pretrain_of(x, x @ beta + c0), 0)
    held = rng.random((40, 3))
    # closed-form least-squares fit as the oracle
    design = np.column_stack([x, np.ones(len(x))])
    coef = np.linalg.lstsq(design, x @ beta + c0, rcond=None)[0]
    oracle = np.column_stack([held, np.ones(len(held))]) @ coef
    pred = m.predict_batch(held)
    assert np.mean((pred - (held @ beta + c0)) ** 2) <= 1e-4
    assert np.max(np.abs(pred - oracle)) < 1e-2


def test_mlp_zero_epochs_is_seeded_init():
    spec = ModelSpec("mlp", layers=(4,), epochs=0)
    data = pretrain_of([[0.1, 0.2], [0.3, 0.9]], [0.5, 0.1])
    a, b = train_model(spec, data, 11), train_model(spec, data, 11)
    x = np.array([[0.4, 0.6]])
    assert a.predict_batch(x).tobytes() == b.predict_batch(x).tobytes()
    # init scale is 1/sqrt(fan_in), drawn from the seeded generator in layer order
    rng = np.random.default_rng(11)
    w0 = rng.uniform(-1 / math.sqrt(2), 1 / math.sqrt(2), (2, 4))
    b0 = rng.uniform(-1 / math.sqrt(2), 1 / math.sqrt(2), 4)
    w1 = rng.uniform(-0.5, 0.5, (4, 1))
    b1 = rng.uniform(-0.5, 0.5, 1)
    expected = np.maximum(x @ w0 + b0, 0) @ w1 + b1
    assert predict(a, x[0]) == pytest.approx(expected[0, 0], abs=1e-15)


def test_mlp_training_reduces_loss():
    rng = np.random.default_rng(1)
    x = rng.random((200, 2))
    y = 0.3 + 0.4 * x[:, 0]
    before = train_model(ModelSpec("mlp", layers=(25,), epochs=0), pretrain_of(x, y), 2)
    after = train_model(ModelSpec("mlp", layers=(25,)), pretrain_of(x, y), 2)
    mse = lambda m: np.mean((m.predict_batch(x) - y) ** 2)
    assert mse(after) < 0.5 * mse(before)


def test_predict_single_anchor_gaussian():
    a = np.array([0.3, 0.7])
    for h in (0.01, 1.0, 100.0):
        assert predict(kernel_model("gaussian-kernel", h, [a], [1.0]), a) == 1.0


def test_predict_zero_coefficients():
    m = kernel_model("laplacian-kernel", 1.0, [[0.1, 0.2], [0.5, 0.5]], [0.0, 0.0])
    assert predict(m, [0.9, 0.9]) == 0.0


@pytest.mark.parametrize(
    "family, h, kern",
    [
        ("gaussian-kernel", 0.5, lambda x, z: math.exp(-sum((a - b) ** 2 for a, b in zip(x, z)) / (2 * 0.25))),
        ("laplacian-kernel", 0.5, lambda x, z: math.exp(-sum(abs(a - b) for a, b in zip(x, z)) / 0.5)),
        ("polynomial-kernel", 3.0, lambda x, z: (sum(a * b for a, b in zip(x, z)) + 1) ** 3),
        ("sigmoid-kernel", 2.0, lambda x, z: math.tanh(2 * sum(a * b for a, b in zip(x, z)))),
    ],
)
def test_predict_matches_direct_kernel_sum(family, h, kern):
    anchors = [[0.1, 0.9], [0.6, 0.2]]
    coefs = [0.7, -0.4]
    m = kernel_model(family, h, anchors, coefs, bias=0.05)
    x = [0.3, 0.4]
    direct = 0.05 + sum(c * kern(x, a) for c, a in zip(coefs, anchors))
    assert predict(m, x) == pytest.approx(direct, rel=1e-12, abs=1e-12)


def test_predict_dimension_mismatch():
    m = kernel_model("gaussian-kernel", 1.0, [[0.1, 0.2]], [1.0])
    with pytest.raises(InvalidInputError):
        predict(m, [0.1, 0.2, 0.3])


@pytest.mark.parametrize("params, max_params, expected", [(50, 100, 0.5), (100, 100, 1.0), (1, 1000, 0.001)])
def test_model_cost_ratio(params, max_params, expected):
    m = kernel_model("gaussian-kernel", 1.0, np.zeros((params - 1, 1)), np.zeros(params - 1))
    assert m.param_count == params
    assert model_cost(m, max_params) == expected


def test_model_cost_pre():
    m = kernel_model("gaussian-kernel", 1.0, np.zeros((9, 1)), np.zeros(9))
    with pytest.raises(InvalidInputError):
        model_cost(m, 5)


def test_paper_zoo_has_22_models():
    specs = paper_zoo()
    assert len(specs) == 22
    fams = [s.family for s in specs]
    for fam in ("gaussian-kernel", "laplacian-kernel", "polynomial-kernel", "sigmoid-kernel"):
        assert fams.count(fam) == 5
    assert [s.hyperparameter for s in specs if s.family == "polynomial-kernel"] == [1, 2, 3, 4, 5]
    assert [s.hyperparameter for s in specs if s.family == "sigmoid-kernel"] == [0.01, 0.1, 1, 10, 100]
    assert [s.layers for s in specs if s.family == "mlp"] == [(25,), (25, 25)]


def test_build_default_catalog_costs():
    rng = np.random.default_rng(0)
    x = rng.random((30, 3))
    cat = build_catalog(paper_zoo(), pretrain_of(x, x.sum(1) / 3), 0)
    assert cat.size == 22
    assert cat.costs.max() == 1.0
    assert np.all((cat.costs > 0) & (cat.costs <= 1))
    d = 3
    # weights plus biases, layer by layer
    assert cat.models[20].param_count == (d * 25 + 25) + (25 * 1 + 1)
    assert cat.models[21].param_count == (d * 25 + 25) + (25 * 25 + 25) + (25 * 1 + 1)
    assert cat.models[0].param_count == 31  # anchors + bias
    assert cat.costs[0] == 31 / cat.models[21].param_count


def test_singleton_catalog():
    cat = build_catalog([ModelSpec("gaussian-kernel", 1.0)], pretrain_of([[0.1], [0.2]], [0.1, 0.3]), 0)
    assert cat.size == 1 and cat.costs.tolist() == [1.0]


def test_anchor_subsampling_is_seeded():
    rng = np.random.default_rng(3)
    x = rng.random((2100, 1))
    spec = ModelSpec("laplacian-kernel", 1.0)
    a = train_model(spec, pretrain_of(x, x[:, 0]), 5)
    b = train_model(spec, pretrain_of(x, x[:, 0]), 5)
    assert a.param_count == 2001
    assert a.equals(b)


def test_retraining_is_bit_stable(small):
    from conftest import small_problem

    again, _ = small_problem()
    assert all(a.equals(b) for a, b in zip(small[0].models, again.models))


def test_sigmoid_kernel_trains_totally():
    rng = np.random.default_rng(0)
    x = rng.random((80, 4))
    m = train_model(ModelSpec("sigmoid-kernel", 100.0), pretrain_of(x, x[:, 0]), 0)
    assert np.all(np.isfinite(m.predict_batch(x)))


def test_dump_round_trip(tmp_path, small):
    catalog, stream = small
    path = tmp_path / "cat.json"
    dump_catalog(catalog, path)
    loaded = load_catalog(path)
    assert all(a.equals(b) for a, b in zip(catalog.models, loaded.models))
    np.testing.assert_array_equal(loaded.costs, catalog.costs)
    x = stream.pool_features[:10]
    assert loaded.predict_all(x).tobytes() == catalog.predict_all(x).tobytes()


def test_spec_validation():
    with pytest.raises(InvalidInputError):
        ModelSpec("rbf", 1.0)
    with pytest.raises(InvalidInputError):
        ModelSpec("polynomial-kernel", 2.5)
    with pytest.raises(InvalidInputError):
        ModelSpec("mlp")
    assert ModelSpec.from_dict(ModelSpec("mlp", layers=(3, 2)).to_dict()) == ModelSpec("mlp", layers=(3, 2))
