import numpy as np
import pytest

from perf_sampler.perf_models import (FNNRegressor, GBTRegressor, load_model, mlp_loss_and_grad, predict, rmse,
                                      save_model, train_fnn, train_gbt)


def test_rmse_values():
    assert rmse([1, 2], [1, 2]) == 0.0
    assert rmse([0, 0], [3, 4]) == pytest.approx(np.sqrt(12.5))
    assert rmse(np.array([2.0, 4.0]) * 3, np.array([1.0, 1.0]) * 3) == pytest.approx(3 * rmse([2, 4], [1, 1]))
    with pytest.raises(ValueError):
        rmse([1], [1, 2])
    with pytest.raises(ValueError):
        rmse([], [])


def test_gbt_constant_target():
    X = np.random.default_rng(0).random((20, 3))
    m = train_gbt(X, np.full(20, 7.5))
    assert np.allclose(predict(m, X), 7.5)
    assert m.train_rmse_[1] == pytest.approx(0.0)


def test_gbt_stump_cannot_fit_xor():
    X = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=float)
    y = np.array([0, 1, 1, 0], dtype=float)
    m = GBTRegressor(n_rounds=1, max_depth=1, learning_rate=1.0, min_samples_leaf=1).fit(X, y)
    assert rmse(m.predict(X), y) > 0.1


def test_gbt_rejects_bad_input():
    with pytest.raises(ValueError):
        train_gbt(np.array([[np.nan]]), np.array([1.0]))
    m = train_gbt(np.random.default_rng(0).random((10, 2)), np.arange(10.0))
    with pytest.raises(ValueError):
        m.predict(np.zeros((2, 3)))
    assert m.predict(np.zeros((0, 2))).shape == (0,)


def test_predictions_permute_with_rows():
    rng = np.random.default_rng(1)
    X = rng.random((40, 3))
    y = X @ [1.0, -2.0, 0.5]
    for m in (train_gbt(X, y), train_fnn(X, y, {"epochs": 100, "lambda": 1e-3})):
        perm = rng.permutation(40)
        assert np.allclose(m.predict(X[perm]), m.predict(X)[perm])


def test_fnn_huge_l1_collapses_to_mean():
    rng = np.random.default_rng(2)
    X = rng.random((30, 4))
    y = 5 + X @ [3.0, 1.0, 0.0, -2.0]
    m = FNNRegressor(hidden=(8,), l1=1e6, epochs=300).fit(X, y)
    assert np.all(np.abs(m.predict(X) - y.mean()) < 0.05 * y.std())


def test_fnn_small_step_loss_nonincreasing():
    rng = np.random.default_rng(3)
    X = rng.random((25, 3))
    y = X.sum(axis=1)
    m = FNNRegressor(hidden=(16, 16), l1=0.0, learning_rate=1e-4, epochs=100).fit(X, y)
    curve = np.array(m.loss_curve_)
    assert np.all(np.diff(curve) <= 1e-12)


def test_fnn_row_order_invariant():
    rng = np.random.default_rng(4)
    X = rng.random((30, 3))
    y = X @ [1.0, 2.0, 3.0]
    perm = rng.permutation(30)
    a = FNNRegressor(hidden=(8,), epochs=200).fit(X, y)
    b = FNNRegressor(hidden=(8,), epochs=200).fit(X[perm], y[perm])
    assert a.l1_ == b.l1_
    assert np.allclose(a.predict(X), b.predict(X), atol=1e-9)


def test_mlp_gradient_matches_finite_differences():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(5, 2))
    y = rng.normal(size=5)
    layers = [[rng.normal(size=(2, 3)), rng.normal(size=3)], [rng.normal(size=(3, 1)), rng.normal(size=1)]]
    _, grads = mlp_loss_and_grad(layers, X, y)
    h = 1e-6
    worst = 0.0
    for li, (W, b) in enumerate(layers):
        for pi, P in enumerate((W, b)):
            for idx in np.ndindex(P.shape):
                old = P[idx]
                P[idx] = old + h
                up = mlp_loss_and_grad(layers, X, y)[0]
                P[idx] = old - h
                down = mlp_loss_and_grad(layers, X, y)[0]
                P[idx] = old
                fd = (up - down) / (2 * h)
                g = grads[li][pi][idx]
                worst = max(worst, abs(fd - g) / max(abs(fd), abs(g), 1e-8))
    assert worst < 1e-4


@pytest.mark.parametrize("kind", ["gbt", "fnn"])
def test_model_json_roundtrip(kind, tmp_path):
    rng = np.random.default_rng(6)
    X = rng.random((30, 3))
    y = X @ [1.0, -1.0, 2.0]
    m = train_gbt(X, y, {"rounds": 10}) if kind == "gbt" else train_fnn(X, y, {"epochs": 50, "lambda": 1e-3})
    save_model(m, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    assert np.max(np.abs(back.predict(X) - m.predict(X))) < 1e-12
