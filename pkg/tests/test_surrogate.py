import math

import mpmath
import numpy as np
import pytest
import torch
from hypothesis import given
import hypothesis.strategies as st

from snbo.core import Dataset, TrainerConfig
from snbo.surrogate import (
    Architecture,
    Network,
    TrainingDivergedError,
    fit_standardizer,
    forward,
    gelu,
    init_network,
    loss_and_grad,
    nrmse,
    predict,
    train,
)


def gelu_oracle(x):
    mpmath.mp.dps = 40
    return float(x * (1 + mpmath.erf(mpmath.mpf(x) / mpmath.sqrt(2))) / 2)


def loop_forward(net, x):
    """Scalar-loop forward pass for one input vector."""
    h = [float(v) for v in x]
    n_layers = len(net.weights)
    for k in range(n_layers):
        W = net.weights[k].tolist()
        b = net.biases[k].tolist()
        z = [b[j] + sum(h[i] * W[i][j] for i in range(len(h))) for j in range(len(b))]
        h = z if k == n_layers - 1 else [gelu_oracle(v) for v in z]
    return h[0]


def test_gelu_values():
    assert gelu(0.0) == 0.0
    assert gelu(10.0) == pytest.approx(10.0, abs=1e-9)
    assert gelu(1.0) == pytest.approx(gelu_oracle(1.0), rel=1e-14)
    xs = np.linspace(-6, 6, 41)
    np.testing.assert_allclose(gelu(xs), [gelu_oracle(x) for x in xs], rtol=1e-13, atol=1e-15)


def test_init_determinism_and_zero_biases():
    arch = Architecture(5, (16, 8))
    a, b = init_network(arch, 3), init_network(arch, 3)
    assert torch.equal(a.params, b.params)
    assert all(torch.count_nonzero(bb) == 0 for bb in a.biases)
    assert torch.count_nonzero(a.m) == 0 and torch.count_nonzero(a.v) == 0 and a.t == 0
    assert not torch.equal(a.params, init_network(arch, 4).params)


def test_he_variance():
    net = init_network(Architecture(200, (10_000,)), 0)
    w = net.weights[0].numpy()
    assert w.size >= 10_000
    assert abs(w.var() - 2 / 200) < 0.1 * (2 / 200)
    assert abs(w.mean()) < 0.01


def test_network_shapes():
    net = Network(Architecture(3, (4, 5)))
    assert [tuple(w.shape) for w in net.weights] == [(3, 4), (4, 5), (5, 1)]
    assert net.n_params == 3 * 4 + 4 + 4 * 5 + 5 + 5 + 1
    assert net.m.shape == net.params.shape


def test_forward_zero_network():
    net = Network(Architecture(4, (8, 8)))
    np.testing.assert_array_equal(forward(net, np.random.default_rng(0).normal(size=(7, 4))), 0.0)


def test_forward_batch_consistency():
    net = init_network(Architecture(6, (32, 32)), 1)
    X = np.random.default_rng(1).normal(size=(20, 6))
    batch = forward(net, X)
    for i in range(20):
        assert forward(net, X[i])[0] == pytest.approx(batch[i], abs=1e-12)


def test_forward_matches_loop_oracle():
    net = init_network(Architecture(3, (7, 5)), 2)
    for w in net.biases:
        w.copy_(torch.from_numpy(np.random.default_rng(5).normal(size=w.shape[0])))
    X = np.random.default_rng(3).normal(size=(6, 3))
    out = forward(net, X)
    for i in range(6):
        assert out[i] == pytest.approx(loop_forward(net, X[i]), abs=1e-10)


def test_forward_dimension_mismatch():
    with pytest.raises(ValueError):
        forward(Network(Architecture(3, (4,))), np.zeros((2, 4)))


def _mp_loss(net, P, X, y):
    """MSE loss at 50 digits for the flat parameter vector ``P`` (mpf objects)."""
    idx_w, idx_b = net.views(torch.arange(net.n_params))
    _erf = np.vectorize(lambda z: z * (1 + mpmath.erf(z / mpmath.sqrt(2))) / 2, otypes=[object])
    h = np.array([[mpmath.mpf(float(v)) for v in row] for row in X], dtype=object)
    for k in range(len(idx_w)):
        h = h.dot(P[idx_w[k].numpy()]) + P[idx_b[k].numpy()]
        if k < len(idx_w) - 1:
            h = _erf(h)
    r = h[:, 0] - np.array([mpmath.mpf(float(v)) for v in y], dtype=object)
    return mpmath.fsum(r * r) / len(r)


def _fd_check(seed):
    """Analytic gradient and a central finite difference taken in 50-digit arithmetic."""
    mpmath.mp.dps = 50
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    hidden = tuple(int(h) for h in rng.integers(2, 7, size=int(rng.integers(1, 3))))
    net = init_network(Architecture(n, hidden), seed, "float64")
    for b in net.biases:
        b.copy_(torch.from_numpy(rng.normal(scale=0.5, size=b.shape[0])))
    X = rng.normal(size=(int(rng.integers(1, 12)), n))
    y = rng.normal(size=X.shape[0])
    _, grad = loss_and_grad(net, X, y)
    grad = grad.numpy()
    P = np.array([mpmath.mpf(float(v)) for v in net.params], dtype=object)
    h = mpmath.mpf("1e-20")
    fd = np.empty_like(grad)
    for i in range(net.n_params):
        old = P[i]
        P[i] = old + h
        lp = _mp_loss(net, P, X, y)
        P[i] = old - h
        lm = _mp_loss(net, P, X, y)
        P[i] = old
        fd[i] = float((lp - lm) / (2 * h))
    return grad, fd


@pytest.mark.parametrize("seed", range(10))
def test_gradient_matches_finite_differences(seed):
    grad, fd = _fd_check(seed)
    scale = np.maximum(np.abs(fd), np.abs(grad))
    # relative error, with an absolute floor for entries that are ~0
    rel = np.abs(grad - fd) / np.maximum(scale, 1e-6)
    assert rel.max() <= 1e-4


def test_standardizer():
    d = Dataset([[0.0, 0.3], [1.0, 0.3]], [2.0, 2.0])
    s = fit_standardizer(d)
    assert s.x_mean[0] == 0.5 and s.x_std[0] == 0.5
    assert s.x_std[1] == 1.0
    assert s.y_mean == 2.0 and s.y_std == 1.0
    z = np.array([0.123, -4.5, 17.0])
    np.testing.assert_allclose(s.inverse_y(s.transform_y(z)), z, rtol=1e-12)
    np.testing.assert_allclose(s.inverse_x(s.transform_x([[0.25, 0.9]])), [[0.25, 0.9]], rtol=1e-12)
    with pytest.raises(ValueError):
        fit_standardizer(Dataset(n_dims=2))


def test_nrmse():
    assert nrmse([1, 2, 3], [1, 2, 3]) == 0.0
    assert nrmse([0, 0], [3, 4]) == pytest.approx(math.sqrt(12.5))


@given(st.lists(st.integers(-1000, 1000), min_size=1, max_size=20), st.data())
def test_nrmse_nonnegative_zero_iff_equal(target, data):
    pred = data.draw(st.lists(st.integers(-1000, 1000), min_size=len(target), max_size=len(target)))
    e = nrmse(pred, target)
    assert e >= 0
    assert (e == 0) == (pred == target)


def test_train_single_point():
    d = Dataset([[0.3, 0.6]], [4.2])
    net = init_network(Architecture(2, (16, 16)), 0)
    rep = train(net, d, TrainerConfig(), fit_standardizer(d))
    assert rep.stopped_early and rep.final_nrmse < 1e-3


@pytest.fixture(scope="module")
def linear_fit():
    rng = np.random.default_rng(0)
    U = rng.random((50, 1))
    d = Dataset(U, 3 * U[:, 0])
    net = init_network(Architecture(1, (128, 128)), 0, "float32")
    std = fit_standardizer(d)
    rep = train(net, d, TrainerConfig(), std)
    return net, std, d, rep


def test_train_linear_target(linear_fit):
    _, _, _, rep = linear_fit
    assert rep.stopped_early
    assert rep.epochs_run <= 3000
    assert rep.final_nrmse < 1e-3


def test_predict_training_points(linear_fit):
    net, std, d, rep = linear_fit
    pred = predict(net, std, d.X)
    # every residual is bounded by sqrt(N) times the RMSE
    bound = rep.final_nrmse * std.y_std * math.sqrt(len(d))
    # float32 forward pass: allow its rounding on top of the bound
    assert np.max(np.abs(pred - d.Y)) <= bound + 1e-5 * std.y_std
    # float32 BLAS kernels differ between batch shapes at the ulp level
    np.testing.assert_allclose([predict(net, std, u) for u in d.X[:5]], pred[:5], rtol=1e-5)


def test_predict_zero_network_gives_mean():
    d = Dataset(np.random.default_rng(0).random((10, 3)), np.arange(10.0))
    std = fit_standardizer(d)
    np.testing.assert_allclose(predict(Network(Architecture(3, (4,))), std, d.X), 4.5)


def test_train_deterministic():
    rng = np.random.default_rng(4)
    d = Dataset(rng.random((30, 3)), rng.normal(size=30))
    std = fit_standardizer(d)
    cfg = TrainerConfig(max_epochs=200)
    a = init_network(Architecture(3, (32, 32)), 9, "float32")
    b = a.copy()
    ra, rb = train(a, d, cfg, std), train(b, d, cfg, std)
    assert ra == rb
    assert torch.equal(a.params, b.params) and torch.equal(a.v, b.v)


def test_warm_start_persists_state():
    rng = np.random.default_rng(5)
    U = rng.random((40, 3))
    y = np.sin(4 * U).sum(axis=1)
    net = init_network(Architecture(3, (32, 32)), 0, "float64")
    cfg = TrainerConfig(max_epochs=100)
    d = Dataset(U[:30], y[:30])
    train(net, d, cfg, fit_standardizer(d))
    t1, params, m = net.t, net.params.clone(), net.m.clone()
    assert t1 == 100
    d.append(U[30:], y[30:])
    train(net, d, TrainerConfig(max_epochs=1), fit_standardizer(d))
    assert net.t == t1 + 1
    # one Adam step from the previous state, not from a fresh network
    assert torch.allclose(net.m, 0.9 * m, atol=1.0) and not torch.equal(net.m, torch.zeros_like(m))
    assert (net.params - params).abs().max() < 2e-3


def test_divergence_detected():
    d = Dataset([[0.1], [0.9]], [0.0, 1.0])
    net = init_network(Architecture(1, (4,)), 0, "float64")
    net.params.fill_(float("nan"))
    with pytest.raises(TrainingDivergedError):
        train(net, d, TrainerConfig(max_epochs=5), fit_standardizer(d))


def test_checkpoint_roundtrip(tmp_path):
    net = init_network(Architecture(3, (5, 4)), 1, "float64")
    net.save(tmp_path / "net.json")
    back = Network.load(tmp_path / "net.json")
    assert torch.equal(back.params, net.params) and back.arch == net.arch


def test_batch_consistency_float64():
    d = Dataset(np.random.default_rng(0).random((10, 3)), np.arange(10.0))
    std = fit_standardizer(d)
    net = init_network(Architecture(3, (16, 16)), 0, "float64")
    batch = predict(net, std, d.X)
    np.testing.assert_allclose([predict(net, std, u) for u in d.X], batch, rtol=0, atol=1e-12)


def test_train_leaves_denormal_mode_alone():
    tiny = torch.tensor(1e-40, dtype=torch.float32)
    d = Dataset([[0.1], [0.9]], [0.0, 1.0])
    train(init_network(Architecture(1, (4,)), 0), d, TrainerConfig(max_epochs=3), fit_standardizer(d))
    assert float(tiny * 1.0) != 0.0
