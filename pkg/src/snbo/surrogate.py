"""Fully-connected GELU network surrogate trained with Adam on MSE.

Backpropagation and the Adam update are written out by hand on torch
tensors; torch only serves as a fast CPU array library here. The network
carries its Adam moments and step counter so training resumes where it
stopped when a few points join the dataset.
"""

from __future__ import annotations

import json
import math
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np
import torch

from .core import Dataset, TrainerConfig

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)

_DTYPES = {"float32": torch.float32, "float64": torch.float64}


class TrainingDivergedError(RuntimeError):
    pass


def _torch_dtype(dtype) -> torch.dtype:
    if isinstance(dtype, torch.dtype):
        return dtype
    return _DTYPES[np.dtype(dtype).name]


@dataclass(frozen=True)
class Architecture:
    input_dim: int
    hidden_layers: tuple = (128, 128)
    output_dim: int = 1

    def __post_init__(self):
        object.__setattr__(self, "hidden_layers", tuple(int(w) for w in self.hidden_layers))
        if self.input_dim < 1 or not self.hidden_layers or min(self.hidden_layers) < 1:
            raise ValueError(f"invalid architecture {self}")
        if self.output_dim != 1:
            raise ValueError("only scalar-output networks are supported")

    @classmethod
    def default_for(cls, n_dims: int) -> "Architecture":
        width = 128 if n_dims <= 10 else 256
        return cls(n_dims, (width, width))

    @property
    def layer_sizes(self) -> list[int]:
        return [self.input_dim, *self.hidden_layers, self.output_dim]


class Network:
    """MLP parameters stored in one flat tensor, with per-layer views.

    ``weights[k]`` has shape ``(fan_in, fan_out)``. The Adam moments ``m``
    and ``v`` are flat tensors matching ``params``; ``t`` counts Adam steps.
    """

    def __init__(self, arch: Architecture, dtype="float64"):
        self.arch = arch
        self.dtype = _torch_dtype(dtype)
        sizes = arch.layer_sizes
        self._shapes = list(zip(sizes[:-1], sizes[1:]))
        n_params = sum(a * b + b for a, b in self._shapes)
        self.params = torch.zeros(n_params, dtype=self.dtype)
        self.m = torch.zeros_like(self.params)
        self.v = torch.zeros_like(self.params)
        self.t = 0
        self.weights, self.biases = self.views(self.params)

    def views(self, flat):
        """Split a flat parameter-shaped tensor into weight and bias views."""
        weights, biases = [], []
        offset = 0
        for fan_in, fan_out in self._shapes:
            k = fan_in * fan_out
            weights.append(flat[offset:offset + k].view(fan_in, fan_out))
            offset += k
            biases.append(flat[offset:offset + fan_out])
            offset += fan_out
        return weights, biases

    @property
    def n_params(self) -> int:
        return self.params.numel()

    def copy(self) -> "Network":
        other = Network(self.arch, self.dtype)
        other.params.copy_(self.params)
        other.m.copy_(self.m)
        other.v.copy_(self.v)
        other.t = self.t
        return other

    def to_dict(self) -> dict:
        return {
            "input_dim": self.arch.input_dim,
            "hidden_layers": list(self.arch.hidden_layers),
            "dtype": str(self.dtype).replace("torch.", ""),
            "t": self.t,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    def save(self, path) -> None:
        """Dump layer arrays as JSON for debugging (Adam moments are not kept)."""
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "Network":
        with open(path) as fh:
            d = json.load(fh)
        net = cls(Architecture(d["input_dim"], tuple(d["hidden_layers"])), d["dtype"])
        for w, wl in zip(net.weights, d["weights"]):
            w.copy_(torch.tensor(wl, dtype=net.dtype))
        for b, bl in zip(net.biases, d["biases"]):
            b.copy_(torch.tensor(bl, dtype=net.dtype))
        net.t = d["t"]
        return net


@dataclass
class Standardizer:
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float
    y_std: float

    def transform_x(self, X):
        return (np.asarray(X, dtype=float) - self.x_mean) / self.x_std

    def inverse_x(self, Z):
        return np.asarray(Z, dtype=float) * self.x_std + self.x_mean

    def transform_y(self, y):
        return (np.asarray(y, dtype=float) - self.y_mean) / self.y_std

    def inverse_y(self, z):
        return np.asarray(z, dtype=float) * self.y_std + self.y_mean


@dataclass
class TrainReport:
    epochs_run: int
    final_nrmse: float
    stopped_early: bool


def gelu(x):
    """Exact GELU ``x * Phi(x)``, with Phi the standard normal CDF."""
    t = torch.as_tensor(np.asarray(x, dtype=float))
    return (t * 0.5 * (1.0 + torch.special.erf(t * _INV_SQRT2))).numpy()


def init_network(arch: Architecture, seed, dtype="float64") -> Network:
    """He-normal weights (variance ``2 / fan_in``), zero biases, zero Adam state."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    net = Network(arch, dtype)
    for w in net.weights:
        fan_in = w.shape[0]
        w.copy_(torch.from_numpy(rng.normal(0.0, math.sqrt(2.0 / fan_in), size=tuple(w.shape))))
    return net


def _as_tensor(net: Network, X) -> torch.Tensor:
    if isinstance(X, torch.Tensor):
        return X.to(net.dtype)
    return torch.as_tensor(np.asarray(X, dtype=float)).to(net.dtype)


class _Workspace:
    """Preallocated activations and gradients for one batch size.

    Fresh megabyte-sized tensors every epoch cost as much as the arithmetic
    (allocator round trips through mmap), so training reuses these.
    """

    def __init__(self, net: Network, n_rows: int):
        new = lambda *shape: torch.empty(*shape, dtype=net.dtype)  # noqa: E731
        widths = net.arch.hidden_layers
        self.z = [new(n_rows, w) for w in widths]
        self.phi = [new(n_rows, w) for w in widths]
        self.h = [new(n_rows, w) for w in widths]
        self.tmp = [new(n_rows, w) for w in widths]
        self.delta = [new(n_rows, w) for w in widths]
        self.out = new(n_rows, 1)
        self.grad = torch.empty_like(net.params)
        self.denom = torch.empty_like(net.params)


def _forward_cache(net: Network, X: torch.Tensor, ws: _Workspace | None = None):
    """Forward pass keeping pre-activations and CDF values for backprop."""
    if ws is None:
        ws = _Workspace(net, X.shape[0])
    h = X
    acts = [X]
    last = len(net.weights) - 1
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        if k == last:
            return torch.addmm(b, h, w, out=ws.out), acts, ws.z, ws.phi
        z = torch.addmm(b, h, w, out=ws.z[k])
        phi = torch.mul(z, _INV_SQRT2, out=ws.phi[k])
        torch.special.erf(phi, out=phi).add_(1.0).mul_(0.5)
        h = torch.mul(z, phi, out=ws.h[k])
        acts.append(h)


def forward(net: Network, X) -> np.ndarray:
    """Standardized predictions for a batch of standardized inputs, shape ``(N,)``."""
    X = _as_tensor(net, X)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != net.arch.input_dim:
        raise ValueError(f"input has {X.shape[1]} features, network expects {net.arch.input_dim}")
    out, *_ = _forward_cache(net, X)
    return out[:, 0].to(torch.float64).numpy()


def loss_and_grad(net: Network, X, y, ws: _Workspace | None = None):
    """MSE loss and its gradient w.r.t. the flat parameter vector.

    The gradient lives in ``ws.grad`` when a workspace is passed.
    """
    X = _as_tensor(net, X)
    y = _as_tensor(net, y).reshape(-1, 1)
    if ws is None:
        ws = _Workspace(net, X.shape[0])
    out, acts, pre, cdf = _forward_cache(net, X, ws)
    resid = out - y
    n = X.shape[0]
    loss = float(resid.square().mean())

    grad = ws.grad
    gw, gb = net.views(grad)
    delta = resid * (2.0 / n)
    for k in range(len(net.weights) - 1, -1, -1):
        torch.mm(acts[k].T, delta, out=gw[k])
        torch.sum(delta, dim=0, out=gb[k])
        if k == 0:
            break
        z, phi = pre[k - 1], cdf[k - 1]
        # d/dz [z Phi(z)] = Phi(z) + z phi(z)
        deriv = torch.square(z, out=ws.tmp[k - 1]).mul_(-0.5).exp_().mul_(z).mul_(_INV_SQRT2PI).add_(phi)
        delta = torch.mm(delta, net.weights[k].T, out=ws.delta[k - 1]).mul_(deriv)
    return loss, grad


def adam_step(net: Network, grad: torch.Tensor, config: TrainerConfig, ws: _Workspace | None = None) -> None:
    b1, b2 = config.adam_beta1, config.adam_beta2
    net.t += 1
    net.m.mul_(b1).add_(grad, alpha=1.0 - b1)
    net.v.mul_(b2).addcmul_(grad, grad, value=1.0 - b2)
    step = config.learning_rate / (1.0 - b1 ** net.t)
    denom = torch.empty_like(net.v) if ws is None else ws.denom
    torch.div(net.v, 1.0 - b2 ** net.t, out=denom).sqrt_().add_(config.adam_eps)
    net.params.addcdiv_(net.m, denom, value=-step)


def nrmse(pred, target) -> float:
    """RMSE of standardized predictions, i.e. RMSE over the target std."""
    d = np.asarray(pred, dtype=float) - np.asarray(target, dtype=float)
    return float(math.sqrt(np.mean(d * d)))


def fit_standardizer(dataset: Dataset) -> Standardizer:
    """Population mean/std of inputs and outputs; zero stds become 1."""
    if len(dataset) == 0:
        raise ValueError("cannot standardize an empty dataset")
    x_mean = dataset.X.mean(axis=0)
    x_std = dataset.X.std(axis=0)
    x_std = np.where(x_std > 0, x_std, 1.0)
    y_mean = float(dataset.Y.mean())
    y_std = float(dataset.Y.std())
    if not y_std > 0:
        y_std = 1.0
    return Standardizer(x_mean, x_std, y_mean, y_std)


@contextmanager
def _flush_denormals():
    # float32 Adam moments decay into subnormals, which are ~3x slower on CPU.
    # torch has no getter for the flag, so probe it with a subnormal.
    was_on = bool(torch.tensor(1e-40, dtype=torch.float32).mul(1.0) == 0)
    torch.set_flush_denormal(True)
    try:
        yield
    finally:
        torch.set_flush_denormal(was_on)


def train(
    net: Network,
    dataset: Dataset,
    config: TrainerConfig,
    standardizer: Standardizer,
) -> TrainReport:
    """Full-batch Adam on the standardized dataset, one step per epoch.

    Stops as soon as the training NRMSE drops below ``config.nrmse_tol``.
    ``net`` (weights, moments, step counter) is updated in place.
    """
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    with _flush_denormals():
        return _train(net, dataset, config, standardizer)


def _train(net, dataset, config, standardizer) -> TrainReport:
    X = _as_tensor(net, standardizer.transform_x(dataset.X))
    y = _as_tensor(net, standardizer.transform_y(dataset.Y))
    ws = _Workspace(net, X.shape[0])

    for epoch in range(config.max_epochs):
        loss, grad = loss_and_grad(net, X, y, ws)
        if not math.isfinite(loss):
            raise TrainingDivergedError(
                f"non-finite training loss at epoch {epoch} (Adam step {net.t})"
            )
        err = math.sqrt(loss)
        if err < config.nrmse_tol:
            return TrainReport(epoch, err, True)
        adam_step(net, grad, config, ws)

    err = nrmse(forward(net, X), y.to(torch.float64).numpy())
    if not math.isfinite(err):
        raise TrainingDivergedError(f"non-finite training loss after {config.max_epochs} epochs")
    return TrainReport(config.max_epochs, err, False)


def predict(net: Network, standardizer: Standardizer, U) -> np.ndarray:
    """Objective-scale predictions at unit-cube points."""
    U = np.asarray(U, dtype=float)
    single = U.ndim == 1
    Z = standardizer.transform_x(np.atleast_2d(U))
    out = standardizer.inverse_y(forward(net, Z))
    return out[0] if single else out
