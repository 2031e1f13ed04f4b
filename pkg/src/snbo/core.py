"""Shared types, hyperparameter defaults, coordinate scaling and the
perturbation-range state machine."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np


@dataclass
class TrainerConfig:
    learning_rate: float = 1e-3
    max_epochs: int = 3000
    nrmse_tol: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if not self.nrmse_tol > 0:
            raise ValueError(f"nrmse_tol must be positive, got {self.nrmse_tol}")
        if self.max_epochs < 0:
            raise ValueError(f"max_epochs must be non-negative, got {self.max_epochs}")
        for name in ("adam_beta1", "adam_beta2"):
            b = getattr(self, name)
            if not 0 < b < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {b}")


@dataclass
class SnboConfig:
    """Hyperparameters of one SNBO run.

    Fields left as ``None`` resolve to their dimension-dependent defaults
    when the config is built: ``n_init = 2n``, ``max_fail = ceil(n/q)``,
    ``n_explore = n*q``, ``p_perturb = 1/sqrt(n)`` and two hidden layers of
    128 (``n <= 10``) or 256 (``n > 10``) units.
    """

    n_dims: int
    n_max: int
    n_init: Optional[int] = None
    q: int = 1
    r_init: float = 1.6
    r_max: float = 1.6
    r_min: float = 0.025
    max_succ: int = 3
    max_fail: Optional[int] = None
    n_explore: Optional[int] = None
    p_perturb: Optional[float] = None
    seed: int = 0
    hidden_layers: Optional[Sequence[int]] = None
    dtype: str = "float32"
    surrogate: TrainerConfig = field(default_factory=TrainerConfig)

    def __post_init__(self):
        n = self.n_dims
        if n < 1:
            raise ValueError(f"n_dims must be positive, got {n}")
        if self.q < 1:
            raise ValueError(f"q must be >= 1, got {self.q}")
        if self.n_init is None:
            self.n_init = 2 * n
        if self.max_fail is None:
            self.max_fail = math.ceil(n / self.q)
        if self.n_explore is None:
            self.n_explore = n * self.q
        if self.p_perturb is None:
            self.p_perturb = 1.0 / math.sqrt(n)
        if self.hidden_layers is None:
            width = 128 if n <= 10 else 256
            self.hidden_layers = (width, width)
        self.hidden_layers = tuple(int(w) for w in self.hidden_layers)
        if isinstance(self.surrogate, dict):
            self.surrogate = TrainerConfig(**self.surrogate)

        if not 0 < self.r_min < self.r_init <= self.r_max:
            raise ValueError(
                f"need 0 < r_min < r_init <= r_max, got "
                f"r_min={self.r_min}, r_init={self.r_init}, r_max={self.r_max}"
            )
        if self.n_init < 2:
            raise ValueError(f"n_init must be >= 2, got {self.n_init}")
        if self.n_init > self.n_max:
            raise ValueError(f"budget n_max={self.n_max} is smaller than n_init={self.n_init}")
        if self.n_explore < self.q:
            raise ValueError(f"n_explore={self.n_explore} must be >= q={self.q}")
        if self.max_succ < 1 or self.max_fail < 1:
            raise ValueError("max_succ and max_fail must be positive")
        if not 0 < self.p_perturb <= 1:
            raise ValueError(f"p_perturb must lie in (0, 1], got {self.p_perturb}")
        if not self.hidden_layers or min(self.hidden_layers) < 1:
            raise ValueError(f"invalid hidden_layers {self.hidden_layers}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32 or float64, got {self.dtype!r}")
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SnboConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        missing = {"n_dims", "n_max"} - set(data)
        if missing:
            raise ValueError(f"missing required config keys: {sorted(missing)}")
        return cls(**data)

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["hidden_layers"] = list(self.hidden_layers)
        return d


def load_config(path) -> SnboConfig:
    """Read an :class:`SnboConfig` from a JSON file."""
    with open(path) as fh:
        return SnboConfig.from_dict(json.load(fh))


@dataclass
class TrustState:
    r: float
    n_succ: int = 0
    n_fail: int = 0


@dataclass
class Bounds:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float).reshape(-1)
        self.upper = np.asarray(self.upper, dtype=float).reshape(-1)
        if self.lower.shape != self.upper.shape:
            raise ValueError("lower and upper bounds differ in dimension")
        if not np.all(self.lower < self.upper):
            raise ValueError("every lower bound must be strictly below its upper bound")

    @classmethod
    def uniform(cls, lo: float, hi: float, n_dims: int) -> "Bounds":
        return cls(np.full(n_dims, lo), np.full(n_dims, hi))

    @property
    def n_dims(self) -> int:
        return self.lower.size


class Dataset:
    """Evaluated points in unit-cube coordinates and their objective values."""

    def __init__(self, X=None, Y=None, n_dims: Optional[int] = None):
        if X is None:
            if n_dims is None:
                raise ValueError("an empty Dataset needs n_dims")
            X = np.zeros((0, n_dims))
            Y = np.zeros(0)
        X = np.array(X, dtype=float, ndmin=2)
        Y = np.array(Y, dtype=float).reshape(-1)
        if X.shape[0] != Y.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]} values")
        _check_unit(X)
        self.X = X
        self.Y = Y

    def __len__(self):
        return self.Y.shape[0]

    @property
    def n_dims(self) -> int:
        return self.X.shape[1]

    def append(self, X, Y) -> None:
        X = np.array(X, dtype=float, ndmin=2)
        Y = np.array(Y, dtype=float).reshape(-1)
        if X.shape[0] != Y.shape[0] or X.shape[1] != self.n_dims:
            raise ValueError("appended block does not match dataset shape")
        _check_unit(X)
        self.X = np.vstack([self.X, X])
        self.Y = np.concatenate([self.Y, Y])


@dataclass
class RunRecord:
    """Convergence history of one run.

    ``history`` rows are ``(eval_index, value, running_best)`` with 1-based
    evaluation indices. ``restarts`` lists the indices of the first evaluation
    of every restart after the initial one.
    """

    history: list = field(default_factory=list)
    restarts: list = field(default_factory=list)
    wall_time: float = 0.0
    final_best: Optional[tuple] = None

    def add(self, value: float) -> None:
        best = value if not self.history else min(self.history[-1][2], value)
        self.history.append((len(self.history) + 1, float(value), float(best)))

    @property
    def running_best(self) -> np.ndarray:
        return np.array([h[2] for h in self.history])


def _check_unit(U: np.ndarray) -> None:
    if U.size and (np.any(U < 0.0) or np.any(U > 1.0) or not np.all(np.isfinite(U))):
        raise ValueError("points must lie in the unit hypercube [0, 1]^n")


def scale_to_unit(x, bounds: Bounds) -> np.ndarray:
    """Map points in original units to ``[0, 1]^n``; out-of-bounds input is an error."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != bounds.n_dims:
        raise ValueError(f"point has {x.shape[-1]} dims, bounds have {bounds.n_dims}")
    if np.any(x < bounds.lower) or np.any(x > bounds.upper):
        raise ValueError("point lies outside the bounds")
    return (x - bounds.lower) / (bounds.upper - bounds.lower)


def unscale_from_unit(u, bounds: Bounds) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != bounds.n_dims:
        raise ValueError(f"point has {u.shape[-1]} dims, bounds have {bounds.n_dims}")
    _check_unit(u)
    x = bounds.lower + u * (bounds.upper - bounds.lower)
    # rounding can push lower + 1*(upper-lower) past upper by an ulp
    return np.clip(x, bounds.lower, bounds.upper)


def update_trust_state(
    state: TrustState, improved: bool, config: SnboConfig
) -> tuple[TrustState, bool]:
    """Advance the success/failure counters and resize the perturbation range.

    Returns the new state and whether the range collapsed below ``r_min``,
    i.e. whether the current restart is over.
    """
    r, n_succ, n_fail = state.r, state.n_succ, state.n_fail
    if improved:
        n_succ, n_fail = n_succ + 1, 0
    else:
        n_succ, n_fail = 0, n_fail + 1

    if n_succ >= config.max_succ:
        r = min(2.0 * r, config.r_max)
        n_succ = 0
    elif n_fail >= config.max_fail:
        r = r / 2.0
        n_fail = 0

    return TrustState(r, n_succ, n_fail), r < config.r_min


def best_point(dataset: Dataset) -> tuple[np.ndarray, float]:
    """Lowest-valued entry; ties go to the first occurrence."""
    if len(dataset) == 0:
        raise ValueError("best_point of an empty dataset")
    i = int(np.argmin(dataset.Y))
    return dataset.X[i].copy(), float(dataset.Y[i])


def derive_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for a (purpose, restart, iteration, ...) key."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


# spawn-key purposes for derive_rng
STREAM_LHS = 0
STREAM_NETWORK = 1
STREAM_CANDIDATES = 2
STREAM_RANDOM_SEARCH = 3
