"""Initial designs and exploration-set generation around the incumbent.

Exploration points come from two stages: a large pool of sparse uniform
perturbations of the best point, folded back into the unit cube, followed
by a fully sequential space-filling (maximin) selection from that pool.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


@dataclass
class PerturbationSpec:
    x_best: np.ndarray
    r: float
    p: float
    n_cand: int

    def __post_init__(self):
        self.x_best = np.asarray(self.x_best, dtype=float).reshape(-1)
        if self.r < 0:
            raise ValueError(f"perturbation range must be non-negative, got {self.r}")
        if not 0 < self.p <= 1:
            raise ValueError(f"perturbation probability must lie in (0, 1], got {self.p}")
        if self.n_cand < 1:
            raise ValueError(f"n_cand must be positive, got {self.n_cand}")

    @classmethod
    def default(cls, x_best, r: float, n_explore: int, p: float | None = None):
        """Pool size ``1000 n + 2 n_explore`` and ``p = 1/sqrt(n)`` unless given."""
        n = np.asarray(x_best).size
        if p is None:
            p = 1.0 / math.sqrt(n)
        return cls(x_best, r, p, 1000 * n + 2 * n_explore)


@dataclass
class CandidateSet:
    points: np.ndarray
    distance_scores: np.ndarray | None = None


def latin_hypercube(n_samples: int, n_dims: int, seed) -> np.ndarray:
    """Random LHS: one point per stratum in every column, jittered within the stratum."""
    if n_samples < 1:
        raise ValueError(f"n_samples must be positive, got {n_samples}")
    rng = _rng(seed)
    perms = np.column_stack([rng.permutation(n_samples) for _ in range(n_dims)])
    jitter = rng.random((n_samples, n_dims))
    U = (perms + jitter) / n_samples
    # (k + u)/n can round up to (k+1)/n for u just below 1
    return np.minimum(U, np.nextafter((perms + 1) / n_samples, 0.0))


def reflect_into_unit(x) -> np.ndarray:
    """Fold coordinates into ``[0, 1]`` by successive reflection at 0 and 1.

    Repeated reflection is a triangle wave of period 2, so it is computed
    in closed form.
    """
    y = np.mod(np.asarray(x, dtype=float), 2.0)
    return np.where(y > 1.0, 2.0 - y, y)


def boundary_distance(x) -> np.ndarray:
    """Distance from each point to the nearest face of the unit cube."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError("point lies outside the unit hypercube")
    return np.minimum(x, 1.0 - x).min(axis=-1)


def generate_candidates(spec: PerturbationSpec, seed) -> CandidateSet:
    """Sparse uniform perturbations of ``spec.x_best``.

    Each candidate perturbs ``t ~ Binomial(n, p)`` distinct coordinates
    (at least one) by ``U[-r/2, r/2]`` offsets.
    """
    x = spec.x_best
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError("x_best lies outside the unit hypercube")
    rng = _rng(seed)
    n, N = x.size, spec.n_cand

    t = np.maximum(rng.binomial(n, spec.p, size=N), 1)
    # the t smallest of n iid keys index a uniformly random t-subset
    keys = rng.random((N, n))
    kth = np.sort(keys, axis=1)[np.arange(N), t - 1]
    mask = keys <= kth[:, None]
    eps = rng.uniform(-spec.r / 2.0, spec.r / 2.0, size=(N, n))
    eps[~mask] = 0.0

    return CandidateSet(reflect_into_unit(x + eps))


def select_exploration(candidates: CandidateSet, n_explore: int, n_dims: int) -> np.ndarray:
    """Fully sequential space-filling selection from a candidate pool.

    Scores start at ``2 sqrt(2n)`` times the boundary distance; each pick
    takes the highest score (lowest index on ties) and caps every score at
    the Euclidean distance to the picked point.
    """
    C = np.asarray(candidates.points, dtype=float)
    if n_explore > C.shape[0]:
        raise ValueError(f"cannot select {n_explore} points from {C.shape[0]} candidates")
    D = 2.0 * math.sqrt(2.0 * n_dims) * boundary_distance(C)
    chosen = np.empty((n_explore, C.shape[1]))
    for i in range(n_explore):
        j = int(np.argmax(D))
        chosen[i] = C[j]
        diff = C - C[j]
        np.minimum(D, np.sqrt(np.einsum("ij,ij->i", diff, diff)), out=D)
    candidates.distance_scores = D
    return chosen


def generate_exploration_points(
    n_explore: int, r: float, x_best, n_dims: int, seed, p: float | None = None
) -> np.ndarray:
    spec = PerturbationSpec.default(x_best, r, n_explore, p)
    if spec.x_best.size != n_dims:
        raise ValueError(f"x_best has {spec.x_best.size} dims, expected {n_dims}")
    cands = generate_candidates(spec, seed)
    return select_exploration(cands, n_explore, n_dims)
