"""Main SNBO loop and a random-search reference method."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass

import numpy as np

from . import core
from .core import Dataset, RunRecord, SnboConfig, TrustState, best_point, derive_rng
from .problems import NonFiniteObjectiveError, Objective
from .sampling import generate_exploration_points, latin_hypercube
from .surrogate import Architecture, fit_standardizer, init_network, predict, train

log = logging.getLogger(__name__)


@dataclass
class RunResult:
    best_x: np.ndarray
    best_y: float
    record: RunRecord
    n_evals_used: int


def initial_plan(n_init: int, n_dims: int, seed: int, restart: int = 0) -> np.ndarray:
    """LHS plan of a restart. Restart 0 is shared by every method given the same seed."""
    return latin_hypercube(n_init, n_dims, derive_rng(seed, core.STREAM_LHS, restart))


class Evaluator:
    """Counts evaluations and tracks the global best in original units."""

    def __init__(self, objective: Objective):
        self.objective = objective
        self.record = RunRecord()
        self.best_x = None
        self.best_y = math.inf
        self.n_evals = 0

    def __call__(self, U: np.ndarray) -> np.ndarray:
        X = core.unscale_from_unit(U, self.objective.bounds)
        Y = np.empty(len(X))
        for i, x in enumerate(X):
            y = float(self.objective.evaluate(x))
            self.n_evals += 1
            if not math.isfinite(y):
                raise NonFiniteObjectiveError(
                    f"{self.objective.name} returned {y} at evaluation {self.n_evals}"
                )
            self.record.add(y)
            if y < self.best_y:
                self.best_x, self.best_y = x.copy(), y
            Y[i] = y
        return Y

    def mark_restart(self):
        self.record.restarts.append(self.n_evals + 1)

    def result(self, t0: float) -> RunResult:
        self.record.wall_time = time.perf_counter() - t0
        self.record.final_best = (self.best_x, self.best_y)
        return RunResult(self.best_x, self.best_y, self.record, self.n_evals)


def select_infill(network, standardizer, exploration_points, q: int) -> np.ndarray:
    """The ``q`` exploration points with the lowest predicted objective."""
    P = np.asarray(exploration_points, dtype=float)
    if q > len(P):
        raise ValueError(f"need at least q={q} exploration points, got {len(P)}")
    pred = predict(network, standardizer, P)
    order = np.argsort(pred, kind="stable")
    return P[order[:q]]


def run_snbo(objective: Objective, config: SnboConfig) -> RunResult:
    n = config.n_dims
    if objective.bounds.n_dims != n:
        raise ValueError(f"objective has {objective.bounds.n_dims} dims, config says {n}")
    evaluate = Evaluator(objective)
    t0 = time.perf_counter()
    restart = 0
    while evaluate.n_evals < config.n_max:
        if restart:
            evaluate.mark_restart()
        run_restart(evaluate, config, restart)
        restart += 1
    return evaluate.result(t0)


def run_restart(evaluate: Evaluator, config: SnboConfig, restart: int) -> None:
    """One pass of the outer loop: fresh plan, fresh network, fresh trust state.

    Everything random here is drawn from streams keyed by ``(seed, restart)``,
    so a restart never sees state from the ones before it.
    """
    n = config.n_dims
    n_plan = min(config.n_init, config.n_max - evaluate.n_evals)
    U = initial_plan(n_plan, n, config.seed, restart)
    data = Dataset(U, evaluate(U))
    if n_plan < config.n_init:
        return

    state = TrustState(config.r_init)
    arch = Architecture(n, config.hidden_layers)
    net = init_network(arch, derive_rng(config.seed, core.STREAM_NETWORK, restart), config.dtype)
    iteration = 0
    while evaluate.n_evals < config.n_max and state.r >= config.r_min:
        std = fit_standardizer(data)
        report = train(net, data, config.surrogate, std)
        x_best, y_best = best_point(data)
        explore = generate_exploration_points(
            config.n_explore,
            state.r,
            x_best,
            n,
            derive_rng(config.seed, core.STREAM_CANDIDATES, restart, iteration),
            p=config.p_perturb,
        )
        q = min(config.q, config.n_max - evaluate.n_evals)
        U_new = select_infill(net, std, explore, q)
        Y_new = evaluate(U_new)
        state, _ = core.update_trust_state(state, bool(Y_new.min() < y_best), config)
        data.append(U_new, Y_new)
        log.debug(
            "restart %d it %d: evals=%d epochs=%d nrmse=%.2e r=%.4g best=%.6g",
            restart, iteration, evaluate.n_evals, report.epochs_run,
            report.final_nrmse, state.r, evaluate.best_y,
        )
        iteration += 1


def run_random_search(objective: Objective, n_max: int, seed: int, n_init: int | None = None) -> RunResult:
    """Uniform random sampling of the box.

    With ``n_init`` set, the first ``n_init`` evaluations reuse the initial
    LHS plan that :func:`run_snbo` draws for the same seed.
    """
    if n_max < 1:
        raise ValueError(f"n_max must be positive, got {n_max}")
    n = objective.bounds.n_dims
    evaluate = Evaluator(objective)
    t0 = time.perf_counter()
    n_plan = min(n_init or 0, n_max)
    if n_plan:
        evaluate(initial_plan(n_plan, n, seed))
    rest = n_max - n_plan
    if rest:
        U = derive_rng(seed, core.STREAM_RANDOM_SEARCH).random((rest, n))
        evaluate(U)
    return evaluate.result(t0)
