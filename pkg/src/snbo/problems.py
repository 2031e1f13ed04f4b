"""Analytical test functions and a line-protocol adapter for external blackboxes."""

from __future__ import annotations

import math
import queue
import shlex
import subprocess
import threading
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import Bounds


class ObjectiveError(RuntimeError):
    """An objective evaluation failed; the run cannot continue."""


class NonFiniteObjectiveError(ObjectiveError):
    pass


class ExternalTimeoutError(ObjectiveError):
    pass


class ExternalProtocolError(ObjectiveError):
    pass


class ExternalExitError(ObjectiveError):
    pass


def ackley(x, a: float = 20.0, b: float = 0.2, c: float = 2.0 * math.pi):
    x = np.asarray(x, dtype=float)
    return (
        -a * np.exp(-b * np.sqrt(np.mean(x * x, axis=-1)))
        - np.exp(np.mean(np.cos(c * x), axis=-1))
        + a
        + math.e
    )


def rastrigin(x):
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    return 10.0 * n + np.sum(x * x - 10.0 * np.cos(2.0 * math.pi * x), axis=-1)


def levy(x):
    x = np.asarray(x, dtype=float)
    w = 1.0 + (x - 1.0) / 4.0
    first = np.sin(math.pi * w[..., 0]) ** 2
    wi = w[..., :-1]
    middle = np.sum((wi - 1.0) ** 2 * (1.0 + 10.0 * np.sin(math.pi * wi + 1.0) ** 2), axis=-1)
    wn = w[..., -1]
    last = (wn - 1.0) ** 2 * (1.0 + np.sin(2.0 * math.pi * wn) ** 2)
    return first + middle + last


@dataclass
class Objective:
    evaluate: Callable[[np.ndarray], float]
    bounds: Bounds
    name: str = "objective"


@dataclass
class AnalyticalProblem:
    name: str
    n_dims: int
    bounds: Bounds
    function: Callable
    global_minimum: tuple

    def __call__(self, x) -> float:
        return float(self.function(x))

    def objective(self) -> Objective:
        return Objective(self, self.bounds, f"{self.name}_{self.n_dims}d")


# name -> (function, half-width of the symmetric box, minimizer coordinate)
_ANALYTICAL = {
    "ackley": (ackley, 32.768, 0.0),
    "rastrigin": (rastrigin, 5.12, 0.0),
    "levy": (levy, 10.0, 1.0),
}

PROBLEM_NAMES = tuple(_ANALYTICAL)


def make_problem(name: str, n_dims: int) -> AnalyticalProblem:
    try:
        fn, half, xstar = _ANALYTICAL[name.lower()]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; known: {', '.join(_ANALYTICAL)}") from None
    if n_dims < 1:
        raise ValueError(f"n_dims must be positive, got {n_dims}")
    bounds = Bounds.uniform(-half, half, n_dims)
    return AnalyticalProblem(name.lower(), n_dims, bounds, fn, (np.full(n_dims, xstar), 0.0))


class ExternalObjective:
    """Objective served by a child process over stdin/stdout.

    Each request is one line of space-separated coordinates (original
    units, 17 significant digits, LF-terminated); the child answers with
    one line holding a single decimal number. The child is spawned lazily
    and reused for every evaluation until :meth:`close`.
    """

    def __init__(self, command, bounds: Bounds, timeout: float = 60.0, name: str | None = None):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.bounds = bounds
        self.timeout = timeout
        self.name = name or "external"
        self._proc = None
        self._lines: queue.Queue | None = None

    def _start(self):
        self._proc = subprocess.Popen(
            self.command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )
        self._lines = queue.Queue()
        threading.Thread(target=self._pump, args=(self._proc.stdout, self._lines), daemon=True).start()

    @staticmethod
    def _pump(stream, lines):
        for line in stream:
            lines.put(line)
        lines.put(None)

    def evaluate(self, x) -> float:
        return evaluate_external(self, x)

    __call__ = evaluate

    def close(self):
        if self._proc is None:
            return
        proc, self._proc = self._proc, None
        try:
            proc.stdin.close()
        except OSError:
            pass
        try:
            proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def format_request(x) -> str:
    return " ".join(format(float(v), ".17g") for v in np.asarray(x).reshape(-1)) + "\n"


def evaluate_external(obj: ExternalObjective, x) -> float:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != obj.bounds.n_dims:
        raise ValueError(f"point has {x.size} dims, objective expects {obj.bounds.n_dims}")
    if np.any(x < obj.bounds.lower) or np.any(x > obj.bounds.upper):
        raise ValueError("point lies outside the objective bounds")
    if obj._proc is None:
        try:
            obj._start()
        except OSError as e:
            raise ExternalExitError(f"cannot start {obj.command!r}: {e}") from e

    try:
        obj._proc.stdin.write(format_request(x))
        obj._proc.stdin.flush()
    except (BrokenPipeError, OSError) as e:
        code = obj._proc.poll()
        obj.close()
        raise ExternalExitError(f"child {obj.command!r} is gone (exit code {code})") from e

    try:
        line = obj._lines.get(timeout=obj.timeout)
    except queue.Empty:
        obj._proc.kill()
        obj.close()
        raise ExternalTimeoutError(f"no response from {obj.command!r} within {obj.timeout} s") from None
    if line is None:
        code = obj._proc.wait()
        obj._proc = None
        raise ExternalExitError(f"child {obj.command!r} exited with code {code} before answering")

    try:
        value = float(line.strip())
    except ValueError:
        raise ExternalProtocolError(f"cannot parse response {line!r} from {obj.command!r}") from None
    if not math.isfinite(value):
        raise NonFiniteObjectiveError(f"child {obj.command!r} returned non-finite value {line.strip()!r}")
    return value
