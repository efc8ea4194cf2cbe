"""Deterministic replicate engine.

Every replicate draws one skeleton from the stream keyed by
``(master_seed, stream, index)``, solves it once, and reports the spatial
integrals for all requested ``(t, R)`` pairs plus point values of ``u``.
Results are assembled in replicate-index order, so they do not depend on
the number of workers or on scheduling.
"""
from __future__ import annotations

import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import TrivialNonlinearityWarning
from .kernel import phi
from .levy_measure import LevyMeasureSpec
from .skeleton import SpaceTimeWindow, sample_skeleton, stream_key
from .solver import PYTHON, Nonlinearity, _check_centered, _eval_jit, solve_on_skeleton


@dataclass(frozen=True)
class ReplicatePlan:
    measure: LevyMeasureSpec
    sigma: Nonlinearity
    window: SpaceTimeWindow
    master_seed: int
    stream: int
    times: tuple[float, ...] = ()
    radii: tuple[float, ...] = ()
    points: tuple[tuple[float, float], ...] = ()

    @classmethod
    def build(cls, measure, sigma, master_seed, experiment, times=(), radii=(), points=(),
              window=None):
        """Plan whose window covers every requested cone."""
        times = tuple(float(t) for t in times)
        radii = tuple(float(r) for r in radii)
        points = tuple((float(t), float(x)) for t, x in points)
        if window is None:
            t_max = max([*times, *(t for t, _ in points), 0.0])
            reach = [r + t for r in radii for t in times]
            reach += [abs(x) + t for t, x in points]
            half = max(reach, default=1.0)
            window = SpaceTimeWindow(t_max, -half, half)
        for t in times:
            for r in radii:
                window.require_cone([t, t], [-r, r])
        for t, x in points:
            window.require_cone(t, x)
        _check_centered(measure)
        if sigma.value_at_one == 0.0:
            warnings.warn(f"sigma(1) = 0 for {sigma.name}: the solution is u == 1",
                          TrivialNonlinearityWarning, stacklevel=3)
        key = experiment if isinstance(experiment, int) else stream_key(str(experiment))
        return cls(measure, sigma, window, int(master_seed), key, times, radii, points)

    def seed(self, index: int) -> tuple[int, int, int]:
        return (self.master_seed, self.stream, int(index))


def run_replicate(plan: ReplicatePlan, index: int):
    """``(F[times, radii], u[points], n_jumps)`` for one replicate."""
    sk = sample_skeleton(plan.window, plan.measure, plan.seed(index))
    sol = solve_on_skeleton(sk, plan.sigma)
    F = np.zeros((len(plan.times), len(plan.radii)))
    if sk.s.size and plan.times and plan.radii:
        t = np.array(plan.times)[:, None, None]
        R = np.array(plan.radii)[None, :, None]
        weights = phi(t, R, sk.s[None, None, :], sk.y[None, None, :])
        # z sigma(u) = 2 * weight
        F = weights @ (2.0 * sol.weights)
    if plan.points:
        pts = np.array(plan.points)
        U = _eval_jit(pts[:, 0].copy(), pts[:, 1].copy(), sk.s, sk.y, sol.weights)
    else:
        U = np.zeros(0)
    return F, U, sk.s.size


def _run_chunk(plan: ReplicatePlan, start: int, stop: int):
    Fs, Us, Js = [], [], []
    for i in range(start, stop):
        F, U, J = run_replicate(plan, i)
        Fs.append(F)
        Us.append(U)
        Js.append(J)
    return np.array(Fs), np.array(Us), np.array(Js)


def default_workers() -> int:
    env = os.environ.get("LEVYWAVE_WORKERS")
    return int(env) if env else 1


@dataclass
class ReplicateResults:
    F: np.ndarray  # (n, len(times), len(radii))
    U: np.ndarray  # (n, len(points))
    n_jumps: np.ndarray
    plan: ReplicatePlan

    @property
    def n(self) -> int:
        return self.F.shape[0]

    def spatial(self, t: float, R: float) -> np.ndarray:
        return self.F[:, self.plan.times.index(float(t)), self.plan.radii.index(float(R))]


def run_replicates(plan: ReplicatePlan, n: int, workers: int | None = None,
                   chunk: int = 500) -> ReplicateResults:
    workers = default_workers() if workers is None else int(workers)
    if n < 0:
        raise ValueError("n must be >= 0")
    bounds = [(a, min(a + chunk, n)) for a in range(0, n, chunk)]
    if workers <= 1 or len(bounds) <= 1:
        parts = [_run_chunk(plan, a, b) for a, b in bounds]
    else:
        if plan.sigma.code == PYTHON:
            raise ValueError("callable sigma cannot be shipped to worker processes")
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_chunk, plan, a, b) for a, b in bounds]
            parts = [f.result() for f in futures]
    shape_F = (0, len(plan.times), len(plan.radii))
    F = np.concatenate([p[0] for p in parts]) if parts else np.zeros(shape_F)
    U = np.concatenate([p[1] for p in parts]) if parts else np.zeros((0, len(plan.points)))
    J = np.concatenate([p[2] for p in parts]) if parts else np.zeros(0, dtype=int)
    return ReplicateResults(F.reshape(n, *shape_F[1:]), U.reshape(n, len(plan.points)), J, plan)
