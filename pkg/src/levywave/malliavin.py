"""Add-one-cost probes of the solution.

Inserting one extra atom ``xi = (r, y, z)`` into the skeleton and
re-solving gives ``D+_xi u(t, x) = u^{+xi}(t, x) - u(t, x)`` exactly.  On a
finite skeleton with zero mean jump the derivative satisfies

    D+_xi u(t, x) = G(t - r, x - y) z sigma(u(r, y))
                    + sum_{s_j > r} G(t - s_j, x - y_j) z_j (sigma(u^{+xi}_j) - sigma(u_j)),

which :func:`commutation_check` verifies to floating-point accuracy.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import kernel
from .levy_measure import LevyMeasureSpec, sample_jump
from .skeleton import JumpPoint, JumpSkeleton, SpaceTimeWindow, sample_skeleton, stream_key
from .solver import Nonlinearity, _check_centered, eval_at, solve_on_skeleton

# relative floating-point tolerance of the commutation identity
COMMUTATION_RTOL = 1e-10


@dataclass(frozen=True)
class AddOnePerturbation:
    xi: JumpPoint
    base: JumpSkeleton

    def __post_init__(self):
        r = self.xi[0]
        if not 0.0 <= r <= self.base.window.t_max:
            raise ValueError(f"xi time {r} outside [0, {self.base.window.t_max}]")

    def augmented(self) -> tuple[JumpSkeleton, int]:
        return self.base.insert(self.xi)


@dataclass(frozen=True)
class DerivativeField:
    xi: JumpPoint
    queries: np.ndarray  # (q, 2) rows of (t, x)
    values: np.ndarray  # D+ u at each query
    base: np.ndarray  # u at each query
    plus: np.ndarray  # u^{+xi} at each query


def _as_queries(queries) -> np.ndarray:
    q = np.asarray(queries, dtype=float)
    return q.reshape(-1, 2)


def add_one_cost(skeleton: JumpSkeleton, xi, sigma: Nonlinearity, queries,
                 measure=None, base_solution=None) -> DerivativeField:
    """Difference of ``u`` at each query after inserting ``xi`` into ``skeleton``."""
    _check_centered(measure)
    xi = JumpPoint(*map(float, xi))
    q = _as_queries(queries)
    skeleton.window.require_cone(q[:, 0], q[:, 1])
    pert = AddOnePerturbation(xi, skeleton)
    aug, _ = pert.augmented()
    base_sol = base_solution or solve_on_skeleton(skeleton, sigma)
    aug_sol = solve_on_skeleton(aug, sigma)
    u0 = eval_at(q[:, 0], q[:, 1], skeleton, base_sol, check_window=False)
    u1 = eval_at(q[:, 0], q[:, 1], aug, aug_sol, check_window=False)
    return DerivativeField(xi, q, u1 - u0, u0, u1)


class ProbeRecord(NamedTuple):
    xi: tuple
    query: tuple
    D_plus: float
    rhs_sum: float
    residual: float
    u: float

    @property
    def ok(self) -> bool:
        return self.residual <= COMMUTATION_RTOL * (1.0 + abs(self.u))

    def to_record(self) -> dict:
        return {
            "xi": list(self.xi),
            "query": list(self.query),
            "D_plus": self.D_plus,
            "rhs_sum": self.rhs_sum,
            "residual": self.residual,
            "ok": self.ok,
        }


def commutation_check(skeleton: JumpSkeleton, xi, sigma: Nonlinearity, query,
                      measure=None) -> ProbeRecord:
    """Residual between the add-one cost and the right-hand side of its integral equation."""
    _check_centered(measure)
    r, y, z = map(float, xi)
    t, x = map(float, query)
    skeleton.window.require_cone(t, x)
    base = solve_on_skeleton(skeleton, sigma)
    aug, k = skeleton.insert((r, y, z))
    plus = solve_on_skeleton(aug, sigma)

    D = float(eval_at(t, x, aug, plus, check_window=False)
              - eval_at(t, x, skeleton, base, check_window=False))
    u_xi = float(eval_at(r, y, skeleton, base, check_window=False))
    lead = float(kernel.green(t - r, x - y)) * z * float(sigma(np.array([u_xi]))[0])

    # base jump j sits at augmented index j (before xi) or j + 1 (after)
    idx = np.arange(len(skeleton))
    aug_idx = np.where(idx < k, idx, idx + 1)
    later = skeleton.s > r
    diff_sigma = sigma(plus.values[aug_idx]) - sigma(base.values)
    G = kernel.green(t - skeleton.s, x - skeleton.y)
    correction = float(np.sum(np.where(later, G * skeleton.z * diff_sigma, 0.0)))
    rhs = lead + correction
    u = float(eval_at(t, x, skeleton, base, check_window=False))
    return ProbeRecord((r, y, z), (t, x), D, rhs, abs(D - rhs), u)


@dataclass
class SweepResult:
    max_ratio: float
    points: np.ndarray  # (g, 3) rows (r, y, z)
    norms: np.ndarray  # Monte-Carlo ||D+ u(t, x)||_p per grid point
    ratios: np.ndarray  # norms / (G |z|), zero outside the cone
    p: float
    n: int


def derivative_bound_sweep(t, x, sigma: Nonlinearity, measure: LevyMeasureSpec, n: int,
                           grid: Sequence, p: float = 2, master_seed: int = 0,
                           experiment: str = "derivative_sweep") -> SweepResult:
    """Monte-Carlo ``||D+_{r,y,z} u(t, x)||_p / (G(t - r, x - y) |z|)`` over a grid of atoms.

    Each replicate samples the noise on the backward cone of ``(t, x)`` and
    re-solves once per grid atom.  Atoms outside the cone have ``D+ = 0``
    and ratio 0.
    """
    if p not in (2, 4):
        raise ValueError("p must be 2 or 4")
    _check_centered(measure)
    pts = np.asarray(grid, dtype=float).reshape(-1, 3)
    G = kernel.green(t - pts[:, 0], x - pts[:, 1])
    inside = G > 0
    window = SpaceTimeWindow(float(t), float(x - t), float(x + t))
    key = stream_key(experiment)
    acc = np.zeros(len(pts))
    for i in range(n):
        sk = sample_skeleton(window, measure, (master_seed, key, i))
        base = solve_on_skeleton(sk, sigma)
        u0 = eval_at(t, x, sk, base, check_window=False)
        for g in np.flatnonzero(inside):
            aug, _ = sk.insert(pts[g])
            u1 = eval_at(t, x, aug, solve_on_skeleton(aug, sigma), check_window=False)
            acc[g] += abs(u1 - u0) ** p
    norms = (acc / max(n, 1)) ** (1.0 / p)
    ratios = np.zeros(len(pts))
    ratios[inside] = norms[inside] / (G[inside] * np.abs(pts[inside, 2]))
    return SweepResult(float(ratios.max(initial=0.0)), pts, norms, ratios, p, n)


def light_cone_violations(skeleton: JumpSkeleton, xi, sigma: Nonlinearity, queries) -> int:
    """Number of queries outside the forward cone of ``xi`` where D+ is not exactly 0."""
    r, y, _ = map(float, xi)
    q = _as_queries(queries)
    outside = ~(np.abs(q[:, 1] - y) < q[:, 0] - r)
    if not outside.any():
        return 0
    field = add_one_cost(skeleton, xi, sigma, q[outside])
    return int(np.count_nonzero(field.values != 0.0))


def random_probe(rng: np.random.Generator, window: SpaceTimeWindow, measure: LevyMeasureSpec):
    """A random atom in the window, with a jump size drawn from the measure."""
    r = rng.uniform(0.0, window.t_max)
    y = rng.uniform(window.x_min, window.x_max)
    return JumpPoint(r, y, float(sample_jump(measure, rng)))
