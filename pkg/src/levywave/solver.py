"""Pathwise solution of the mild wave equation driven by compound Poisson noise.

For a finite-activity jump measure with zero mean jump the compensator of
the noise integral vanishes, and the mild equation reduces to the causal sum

    u(t, x) = 1 + sum_{j : |x - y_j| < t - s_j} 1/2 z_j sigma(u(s_j, y_j)),

which is solved exactly in one forward pass over the time-sorted jumps.
:func:`picard_solve` handles a nonzero mean jump by iterating on a grid,
where the compensator integral is computed by exact cell quadrature.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numba import njit
from scipy import interpolate, signal

from .errors import (
    NonCenteredMeasure,
    NonContractionWarning,
    NonConvergedWarning,
)
from .skeleton import JumpSkeleton, SpaceTimeWindow

# codes understood by the compiled kernels; PYTHON falls back to numpy loops
AFFINE, HALF_SIN, TABLE, PYTHON = 0, 1, 2, -1


@dataclass(frozen=True)
class Nonlinearity:
    """Lipschitz coefficient sigma with a user-asserted Lipschitz constant.

    Use the builtin constructors where possible; they run in compiled code
    and can be shipped to worker processes.  An arbitrary vectorized
    callable is accepted through :meth:`from_callable` but is much slower.
    """

    name: str
    lip: float
    code: int = PYTHON
    p0: float = 0.0
    p1: float = 0.0
    xp: np.ndarray = field(default_factory=lambda: np.zeros(1), repr=False, compare=False)
    fp: np.ndarray = field(default_factory=lambda: np.zeros(1), repr=False, compare=False)
    fn: Callable | None = field(default=None, repr=False, compare=False)

    def evaluate(self, u):
        u = np.asarray(u, dtype=float)
        if self.code == AFFINE:
            return self.p0 * u + self.p1
        if self.code == HALF_SIN:
            return 1.0 + 0.5 * np.sin(u)
        if self.code == TABLE:
            return np.interp(u, self.xp, self.fp)
        return np.asarray(self.fn(u), dtype=float)

    __call__ = evaluate

    @property
    def value_at_one(self) -> float:
        return float(self.evaluate(np.array([1.0]))[0])

    @property
    def is_constant(self) -> bool:
        return self.code == AFFINE and self.p0 == 0.0

    @classmethod
    def affine(cls, a: float, b: float, name: str | None = None) -> "Nonlinearity":
        a, b = float(a), float(b)
        return cls(name or f"affine({a:g},{b:g})", abs(a), AFFINE, a, b)

    @classmethod
    def constant(cls, c: float) -> "Nonlinearity":
        return cls.affine(0.0, c, name=f"constant({float(c):g})")

    @classmethod
    def identity(cls) -> "Nonlinearity":
        return cls.affine(1.0, 0.0, name="identity")

    @classmethod
    def one_plus_half_sin(cls) -> "Nonlinearity":
        return cls("one_plus_half_sin", 0.5, HALF_SIN)

    @classmethod
    def table(cls, xs: Sequence[float], ys: Sequence[float], lip: float | None = None):
        """Piecewise-linear interpolation of ``(xs, ys)``, constant beyond the ends."""
        xp = np.asarray(xs, dtype=float)
        fp = np.asarray(ys, dtype=float)
        if xp.ndim != 1 or xp.shape != fp.shape or xp.size < 2:
            raise ValueError("table needs two equal-length 1-D sequences, at least 2 points")
        if np.any(np.diff(xp) <= 0):
            raise ValueError("table abscissae must be strictly increasing")
        slope = float(np.max(np.abs(np.diff(fp) / np.diff(xp))))
        if lip is None:
            lip = slope
        elif lip < slope - 1e-12:
            raise ValueError(f"declared Lipschitz constant {lip} < table slope {slope}")
        xp.setflags(write=False)
        fp.setflags(write=False)
        return cls(f"table[{xp.size}]", float(lip), TABLE, xp=xp, fp=fp)

    @classmethod
    def from_callable(cls, fn, lip: float, name: str = "custom") -> "Nonlinearity":
        return cls(name, float(lip), PYTHON, fn=fn)

    def to_config(self) -> dict:
        if self.code == AFFINE and self.p0 == 0.0:
            return {"kind": "constant", "c": self.p1}
        if self.name == "identity":
            return {"kind": "identity"}
        if self.code == AFFINE:
            return {"kind": "affine", "a": self.p0, "b": self.p1}
        if self.code == HALF_SIN:
            return {"kind": "one_plus_half_sin"}
        if self.code == TABLE:
            return {"kind": "table", "x": self.xp.tolist(), "y": self.fp.tolist(),
                    "lip": self.lip}
        raise ValueError("callable nonlinearities have no config form")

    @classmethod
    def from_config(cls, cfg) -> "Nonlinearity":
        cfg = dict(cfg)
        kind = cfg.pop("kind", None)
        if kind == "constant":
            out = cls.constant(cfg.pop("c"))
        elif kind == "identity":
            out = cls.identity()
        elif kind == "affine":
            out = cls.affine(cfg.pop("a"), cfg.pop("b"))
        elif kind == "one_plus_half_sin":
            out = cls.one_plus_half_sin()
        elif kind == "table":
            out = cls.table(cfg.pop("x"), cfg.pop("y"), cfg.pop("lip", None))
        else:
            raise ValueError(f"unknown sigma kind {kind!r}")
        if cfg:
            raise ValueError(f"unexpected sigma fields {sorted(cfg)}")
        return out


@njit(cache=True)
def _sigma_scalar(u, code, p0, p1, xp, fp):
    if code == 0:
        return p0 * u + p1
    if code == 1:
        return 1.0 + 0.5 * math.sin(u)
    return np.interp(u, xp, fp)


@njit(cache=True)
def _solve_jit(s, y, z, code, p0, p1, xp, fp):
    n = s.size
    u = np.empty(n)
    w = np.empty(n)
    for i in range(n):
        acc = 0.0
        si = s[i]
        yi = y[i]
        for j in range(i):
            # strict: equal times or points on the cone edge do not interact
            if abs(yi - y[j]) < si - s[j]:
                acc += w[j]
        u[i] = 1.0 + acc
        w[i] = 0.5 * z[i] * _sigma_scalar(u[i], code, p0, p1, xp, fp)
    return u, w


@njit(cache=True)
def _eval_jit(tq, xq, s, y, w):
    out = np.empty(tq.size)
    for q in range(tq.size):
        acc = 0.0
        for j in range(s.size):
            if abs(xq[q] - y[j]) < tq[q] - s[j]:
                acc += w[j]
        out[q] = 1.0 + acc
    return out


def _solve_python(s, y, z, sigma):
    n = s.size
    u = np.empty(n)
    w = np.empty(n)
    for i in range(n):
        inside = np.abs(y[i] - y[:i]) < s[i] - s[:i]
        acc = 0.0
        for v in w[:i][inside]:
            acc += v
        u[i] = 1.0 + acc
        w[i] = 0.5 * z[i] * float(sigma.evaluate(np.array([u[i]]))[0])
    return u, w


@dataclass(frozen=True)
class SolutionAtJumps:
    """Exact solution values ``u_i = u(s_i, y_i)`` along a skeleton.

    ``weights[i] = z_i sigma(u_i) / 2`` is the jump's contribution to every
    point strictly inside its forward cone.
    """

    skeleton: JumpSkeleton
    sigma: Nonlinearity
    values: np.ndarray
    weights: np.ndarray

    def __call__(self, t, x):
        return eval_at(t, x, self.skeleton, self)


def _check_centered(measure_or_mean) -> None:
    if measure_or_mean is None:
        return
    mean = getattr(measure_or_mean, "mean_jump", measure_or_mean)
    if mean != 0.0:
        raise NonCenteredMeasure(
            f"mean jump {mean:g} != 0: the exact solver would miss the compensator; "
            "use picard_solve"
        )


def solve_on_skeleton(skeleton: JumpSkeleton, sigma: Nonlinearity, measure=None) -> SolutionAtJumps:
    """Forward pass over the jumps in time order.

    ``measure`` (a LevyMeasureSpec or a mean-jump value) is checked for a
    zero mean jump when given.
    """
    _check_centered(measure)
    s, y, z = skeleton.s, skeleton.y, skeleton.z
    if sigma.code == PYTHON:
        u, w = _solve_python(s, y, z, sigma)
    else:
        u, w = _solve_jit(s, y, z, sigma.code, sigma.p0, sigma.p1, sigma.xp, sigma.fp)
    u.setflags(write=False)
    w.setflags(write=False)
    return SolutionAtJumps(skeleton, sigma, u, w)


def eval_at(t, x, skeleton: JumpSkeleton, solution: SolutionAtJumps, check_window: bool = True):
    """``u(t, x)`` from a solved skeleton; broadcasts over ``t`` and ``x``."""
    t_arr, x_arr = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(x, dtype=float))
    if check_window:
        skeleton.window.require_cone(t_arr, x_arr)
    out = _eval_jit(
        np.ascontiguousarray(t_arr).ravel(),
        np.ascontiguousarray(x_arr).ravel(),
        skeleton.s,
        skeleton.y,
        solution.weights,
    ).reshape(t_arr.shape)
    return out[()] if out.ndim == 0 else out


def fixed_point_residual(solution: SolutionAtJumps) -> float:
    """Max relative mismatch of the recursion right-hand side, in matrix form."""
    sk = solution.skeleton
    cone = np.abs(sk.y[:, None] - sk.y[None, :]) < sk.s[:, None] - sk.s[None, :]
    rhs = 1.0 + cone @ (0.5 * sk.z * solution.sigma(solution.values))
    if rhs.size == 0:
        return 0.0
    return float(np.max(np.abs(rhs - solution.values) / (1.0 + np.abs(solution.values))))


# grid Picard -------------------------------------------------------------


def _cone_cell_weights(K: int, E: int, dt: float, dx: float) -> np.ndarray:
    """``W[d, e + E] = int int_cell G`` for a node ``d`` time cells after the
    cell and ``e`` space cells to its left.

    The overlap length of a cell's spatial extent with the cone section is
    piecewise linear in the time-to-go, with kinks only where the time-to-go
    equals the distance to a cell edge, so the trapezoid rule over those
    kinks is exact.
    """
    d = np.arange(K)[:, None]
    e = np.arange(-E, E + 1)[None, :]
    a0 = np.broadcast_to(np.maximum((d - 0.5) * dt, 0.0), (K, 2 * E + 1))
    a1 = np.broadcast_to((d + 0.5) * dt, (K, 2 * E + 1))
    c0 = (e - 0.5) * dx
    c1 = (e + 0.5) * dx
    c0, c1 = np.broadcast_to(c0, a0.shape), np.broadcast_to(c1, a0.shape)
    knots = np.stack(
        [a0, a1, np.clip(np.abs(c0), a0, a1), np.clip(np.abs(c1), a0, a1)], axis=-1
    )
    knots.sort(axis=-1)
    ell = np.maximum(
        0.0, np.minimum(c1[..., None], knots) - np.maximum(c0[..., None], -knots)
    )
    integral = np.sum(0.5 * (ell[..., 1:] + ell[..., :-1]) * np.diff(knots, axis=-1), axis=-1)
    return 0.5 * integral


@dataclass
class GridSolution:
    """Picard iterate on cell-centred nodes plus its values at the jumps.

    Node values are meaningful only where the node's backward cone stays in
    the window (``valid``); elsewhere the compensator integral is truncated.
    """

    dt: float
    dx: float
    window: SpaceTimeWindow
    t_nodes: np.ndarray
    x_nodes: np.ndarray
    values: np.ndarray
    jump_values: np.ndarray
    drift: np.ndarray
    jump_weights: np.ndarray
    iterations: int
    residuals: list[float]
    converged: bool
    skeleton: JumpSkeleton
    mean_jump: float

    @property
    def valid(self) -> np.ndarray:
        T, X = np.meshgrid(self.t_nodes, self.x_nodes, indexing="ij")
        w = self.window
        return (X - T >= w.x_min - 1e-12) & (X + T <= w.x_max + 1e-12)

    def at(self, t, x):
        """Evaluate the returned iterate at arbitrary points inside the window."""
        t_arr, x_arr = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(x, dtype=float))
        self.window.require_cone(t_arr, x_arr)
        sk = self.skeleton
        flat_t = np.ascontiguousarray(t_arr).ravel()
        flat_x = np.ascontiguousarray(x_arr).ravel()
        out = _eval_jit(flat_t, flat_x, sk.s, sk.y, self.jump_weights)
        if self.mean_jump != 0.0:
            out = out - self.mean_jump * _interp_nodes(self, self.drift, flat_t, flat_x)
        return out.reshape(t_arr.shape)

    def to_csv(self, path) -> None:
        T, X = np.meshgrid(self.t_nodes, self.x_nodes, indexing="ij")
        data = np.column_stack([T.ravel(), X.ravel(), self.values.ravel()])
        np.savetxt(path, data, delimiter=",", header="t,x,u", comments="", fmt="%.17g")


def _interp_nodes(grid, field_, t, x):
    f = interpolate.RegularGridInterpolator(
        (grid.t_nodes, grid.x_nodes), field_, bounds_error=False, fill_value=None
    )
    return f(np.column_stack([t, x]))


def _jump_sum_nodes(t_nodes, x_nodes, s, y, w):
    out = np.zeros((t_nodes.size, x_nodes.size))
    for sj, yj, wj in zip(s, y, w):
        k0 = np.searchsorted(t_nodes, sj, side="right")
        if k0 == t_nodes.size:
            continue
        tt = t_nodes[k0:, None] - sj
        out[k0:] += np.where(np.abs(x_nodes[None, :] - yj) < tt, wj, 0.0)
    return out


def picard_solve(
    window: SpaceTimeWindow,
    dt: float,
    dx: float,
    skeleton: JumpSkeleton,
    sigma: Nonlinearity,
    n_iter: int = 30,
    tol: float = 1e-8,
    mean_jump: float = 0.0,
) -> GridSolution:
    """Picard iteration of the mild equation on a space-time grid.

    The noise integral splits into the jump sum, evaluated at the exact jump
    positions, and the compensator ``-mean_jump * int int G sigma(u_n)``,
    evaluated by exact integration of the kernel over each grid cell with
    ``sigma(u_n)`` constant per cell.  Values at the jumps are tracked
    alongside the nodes, so for ``mean_jump == 0`` the iteration reaches the
    exact jump solution after finitely many steps.
    """
    if n_iter < 1:
        raise ValueError("n_iter must be >= 1")
    if not dt > 0 or not dx > 0:
        raise ValueError("grid steps must be positive")
    K = max(1, int(math.ceil(window.t_max / dt - 1e-9)))
    M = max(1, int(math.ceil((window.x_max - window.x_min) / dx - 1e-9)))
    t_nodes = (np.arange(K) + 0.5) * dt
    x_nodes = window.x_min + (np.arange(M) + 0.5) * dx
    s, y, z = skeleton.s, skeleton.y, skeleton.z

    grid = GridSolution(dt, dx, window, t_nodes, x_nodes, np.ones((K, M)), np.ones(s.size),
                        np.zeros((K, M)), np.zeros(s.size), 0, [], False, skeleton,
                        float(mean_jump))

    if mean_jump != 0.0:
        E = int(math.ceil(K * dt / dx)) + 1
        kernel = _cone_cell_weights(K, E, dt, dx)[:, ::-1]
    cone_jj = np.abs(y[:, None] - y[None, :]) < s[:, None] - s[None, :]

    U = grid.values
    Uj = grid.jump_values
    for it in range(1, n_iter + 1):
        wj = 0.5 * z * sigma(Uj)
        U_new = 1.0 + _jump_sum_nodes(t_nodes, x_nodes, s, y, wj)
        Uj_new = 1.0 + cone_jj @ wj
        if mean_jump != 0.0:
            drift = signal.fftconvolve(sigma(U), kernel)[:K, E:E + M]
            U_new -= mean_jump * drift
            if s.size:
                Uj_new -= mean_jump * _interp_nodes(grid, drift, s, y)
            grid.drift = drift
        res = max(float(np.max(np.abs(U_new - U))),
                  float(np.max(np.abs(Uj_new - Uj), initial=0.0)))
        grid.residuals.append(res)
        grid.jump_weights = wj
        U, Uj = U_new, Uj_new
        grid.iterations = it
        if res < tol:
            grid.converged = True
            break

    grid.values = U
    grid.jump_values = Uj
    # weights consistent with the returned iterate, for evaluation off the grid
    grid.jump_weights = 0.5 * z * sigma(Uj)
    if mean_jump != 0.0:
        grid.drift = signal.fftconvolve(sigma(U), kernel)[:K, E:E + M]

    tail = grid.residuals[-3:]
    if len(tail) == 3 and not (tail[0] >= tail[1] >= tail[2]):
        warnings.warn(f"Picard residuals not contracting: {tail}", NonContractionWarning,
                      stacklevel=2)
    if not grid.converged:
        warnings.warn(
            f"Picard iteration stopped after {n_iter} steps, residual {grid.residuals[-1]:.3g}",
            NonConvergedWarning,
            stacklevel=2,
        )
    return grid
