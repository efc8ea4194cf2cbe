"""Spatial integrals of the solution and the Monte-Carlo experiments built on them.

All multi-R experiments sample one skeleton per replicate on the window
needed for the largest R and reuse it for every R (coupled estimates).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import integrate, special, stats

from .errors import InsufficientSamples
from .kernel import phi, phi_sq_mass
from .levy_measure import LevyMeasureSpec
from .montecarlo import ReplicatePlan, run_replicates
from .skeleton import JumpSkeleton, make_rng, required_window, sample_skeleton, stream_key
from .solver import Nonlinearity, SolutionAtJumps, solve_on_skeleton


class SpatialIntegralSample(NamedTuple):
    t: float
    R: float
    value: float
    replicate_index: int


@dataclass(frozen=True)
class EstimatorReport:
    estimate: float
    std_error: float
    n_replicates: int
    metadata: dict = field(default_factory=dict, compare=False)

    @property
    def ci95(self) -> tuple[float, float]:
        half = 1.96 * self.std_error
        return (self.estimate - half, self.estimate + half)

    def within(self, target: float, n_se: float = 3.0) -> bool:
        return abs(self.estimate - target) <= n_se * self.std_error

    def to_record(self) -> dict:
        lo, hi = self.ci95
        return {
            "estimate": self.estimate,
            "std_error": self.std_error,
            "n": self.n_replicates,
            "ci95_lo": lo,
            "ci95_hi": hi,
            **self.metadata,
        }


@dataclass(frozen=True)
class LimitCovariance:
    t: float
    s: float
    R: float
    K_hat: float
    std_error: float
    n_replicates: int
    metadata: dict = field(default_factory=dict, compare=False)


# single path ---------------------------------------------------------------


def spatial_integral(t, R, skeleton: JumpSkeleton, solution: SolutionAtJumps):
    """``F_R(t) = int_{-R}^{R} (u(t, x) - 1) dx`` for a solved skeleton.

    Exact for zero-mean finite-activity noise: each jump contributes
    ``phi(t, R, s_j, y_j) z_j sigma(u_j)``.  ``R`` may be an array.
    """
    R_arr = np.atleast_1d(np.asarray(R, dtype=float))
    skeleton.window.require_cone([t] * (2 * R_arr.size), np.concatenate([-R_arr, R_arr]))
    w = phi(t, R_arr[:, None], skeleton.s[None, :], skeleton.y[None, :])
    out = w @ (2.0 * solution.weights)
    return float(out[0]) if np.ndim(R) == 0 else out


# helpers -------------------------------------------------------------------


def _need(n, at_least=2):
    if n < at_least:
        raise InsufficientSamples(f"need at least {at_least} replicates, got {n}")


def _variance_report(F: np.ndarray, meta: dict) -> EstimatorReport:
    n = F.size
    var = float(np.var(F, ddof=1))
    m4 = float(np.mean((F - F.mean()) ** 4))
    # Var(s^2) = (mu4 - (n-3)/(n-1) sigma^4) / n
    se2 = (m4 - (n - 3) / (n - 1) * var**2) / n
    return EstimatorReport(var, math.sqrt(max(se2, 0.0)), n, meta)


def _mean_report(x: np.ndarray, meta: dict) -> EstimatorReport:
    n = x.size
    return EstimatorReport(float(np.mean(x)), float(np.std(x, ddof=1) / math.sqrt(n)), n, meta)


def _meta(kind, measure, sigma, n, master_seed, **extra) -> dict:
    return {
        "experiment": kind,
        "measure": measure.name,
        "sigma": sigma.name,
        "n": int(n),
        "master_seed": int(master_seed),
        **extra,
    }


def spatial_integral_samples(t, R, sigma, measure, n, master_seed, workers=None,
                             experiment="samples") -> list[SpatialIntegralSample]:
    plan = ReplicatePlan.build(measure, sigma, master_seed, experiment, times=[t], radii=[R])
    F = run_replicates(plan, n, workers).spatial(t, R)
    return [SpatialIntegralSample(float(t), float(R), float(v), i) for i, v in enumerate(F)]


# Monte-Carlo estimators ----------------------------------------------------


def mc_variance(t, R, sigma: Nonlinearity, measure: LevyMeasureSpec, n: int, master_seed: int,
                workers=None, experiment="variance") -> EstimatorReport:
    """Unbiased sample variance of ``F_R(t)``; SE from the fourth central moment."""
    _need(n)
    plan = ReplicatePlan.build(measure, sigma, master_seed, experiment, times=[t], radii=[R])
    F = run_replicates(plan, n, workers).spatial(t, R)
    return _variance_report(F, _meta(experiment, measure, sigma, n, master_seed, t=t, R=R,
                                     mean_F=float(F.mean()),
                                     mean_F_se=float(F.std(ddof=1) / math.sqrt(n))))


def variance_ratio(F_small: np.ndarray, F_large: np.ndarray) -> tuple[float, float]:
    """``var(F_large) / var(F_small)`` with a delta-method SE for coupled samples."""
    n = F_small.size
    a = (F_small - F_small.mean()) ** 2
    b = (F_large - F_large.mean()) ** 2
    va, vb = a.mean() * n / (n - 1), b.mean() * n / (n - 1)
    ratio = vb / va
    cov = np.cov(np.vstack([a, b]), ddof=1) / n
    grad = np.array([-vb / va**2, 1.0 / va])
    se = math.sqrt(max(grad @ cov @ grad, 0.0))
    return float(ratio), se


def mc_variance_scaling(t, R_grid, sigma, measure, n, master_seed, workers=None,
                        experiment="variance_scaling"):
    """Coupled variances over ``R_grid`` and ratios of consecutive ones.

    Returns ``(reports, ratios)`` with ``ratios[i] = (R_i, R_{i+1}, ratio, se)``.
    """
    _need(n)
    R_grid = [float(r) for r in R_grid]
    plan = ReplicatePlan.build(measure, sigma, master_seed, experiment, times=[t], radii=R_grid)
    res = run_replicates(plan, n, workers)
    reports, ratios = [], []
    for R in R_grid:
        reports.append(_variance_report(res.spatial(t, R),
                                        _meta(experiment, measure, sigma, n, master_seed, t=t, R=R)))
    for R1, R2 in zip(R_grid, R_grid[1:]):
        ratios.append((R1, R2, *variance_ratio(res.spatial(t, R1), res.spatial(t, R2))))
    return reports, ratios


def mc_limit_covariance(t, s, R, sigma, measure, n, master_seed, workers=None,
                        experiment="covariance") -> LimitCovariance:
    """``K_hat(t, s) = mean(F_R(t) F_R(s)) / R`` from one skeleton per replicate."""
    _need(n)
    times = sorted({float(t), float(s)})
    plan = ReplicatePlan.build(measure, sigma, master_seed, experiment, times=times, radii=[R])
    res = run_replicates(plan, n, workers)
    prod = res.spatial(t, R) * res.spatial(s, R) / R
    rep = _mean_report(prod, {})
    meta = _meta(experiment, measure, sigma, n, master_seed, t=t, s=s, R=R)
    return LimitCovariance(float(t), float(s), float(R), rep.estimate, rep.std_error, n, meta)


def lln_check(t, R_grid, sigma, measure, n, master_seed, workers=None, experiment="lln"):
    """Estimates of ``E[(F_R(t) / R)^2]`` for each R, as ``[(R, report)]``."""
    _need(n)
    R_grid = [float(r) for r in R_grid]
    if any(b <= a for a, b in zip(R_grid, R_grid[1:])):
        raise ValueError("R_grid must be increasing")
    plan = ReplicatePlan.build(measure, sigma, master_seed, experiment, times=[t], radii=R_grid)
    res = run_replicates(plan, n, workers)
    return [
        (R, _mean_report((res.spatial(t, R) / R) ** 2,
                         _meta(experiment, measure, sigma, n, master_seed, t=t, R=R)))
        for R in R_grid
    ]


# normal approximation ------------------------------------------------------


def empirical_wasserstein(samples: Sequence[float]) -> float:
    """W1 distance between the empirical law of ``samples`` and N(0, 1).

    Quantile coupling of order statistics against ``Phi^{-1}((i - 1/2) / n)``.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    _need(n)
    q = special.ndtri((np.arange(1, n + 1) - 0.5) / n)
    return float(np.mean(np.abs(x - q)))


def self_normalize(F: np.ndarray) -> np.ndarray:
    return F / np.std(F, ddof=1)


def wasserstein_noise_floor(n: int, n_cal: int = 32, seed: int = 0) -> float:
    """Mean W1 of ``n`` self-normalized standard normal draws (calibration run)."""
    rng = make_rng((seed, stream_key("noise_floor"), n))
    return float(np.mean([empirical_wasserstein(self_normalize(rng.standard_normal(n)))
                          for _ in range(n_cal)]))


@dataclass
class CltRateResult:
    R_grid: list[float]
    distances: list[float]
    std_errors: list[float]
    noise_floor: float
    slope: float
    intercept: float
    fit_mask: list[bool]
    noise_floor_reached: bool
    n: int
    metadata: dict = field(default_factory=dict)


def fit_loglog_slope(R_grid, d, floor):
    """Least-squares slope of ``log d`` on ``log R`` over points with ``d > 2 floor``."""
    R = np.asarray(R_grid, dtype=float)
    d = np.asarray(d, dtype=float)
    mask = d > 2.0 * floor
    if mask.sum() < 2:
        return math.nan, math.nan, mask, True
    slope, intercept = np.polyfit(np.log(R[mask]), np.log(d[mask]), 1)
    return float(slope), float(intercept), mask, False


def clt_rate_experiment(t, R_grid, sigma, measure, n, master_seed, workers=None,
                        n_boot: int = 64, experiment="clt", require_m4=True) -> CltRateResult:
    """Self-normalized W1 distance to N(0, 1) for each R, and its log-log slope.

    Bootstrap (``n_boot`` resamples) gives the SE of each distance.
    """
    if n < 2:
        raise InsufficientSamples(f"need at least 2 replicates, got {n}")
    if require_m4:
        from .levy_measure import moment
        moment(measure, 4)  # raises DivergentMoment
    R_grid = [float(r) for r in R_grid]
    plan = ReplicatePlan.build(measure, sigma, master_seed, experiment, times=[t], radii=R_grid)
    res = run_replicates(plan, n, workers)
    floor = wasserstein_noise_floor(n)
    boot_rng = make_rng((master_seed, stream_key(experiment + "/bootstrap")))
    idx = boot_rng.integers(0, n, size=(n_boot, n))
    dists, ses = [], []
    for R in R_grid:
        F = res.spatial(t, R)
        dists.append(empirical_wasserstein(self_normalize(F)))
        boot = [empirical_wasserstein(self_normalize(F[i])) for i in idx]
        ses.append(float(np.std(boot, ddof=1)))
    slope, intercept, mask, degenerate = fit_loglog_slope(R_grid, dists, floor)
    return CltRateResult(R_grid, dists, ses, floor, slope, intercept, mask.tolist(),
                         degenerate, n,
                         _meta(experiment, measure, sigma, n, master_seed, t=t))


# almost sure CLT -----------------------------------------------------------


def _sq_clip4(v):
    return np.minimum(np.asarray(v) ** 2, 4.0)


def _one(v):
    return np.ones_like(np.asarray(v, dtype=float))


TEST_FUNCTIONS: dict[str, Callable] = {"tanh": np.tanh, "sq_clip4": _sq_clip4, "one": _one}
_KINKS = {"sq_clip4": (-2.0, 2.0)}


def gaussian_expectation(test_fn, kinks: Sequence[float] = ()) -> float:
    """``int test_fn dgamma`` for the standard Gaussian, by adaptive quadrature."""
    if isinstance(test_fn, str):
        kinks = _KINKS.get(test_fn, ())
        test_fn = TEST_FUNCTIONS[test_fn]

    def f(z):
        return float(test_fn(np.array([z]))[0]) * math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)

    edges = [-np.inf, *sorted(kinks), np.inf]
    return math.fsum(
        integrate.quad(f, a, b, epsabs=1e-13, epsrel=1e-11, limit=200)[0]
        for a, b in zip(edges, edges[1:])
    )


@dataclass
class AsCltResult:
    log_average: float
    gaussian_expectation: float
    R_nodes: np.ndarray
    normalized: np.ndarray
    sigma_R: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def deviation(self) -> float:
        return abs(self.log_average - self.gaussian_expectation)


def asclt_experiment(t0, R_min, R_max, n_R, sigma, measure, test_fn, master_seed,
                     sigma_R=None, n_aux: int = 200, path_index: int = 0,
                     experiment="asclt", workers=None) -> AsCltResult:
    """Logarithmic average ``1/log(R_max/R_min) int phi(F_y / sigma_y) dy / y`` on one path.

    The y-grid is geometric with ``n_R`` nodes (at least 64 per decade) and
    the integral uses the trapezoid rule in ``log y``.  ``sigma_y`` comes
    from the closed form when sigma is constant, from ``sigma_R`` if
    supplied, or from an auxiliary Monte-Carlo run of ``n_aux`` replicates.
    """
    decades = math.log10(R_max / R_min)
    if n_R < math.ceil(64 * decades):
        raise ValueError(f"need at least {math.ceil(64 * decades)} nodes for {decades:g} decades")
    kinks = ()
    name = getattr(test_fn, "__name__", "custom")
    if isinstance(test_fn, str):
        name, kinks, test_fn = test_fn, _KINKS.get(test_fn, ()), TEST_FUNCTIONS[test_fn]
    ys = np.geomspace(R_min, R_max, n_R)

    if sigma_R is None:
        if sigma.is_constant:
            sigma_R = abs(sigma.p1) * np.sqrt(measure.m2 * np.array([phi_sq_mass(t0, y) for y in ys]))
        else:
            plan = ReplicatePlan.build(measure, sigma, master_seed, experiment + "/aux",
                                       times=[t0], radii=ys)
            sigma_R = np.std(run_replicates(plan, n_aux, workers).F[:, 0, :], axis=0, ddof=1)
    sigma_R = np.asarray(sigma_R, dtype=float)

    window = required_window(t0, R_max)
    sk = sample_skeleton(window, measure, (master_seed, stream_key(experiment), path_index))
    sol = solve_on_skeleton(sk, sigma, measure)
    F = spatial_integral(t0, ys, sk, sol)
    X = F / sigma_R
    vals = np.asarray(test_fn(X), dtype=float)
    log_avg = float(integrate.trapezoid(vals, np.log(ys)) / math.log(R_max / R_min))
    g = gaussian_expectation(test_fn, kinks)
    meta = _meta(experiment, measure, sigma, 1, master_seed, t0=t0, R_min=R_min,
                 R_max=R_max, n_R=n_R, test_fn=name, path_index=path_index)
    return AsCltResult(log_avg, g, ys, X, sigma_R, meta)


def asclt_calibration(t0, R_min, R_max, n_R, sigma, measure, test_fn, master_seed,
                      n_paths: int = 20, experiment="asclt_calibration", **kw):
    """Path-to-path spread of the logarithmic average over ``n_paths`` independent paths."""
    outs = [
        asclt_experiment(t0, R_min, R_max, n_R, sigma, measure, test_fn, master_seed,
                         path_index=k, experiment=experiment, **kw)
        for k in range(n_paths)
    ]
    devs = np.array([o.log_average - o.gaussian_expectation for o in outs])
    return {
        "n_paths": n_paths,
        "mean_deviation": float(devs.mean()),
        "sd": float(devs.std(ddof=1)),
        "max_abs_deviation": float(np.max(np.abs(devs))),
        "deviations": devs.tolist(),
    }


# asymptotic independence ---------------------------------------------------


def first_coordinate(fn):
    def f(U):
        return fn(np.asarray(U)[:, 0])

    f.__name__ = f"{getattr(fn, '__name__', 'f')}_first"
    return f


def sample_covariance(a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    """Unbiased covariance and its SE, from the centered cross products."""
    n = a.size
    p = (a - a.mean()) * (b - b.mean())
    return float(p.sum() / (n - 1)), float(p.std(ddof=1) / math.sqrt(n))


def independence_experiment(t, R_grid, eval_points, f1, f2, sigma, measure, n, master_seed,
                            workers=None, experiment="indep"):
    """``[(R, cov, se)]`` of ``f1(F_R / sigma_hat_R)`` against ``f2(u(t_1, x_1), ...)``.

    ``f2`` maps an ``(n, d)`` array of point values to ``(n,)``.
    """
    _need(n)
    R_grid = [float(r) for r in R_grid]
    plan = ReplicatePlan.build(measure, sigma, master_seed, experiment, times=[t],
                               radii=R_grid, points=eval_points)
    res = run_replicates(plan, n, workers)
    b = np.asarray(f2(res.U), dtype=float).reshape(n)
    out = []
    for R in R_grid:
        a = np.asarray(f1(self_normalize(res.spatial(t, R))), dtype=float)
        out.append((R, *sample_covariance(a, b)))
    return out


def stationarity_samples(t, x_a, x_b, sigma, measure, n, master_seed, workers=None,
                         experiment="stationarity"):
    """Point values ``u(t, x_a)`` and ``u(t, x_b)`` on shared replicates."""
    plan = ReplicatePlan.build(measure, sigma, master_seed, experiment,
                               points=[(t, x_a), (t, x_b)])
    res = run_replicates(plan, n, workers)
    return res.U[:, 0], res.U[:, 1]


def ks_stationarity(t, x_a, x_b, sigma, measure, n, master_seed, workers=None):
    """Two-sample KS p-value for ``u(t, x_a)`` vs ``u(t, x_b)``.

    Meaningful when the two backward cones are disjoint (``|x_a - x_b| >= 2t``),
    since then the samples are independent.
    """
    a, b = stationarity_samples(t, x_a, x_b, sigma, measure, n, master_seed, workers)
    return float(stats.ks_2samp(a, b).pvalue)
