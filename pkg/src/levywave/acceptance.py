"""End-to-end acceptance experiments at pinned seeds.

Each criterion returns a :class:`CriterionResult`; :func:`check_suite` runs
them in order and renders the table.  Failures are rows, never exceptions.
"""
from __future__ import annotations

import json
import math
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate, stats

from . import kernel, statistics
from .levy_measure import symmetric_unit_atoms
from .malliavin import add_one_cost, commutation_check
from .skeleton import SpaceTimeWindow, make_rng, sample_skeleton, stream_key
from .solver import Nonlinearity, eval_at, picard_solve, solve_on_skeleton

MASTER_SEED = 20261015


@dataclass
class CriterionResult:
    number: int
    name: str
    expected: str
    observed: str
    tolerance: str
    passed: bool
    runtime: float = 0.0
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (f"[{verdict}] {self.number:2d} {self.name}: observed {self.observed}; "
                f"expected {self.expected} ({self.tolerance}) [{self.runtime:.1f}s]")


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.runtime = time.perf_counter() - t0
        return res

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _unit():
    return symmetric_unit_atoms()


# 1 -------------------------------------------------------------------------


def phi_sq_mass_by_quadrature(t, R, epsabs=1e-12):
    """Adaptive 2-D quadrature of phi^2 over (r, y), splitting at the kinks."""

    def inner(r):
        a = t - r
        pts = sorted({-R - a, -R + a, R - a, R + a})
        f = lambda y: kernel.phi(t, R, r, y) ** 2  # noqa: E731
        return math.fsum(integrate.quad(f, lo, hi, epsabs=epsabs, epsrel=1e-12)[0]
                         for lo, hi in zip(pts, pts[1:]))

    brk = [r for r in (t - R,) if 0 < r < t]
    edges = [0.0, *brk, t]
    return math.fsum(integrate.quad(inner, lo, hi, epsabs=epsabs, epsrel=1e-12)[0]
                     for lo, hi in zip(edges, edges[1:]))


@_timed
def isometry(seed=MASTER_SEED, workers=None):
    q = phi_sq_mass_by_quadrature(1.0, 1.0)
    oracle_ok = abs(q - kernel.phi_sq_mass(1.0, 1.0)) <= 1e-9 and abs(q - 0.5) <= 1e-9
    measure = _unit()
    target = measure.m2 * q
    t0 = time.perf_counter()
    rep = statistics.mc_variance(1.0, 1.0, Nonlinearity.constant(1.0), measure, 10_000, seed,
                                 workers, experiment="acceptance/isometry")
    elapsed = time.perf_counter() - t0
    ok = oracle_ok and rep.within(target, 3.0) and elapsed < 10.0
    return CriterionResult(1, "isometry", f"{target:.6g}", f"{rep.estimate:.4f} ± {rep.std_error:.4f}",
                           "3 SE, quad 1e-9, < 10 s", ok,
                           details={"quadrature": q, "mc_seconds": elapsed})


# 2 -------------------------------------------------------------------------


@_timed
def limit_covariance(seed=MASTER_SEED, workers=None):
    measure = _unit()
    q = integrate.quad(lambda r: (1.0 - r) ** 2, 0.0, 1.0, epsabs=1e-14)[0]
    target = 2.0 * measure.m2 * q
    oracle_ok = abs(target - 4.0 / 3.0) <= 1e-12
    cov = statistics.mc_limit_covariance(1.0, 1.0, 16.0, Nonlinearity.constant(1.0), measure,
                                         10_000, seed, workers,
                                         experiment="acceptance/covariance")
    ok = oracle_ok and abs(cov.K_hat - target) <= 3.0 * cov.std_error
    return CriterionResult(2, "limit covariance", f"{target:.6g}",
                           f"{cov.K_hat:.4f} ± {cov.std_error:.4f}", "3 SE, < 60 s", ok,
                           details={"finite_R_value": float(
                               measure.m2 * kernel.phi_sq_mass(1.0, 16.0) / 16.0)})


# 3 -------------------------------------------------------------------------


@_timed
def variance_scaling(seed=MASTER_SEED, workers=None):
    _, ratios = statistics.mc_variance_scaling(1.0, [8.0, 16.0], Nonlinearity.identity(),
                                               _unit(), 10_000, seed, workers,
                                               experiment="acceptance/variance_scaling")
    _, _, ratio, se = ratios[0]
    return CriterionResult(3, "variance scaling", "2", f"{ratio:.4f} ± {se:.4f}", "3 SE",
                           abs(ratio - 2.0) <= 3.0 * se)


# 4 -------------------------------------------------------------------------


@_timed
def lln(seed=MASTER_SEED, workers=None):
    rows = statistics.lln_check(1.0, [4.0, 16.0, 64.0], Nonlinearity.identity(), _unit(),
                                10_000, seed, workers, experiment="acceptance/lln")
    est = [r.estimate for _, r in rows]
    se = [r.std_error for _, r in rows]
    decreasing = all(b < a for a, b in zip(est, est[1:]))
    bound = 0.25 * est[0] + 3.0 * math.hypot(se[2], 0.25 * se[0])
    ok = decreasing and est[2] < bound
    return CriterionResult(4, "LLN", f"decreasing, R=64 < {bound:.4g}",
                           ", ".join(f"{e:.4g}" for e in est), "strict; 3 SE", ok)


# 5 -------------------------------------------------------------------------


@_timed
def clt_rate(seed=MASTER_SEED, workers=None):
    res = statistics.clt_rate_experiment(1.0, [2.0, 4.0, 8.0, 16.0, 32.0],
                                         Nonlinearity.identity(), _unit(), 10_000, seed,
                                         workers, experiment="acceptance/clt")
    d, se = res.distances, res.std_errors
    monotone = all(d[i + 1] <= d[i] + math.hypot(se[i], se[i + 1]) for i in range(len(d) - 1))
    slope_ok = (not res.noise_floor_reached) and -0.8 <= res.slope <= -0.2
    floor_ok = d[-1] < 2.5 * res.noise_floor
    ok = monotone and slope_ok and floor_ok
    return CriterionResult(
        5, "CLT rate", "slope in [-0.8, -0.2]; d(32) < 2.5 floor",
        f"slope {res.slope:.3f}, d = [{', '.join(f'{v:.4f}' for v in d)}], "
        f"floor {res.noise_floor:.4f}",
        "monotone up to SE, < 5 min", ok,
        details={"distances": d, "std_errors": se, "fit_mask": res.fit_mask})


# 6 -------------------------------------------------------------------------

# boundary probes: dyadic coordinates put the query exactly on the edge of the
# forward cone of xi, where the strict kernel must give zero
_BOUNDARY_PROBES = [
    ((0.25, 0.5, 1.0), (0.75, 1.0)),
    ((0.25, 0.5, -1.0), (0.75, 0.0)),
    ((0.5, -1.0, 1.0), (1.5, 0.0)),
    ((0.125, 0.0, 1.0), (0.625, -0.5)),
]


def commutation_rows(seed=MASTER_SEED, n_skeletons=50, n_xi=20):
    """Residual rows for both nonlinearities: random probes, then boundary probes."""
    measure = _unit()
    window = SpaceTimeWindow(2.0, -5.0, 5.0)
    key = stream_key("acceptance/commutation")
    rows = []
    for sigma in (Nonlinearity.identity(), Nonlinearity.one_plus_half_sin()):
        for i in range(n_skeletons):
            sk = sample_skeleton(window, measure, (seed, key, i))
            rng = make_rng((seed, key, i, 1))
            for _ in range(n_xi):
                r, y = rng.uniform(0.0, 1.0), rng.uniform(-1.0, 1.0)
                z = rng.choice([-1.0, 1.0])
                t = rng.uniform(r, 2.0)
                x = y + rng.uniform(-1.0, 1.0) * (t - r)
                rows.append((sigma.name, commutation_check(sk, (r, y, z), sigma, (t, x))))
            if i < 5:
                for xi, q in _BOUNDARY_PROBES:
                    rows.append((sigma.name, commutation_check(sk, xi, sigma, q)))
    return rows


@_timed
def commutation(seed=MASTER_SEED, workers=None):
    t0 = time.perf_counter()
    rows = commutation_rows(seed)
    elapsed = time.perf_counter() - t0
    rel = max(rec.residual / (1.0 + abs(rec.u)) for _, rec in rows)
    failed = sum(not rec.ok for _, rec in rows)
    ok = failed == 0 and elapsed < 10.0
    return CriterionResult(6, "commutation identity", "max rel residual <= 1e-10",
                           f"{rel:.3g} over {len(rows)} rows, {failed} failed", "< 10 s", ok,
                           details={"rows": len(rows), "failed": failed})


# 7 -------------------------------------------------------------------------


@_timed
def light_cone(seed=MASTER_SEED, workers=None, n=1000):
    measure = _unit()
    window = SpaceTimeWindow(2.0, -5.0, 5.0)
    key = stream_key("acceptance/light_cone")
    sigmas = (Nonlinearity.identity(), Nonlinearity.one_plus_half_sin())
    nonzero = 0
    for i in range(n):
        sk = sample_skeleton(window, measure, (seed, key, i))
        rng = make_rng((seed, key, i, 1))
        r, y = rng.uniform(0.0, 1.5), rng.uniform(-1.0, 1.0)
        z = rng.choice([-1.0, 1.0])
        if i % 2:
            # before or at the time of xi
            t = rng.uniform(0.0, r)
            x = rng.uniform(-3.0 + t, 3.0 - t)
        else:
            # later but outside the cone, possibly on its edge
            t = rng.uniform(r, 2.0)
            gap = t - r
            side = rng.choice([-1.0, 1.0])
            x = y + side * (gap + rng.uniform(0.0, 0.5)) if i % 4 else y + side * gap
            if abs(x) + t > 5.0:
                x = y + side * gap
            # rounding can land an edge query just inside; step out in the solver's arithmetic
            while abs(x - y) < t - r:
                x = np.nextafter(x, side * np.inf)
        field_ = add_one_cost(sk, (r, y, z), sigmas[(i // 2) % 2], [(t, x)])
        nonzero += int(np.count_nonzero(field_.values != 0.0))
    return CriterionResult(7, "light-cone support", "D+ == 0 exactly", f"{nonzero} nonzero of {n}",
                           "bit-exact", nonzero == 0)


# 8 -------------------------------------------------------------------------


@_timed
def stationarity(seed=MASTER_SEED, workers=None):
    p = statistics.ks_stationarity(1.0, 0.0, 5.0, Nonlinearity.identity(), _unit(), 10_000,
                                   seed, workers)
    return CriterionResult(8, "stationarity", "KS p > 0.01", f"p = {p:.4f}", "1%", p > 0.01)


# 9 -------------------------------------------------------------------------


def skeleton_count_stats(seed=MASTER_SEED, n=10_000):
    """Chi-square GOF of jump counts vs Poisson(4) and the covariance of half-window counts."""
    measure = _unit()
    window = SpaceTimeWindow(1.0, -1.0, 1.0)
    key = stream_key("acceptance/skeleton_law")
    counts = np.empty(n, dtype=int)
    left = np.empty(n, dtype=int)
    for i in range(n):
        sk = sample_skeleton(window, measure, (seed, key, i))
        counts[i] = len(sk)
        left[i] = int(np.count_nonzero(sk.y < 0.0))
    right = counts - left
    mean = measure.total_rate * window.area
    pois = stats.poisson(mean)
    # bins 0..k_max-1 and a tail bin, each with expected count >= 5
    k_max = int(pois.isf(5.0 / n))
    while n * pois.sf(k_max - 1) < 5.0:
        k_max -= 1
    observed = np.array([np.count_nonzero(counts == k) for k in range(k_max)]
                        + [np.count_nonzero(counts >= k_max)])
    expected = n * np.append(pois.pmf(np.arange(k_max)), pois.sf(k_max - 1))
    chi = stats.chisquare(observed, expected)
    cov, se = statistics.sample_covariance(left.astype(float), right.astype(float))
    return {"chi2": float(chi.statistic), "p": float(chi.pvalue), "bins": k_max + 1,
            "cov": cov, "cov_se": se, "mean": float(counts.mean()), "expected_mean": mean}


@_timed
def skeleton_law(seed=MASTER_SEED, workers=None):
    s = skeleton_count_stats(seed)
    ok = s["p"] > 0.01 and abs(s["cov"]) <= 4.0 * s["cov_se"]
    return CriterionResult(9, "skeleton law", "chi2 p > 0.01; cov 0 within 4 SE",
                           f"p = {s['p']:.4f}, cov = {s['cov']:.4f} ± {s['cov_se']:.4f}",
                           "1%; 4 SE", ok, details=s)


# 10 ------------------------------------------------------------------------


@_timed
def independence(seed=MASTER_SEED, workers=None):
    f2 = statistics.first_coordinate(np.tanh)
    rows = statistics.independence_experiment(1.0, [4.0, 16.0, 64.0], [(1.0, 0.0)], np.tanh,
                                              f2, Nonlinearity.identity(), _unit(), 20_000,
                                              seed, workers, experiment="acceptance/indep")
    c = [abs(v) for _, v, _ in rows]
    se = [s for _, _, s in rows]
    successive = all(c[i + 1] <= c[i] + math.hypot(se[i], se[i + 1]) for i in range(len(c) - 1))
    bound = 0.5 * c[0] + 3.0 * se[2]
    ok = successive and c[2] < bound
    return CriterionResult(10, "asymptotic independence", f"|cov(64)| < {bound:.4f}",
                           ", ".join(f"{v:.4f}" for v in c), "non-increasing up to SE", ok,
                           details={"cov": c, "se": se})


# 11 ------------------------------------------------------------------------

ASCLT_NOMINAL = {"tanh": 0.10, "sq_clip4": 0.15}
ASCLT_GRID = (1.0, 1000.0, 256)
ASCLT_CAL_PATHS = 20


def asclt_calibrated_tolerances(seed=MASTER_SEED):
    """Tolerance per test function: max(nominal, 3 sd) with sd from the calibration paths."""
    R_min, R_max, n_R = ASCLT_GRID
    out = {}
    for name, nominal in ASCLT_NOMINAL.items():
        cal = statistics.asclt_calibration(1.0, R_min, R_max, n_R, Nonlinearity.constant(1.0),
                                           _unit(), name, seed, n_paths=ASCLT_CAL_PATHS,
                                           experiment="acceptance/asclt_calibration")
        out[name] = {**cal, "nominal": nominal, "tolerance": max(nominal, 3.0 * cal["sd"])}
    return out


@_timed
def asclt(seed=MASTER_SEED, workers=None, calibration=None):
    R_min, R_max, n_R = ASCLT_GRID
    cal = calibration or asclt_calibrated_tolerances(seed)
    parts, ok, details = [], True, {"calibration": cal}
    for name in ASCLT_NOMINAL:
        res = statistics.asclt_experiment(1.0, R_min, R_max, n_R, Nonlinearity.constant(1.0),
                                          _unit(), name, seed, experiment="acceptance/asclt")
        tol = cal[name]["tolerance"]
        # ensemble check: calibration paths are independent of the test path
        ens = abs(cal[name]["mean_deviation"])
        ens_tol = 3.0 * cal[name]["sd"] / math.sqrt(cal[name]["n_paths"])
        ok &= res.deviation <= tol and ens <= ens_tol
        parts.append(f"{name}: |dev| {res.deviation:.3f} <= {tol:.3f}, "
                     f"ensemble {ens:.3f} <= {ens_tol:.3f}")
        details[name] = {"deviation": res.deviation, "tolerance": tol,
                         "ensemble_mean_deviation": ens, "ensemble_tolerance": ens_tol}
    return CriterionResult(11, "ASCLT", "|log avg - E gamma| within calibrated tolerance",
                           "; ".join(parts), "nominal 0.1/0.15 widened to 3 sd", bool(ok),
                           details=details)


# 12 ------------------------------------------------------------------------


@_timed
def picard_agreement(seed=MASTER_SEED, workers=None, n_skeletons=20, step=1.0 / 256):
    measure = _unit()
    window = SpaceTimeWindow(1.0, -2.0, 2.0)
    key = stream_key("acceptance/picard")
    sigma = Nonlinearity.identity()
    worst_jump, worst_node = 0.0, 0.0
    for i in range(n_skeletons):
        sk = sample_skeleton(window, measure, (seed, key, i))
        exact = solve_on_skeleton(sk, sigma)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            grid = picard_solve(window, step, step, sk, sigma, n_iter=len(sk) + 3)
        if len(sk):
            worst_jump = max(worst_jump, float(np.max(np.abs(grid.jump_values - exact.values))))
        T, X = np.meshgrid(grid.t_nodes, grid.x_nodes, indexing="ij")
        ref = eval_at(T[grid.valid], X[grid.valid], sk, exact, check_window=False)
        worst_node = max(worst_node, float(np.max(np.abs(grid.values[grid.valid] - ref),
                                                  initial=0.0)))
    tol = 5.0 * (2 * step)
    return CriterionResult(12, "Picard vs exact", f"sup diff <= {tol:.4g}",
                           f"jumps {worst_jump:.3g}, nodes {worst_node:.3g}",
                           "5 (dt + dx)", worst_jump <= tol,
                           details={"jump_sup": worst_jump, "node_sup": worst_node})


CRITERIA = {
    1: isometry, 2: limit_covariance, 3: variance_scaling, 4: lln, 5: clt_rate,
    6: commutation, 7: light_cone, 8: stationarity, 9: skeleton_law, 10: independence,
    11: asclt, 12: picard_agreement,
}


def render_table(results) -> str:
    head = ("#", "criterion", "expected", "observed", "tolerance", "verdict")
    rows = [(str(r.number), r.name, r.expected, r.observed, r.tolerance,
             "PASS" if r.passed else "FAIL") for r in results]
    widths = [max(len(h), *(len(row[i]) for row in rows)) if rows else len(h)
              for i, h in enumerate(head)]
    fmt = " | ".join(f"{{:{w}}}" for w in widths)
    lines = [fmt.format(*head), "-+-".join("-" * w for w in widths)]
    lines += [fmt.format(*row) for row in rows]
    return "\n".join(lines)


def check_suite(only=None, seed=MASTER_SEED, workers=None, out=None, echo=print):
    """Run the acceptance criteria (all by default) and print the report table.

    With ``out`` set, a manifest holding every result, including the ASCLT
    calibration, is written to ``out/acceptance.json``.
    """
    chosen = sorted(only) if only else sorted(CRITERIA)
    results = []
    for k in chosen:
        try:
            res = CRITERIA[k](seed=seed, workers=workers)
        except Exception as exc:  # a crash is a failed row
            res = CriterionResult(k, CRITERIA[k].__name__, "-", f"error: {exc!r}", "-", False)
        results.append(res)
        if echo:
            echo(res.line())
    if echo:
        echo(render_table(results))
    if out is not None:
        path = Path(out)
        path.mkdir(parents=True, exist_ok=True)
        payload = {"master_seed": seed, "results": [asdict(r) for r in results]}
        (path / "acceptance.json").write_text(json.dumps(payload, indent=2, default=float))
    return results
