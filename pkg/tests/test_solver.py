import math
import pickle
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levywave.errors import NonCenteredMeasure, NonContractionWarning, NonConvergedWarning
from levywave.levy_measure import LevyMeasureSpec, symmetric_unit_atoms
from levywave.skeleton import JumpSkeleton, SpaceTimeWindow, sample_skeleton
from levywave.solver import (
    Nonlinearity,
    eval_at,
    fixed_point_residual,
    picard_solve,
    solve_on_skeleton,
)
from levywave.statistics import ks_stationarity

W = SpaceTimeWindow(1.0, -3.0, 3.0)
ID = Nonlinearity.identity()


def skel(points, window=W):
    return JumpSkeleton.from_points(window, points)


def test_empty_skeleton():
    sk = skel([])
    sol = solve_on_skeleton(sk, ID)
    assert sol.values.size == 0
    np.testing.assert_array_equal(eval_at([0.5, 1.0], [0.0, 1.5], sk, sol), [1.0, 1.0])


def test_single_jump_excludes_own_atom():
    sk = skel([(0.3, 0.0, 1.0)])
    sol = solve_on_skeleton(sk, ID)
    assert sol.values.tolist() == [1.0]
    assert eval_at(1.0, 0.2, sk, sol) == 1.5
    assert eval_at(1.0, 0.9, sk, sol) == 1.0


def test_two_jump_recursion():
    sk = skel([(0.2, 0.0, 1.0), (0.5, 0.1, -1.0)])
    sol = solve_on_skeleton(sk, ID)
    assert sol.values.tolist() == [1.0, 1.5]
    assert eval_at(1.0, 0.0, sk, sol) == 0.75


def test_cone_edge_and_equal_times_do_not_interact():
    sk = skel([(0.25, 0.0, 1.0), (0.75, 0.5, 1.0), (0.25, 0.1, 1.0)])
    sol = solve_on_skeleton(sk, ID)
    # (0.75, 0.5) sits exactly on the edge of (0.25, 0); (0.25, 0.1) is simultaneous
    assert sol.values.tolist() == [1.0, 1.0, 1.5]


def test_non_centered_measure_refused():
    nu = LevyMeasureSpec.from_atoms([(1.0, 2.0)])
    with pytest.raises(NonCenteredMeasure):
        solve_on_skeleton(skel([]), ID, nu)
    solve_on_skeleton(skel([]), ID, symmetric_unit_atoms())


def test_eval_outside_window_raises():
    from levywave.errors import WindowTooSmall

    sk = skel([])
    with pytest.raises(WindowTooSmall):
        eval_at(1.0, 2.5, sk, solve_on_skeleton(sk, ID))


SIGMAS = [ID, Nonlinearity.one_plus_half_sin(), Nonlinearity.constant(1.3),
          Nonlinearity.affine(-0.5, 2.0), Nonlinearity.table([-1.0, 1.0, 3.0], [0.0, 1.0, 0.5])]


@pytest.mark.parametrize("sigma", SIGMAS, ids=lambda s: s.name)
def test_fixed_point_to_1e12(sigma):
    w = SpaceTimeWindow(2.0, -6.0, 6.0)
    for i in range(20):
        sk = sample_skeleton(w, symmetric_unit_atoms(), (3, i))
        assert fixed_point_residual(solve_on_skeleton(sk, sigma)) <= 1e-12


@pytest.mark.parametrize("sigma", SIGMAS, ids=lambda s: s.name)
def test_compiled_matches_python_fallback(sigma):
    slow = Nonlinearity.from_callable(sigma.evaluate, sigma.lip)
    sk = sample_skeleton(SpaceTimeWindow(2.0, -4.0, 4.0), symmetric_unit_atoms(), 8)
    a = solve_on_skeleton(sk, sigma).values
    b = solve_on_skeleton(sk, slow).values
    np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-13)


def test_single_jump_linear_case_equals_first_iterate():
    for z in (-2.0, 0.5, 3.0):
        sk = skel([(0.1, 0.0, z)])
        sol = solve_on_skeleton(sk, ID)
        assert eval_at(0.9, 0.3, sk, sol) == 1.0 + z / 2.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 1.0), st.floats(-2.0, 2.0),
       st.floats(-3.0, 3.0))
def test_causality_perturbing_a_jump(seed, t, x, dz):
    w = SpaceTimeWindow(1.0, -4.0, 4.0)
    sk = sample_skeleton(w, symmetric_unit_atoms(), seed)
    if len(sk) == 0:
        return
    j = seed % len(sk)
    sj, yj, zj = sk.points[j]
    pts = sk.points
    pts[j] = (sj, yj, zj + dz)
    other = JumpSkeleton.from_points(w, pts)
    x = float(np.clip(x, -4.0 + t, 4.0 - t))
    if abs(x - yj) < t - sj:
        return
    a = eval_at(t, x, sk, solve_on_skeleton(sk, Nonlinearity.one_plus_half_sin()))
    b = eval_at(t, x, other, solve_on_skeleton(other, Nonlinearity.one_plus_half_sin()))
    assert a == b


def test_value_depends_only_on_backward_cone():
    w = SpaceTimeWindow(1.0, -4.0, 4.0)
    sk = sample_skeleton(w, symmetric_unit_atoms(), 12)
    sol = solve_on_skeleton(sk, ID)
    for i, (s, y, _) in enumerate(sk):
        cone = JumpSkeleton.from_points(w, [p for p in sk if abs(y - p[1]) < s - p[0]])
        sub = solve_on_skeleton(cone, ID)
        assert eval_at(s, y, cone, sub, check_window=False) == sol.values[i]


def test_nonlinearity_builtins():
    assert ID.value_at_one == 1.0
    assert Nonlinearity.constant(0.0).value_at_one == 0.0
    assert Nonlinearity.one_plus_half_sin()(0.0) == 1.0
    t = Nonlinearity.table([0.0, 1.0], [0.0, 2.0])
    assert t.lip == 2.0 and t(0.5) == 1.0 and t(5.0) == 2.0
    with pytest.raises(ValueError):
        Nonlinearity.table([0.0, 1.0], [0.0, 2.0], lip=1.0)
    with pytest.raises(ValueError):
        Nonlinearity.table([1.0, 0.0], [0.0, 2.0])


@pytest.mark.parametrize("sigma", SIGMAS, ids=lambda s: s.name)
def test_nonlinearity_config_and_pickle(sigma):
    back = Nonlinearity.from_config(sigma.to_config())
    u = np.linspace(-3, 3, 13)
    np.testing.assert_array_equal(back(u), sigma(u))
    np.testing.assert_array_equal(pickle.loads(pickle.dumps(sigma))(u), sigma(u))


def test_callable_has_no_config():
    with pytest.raises(ValueError):
        Nonlinearity.from_callable(np.tanh, 1.0).to_config()


# grid Picard -------------------------------------------------------------


def test_picard_matches_exact_at_jumps():
    w = SpaceTimeWindow(1.0, -2.0, 2.0)
    step = 1.0 / 256
    for i in range(5):
        sk = sample_skeleton(w, symmetric_unit_atoms(), (44, i))
        exact = solve_on_skeleton(sk, ID)
        grid = picard_solve(w, step, step, sk, ID, n_iter=len(sk) + 3)
        assert grid.converged
        if len(sk):
            assert np.max(np.abs(grid.jump_values - exact.values)) <= 5 * 2 * step
        T, X = np.meshgrid(grid.t_nodes, grid.x_nodes, indexing="ij")
        ref = eval_at(T, X, sk, exact, check_window=False)
        np.testing.assert_allclose(grid.values, ref, atol=1e-12)


def test_picard_sigma_zero_one_iteration():
    w = SpaceTimeWindow(1.0, -2.0, 2.0)
    sk = sample_skeleton(w, symmetric_unit_atoms(), 1)
    grid = picard_solve(w, 0.05, 0.05, sk, Nonlinearity.constant(0.0))
    assert grid.iterations == 1 and grid.converged
    assert np.all(grid.values == 1.0)


def test_picard_empty_skeleton_centered():
    w = SpaceTimeWindow(1.0, -1.0, 1.0)
    grid = picard_solve(w, 0.1, 0.1, skel([], w), ID)
    assert np.all(grid.values == 1.0)
    assert grid.at(0.5, 0.0) == 1.0


def test_picard_constant_sigma_drift_oracle():
    # sigma == 1: u = 1 + jump sum - mu1 * int_0^t int G = jump sum part - mu1 t^2 / 2
    w = SpaceTimeWindow(1.0, -3.0, 3.0)
    sk = skel([(0.2, 0.0, 1.0), (0.4, -0.5, 2.0)], w)
    mu1 = 0.7
    g = picard_solve(w, 1 / 64, 1 / 64, sk, Nonlinearity.constant(1.0), mean_jump=mu1)
    T, X = np.meshgrid(g.t_nodes, g.x_nodes, indexing="ij")
    jumps = eval_at(T, X, sk, solve_on_skeleton(sk, Nonlinearity.constant(1.0)),
                    check_window=False)
    expected = jumps - mu1 * T**2 / 2.0
    v = g.valid
    np.testing.assert_allclose(g.values[v], expected[v], atol=1e-12)
    np.testing.assert_allclose(g.jump_values, [1.0 - mu1 * 0.02, 1.0 - mu1 * 0.08], atol=1e-4)


def test_picard_linear_drift_cosine_oracle():
    # sigma(u) = u without jumps: u_tt = u_xx - mu1 u, flat data gives cos(sqrt(mu1) t)
    w = SpaceTimeWindow(1.0, -3.0, 3.0)
    mu1 = 2.0
    g = picard_solve(w, 1 / 128, 1 / 128, skel([], w), ID, n_iter=60, tol=1e-12,
                     mean_jump=mu1)
    T = np.broadcast_to(g.t_nodes[:, None], g.values.shape)
    v = g.valid
    err = np.max(np.abs(g.values[v] - np.cos(np.sqrt(mu1) * T[v])))
    assert err < 1e-4


def test_picard_grid_refinement_reduces_error():
    w = SpaceTimeWindow(1.0, -3.0, 3.0)
    errs = []
    for h in (1 / 16, 1 / 32, 1 / 64):
        g = picard_solve(w, h, h, skel([], w), ID, n_iter=60, tol=1e-13, mean_jump=2.0)
        T = np.broadcast_to(g.t_nodes[:, None], g.values.shape)
        errs.append(np.max(np.abs(g.values[g.valid] - np.cos(np.sqrt(2.0) * T[g.valid]))))
    assert errs[0] > errs[1] > errs[2]


def test_picard_warns_when_not_converged():
    w = SpaceTimeWindow(1.0, -3.0, 3.0)
    sk = sample_skeleton(w, symmetric_unit_atoms(), 5)
    with pytest.warns(NonConvergedWarning):
        g = picard_solve(w, 0.1, 0.1, sk, ID, n_iter=1)
    assert not g.converged


def test_picard_warns_on_growing_residuals():
    w = SpaceTimeWindow(3.0, -8.0, 8.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonConvergedWarning)
        with pytest.warns(NonContractionWarning):
            picard_solve(w, 0.1, 0.1, skel([], w), Nonlinearity.affine(5.0, 0.0),
                         n_iter=4, mean_jump=-3.0)


def test_picard_rejects_bad_steps():
    with pytest.raises(ValueError):
        picard_solve(W, 0.0, 0.1, skel([]), ID)
    with pytest.raises(ValueError):
        picard_solve(W, 0.1, 0.1, skel([]), ID, n_iter=0)


def test_grid_csv(tmp_path):
    g = picard_solve(SpaceTimeWindow(0.5, -1.0, 1.0), 0.25, 0.5, skel([], SpaceTimeWindow(0.5, -1.0, 1.0)), ID)
    path = tmp_path / "u.csv"
    g.to_csv(path)
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert path.read_text().splitlines()[0] == "t,x,u"
    assert data.shape == (2 * 4, 3)


def test_stationarity_ks():
    p = ks_stationarity(1.0, 0.0, 5.0, ID, symmetric_unit_atoms(), 10_000, 31)
    assert p > 0.01
