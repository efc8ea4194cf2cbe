import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levywave.errors import DivergentMoment, EmptyMeasure, InvalidMeasure, StillInfiniteActivity
from levywave.levy_measure import (
    LevyMeasureSpec,
    moment,
    moment_is_finite,
    sample_jump,
    symmetric_unit_atoms,
    truncate,
)
from levywave.skeleton import make_rng


def laguerre_second_moment(scale, order=30):
    # int_0^inf z^2 e^{-z/b} / b dz, by Gauss-Laguerre on u = z / b
    x, w = np.polynomial.laguerre.laggauss(order)
    return float(np.sum(w * (scale * x) ** 2))


def test_unit_atoms_moments():
    nu = symmetric_unit_atoms()
    assert moment(nu, 2) == 2.0
    assert moment(nu, 4) == 2.0
    assert nu.mean_jump == 0.0
    assert nu.total_rate == 2.0


def test_laplace_m2_matches_fixed_grid_oracle():
    nu = LevyMeasureSpec.scaled_density("laplace", 1.0, scale=1.0)
    oracle = laguerre_second_moment(1.0)
    assert oracle == pytest.approx(2.0, abs=1e-12)
    assert moment(nu, 2) == pytest.approx(oracle, abs=1e-8)
    assert nu.total_rate == pytest.approx(1.0, rel=1e-10)


def test_atom_moment_is_an_exact_sum():
    nu = LevyMeasureSpec.from_atoms([(2.0, 0.5), (-0.5, 3.0), (1.5, 1.0)])
    assert moment(nu, 3) == math.fsum([0.5 * 8.0, 3.0 * 0.125, 1.0 * 3.375])
    assert nu.mean_jump == pytest.approx(1.0 - 1.5 + 1.5)


@given(st.lists(st.tuples(st.floats(0.01, 10.0), st.floats(0.01, 10.0), st.booleans()),
                min_size=1, max_size=6),
       st.sampled_from([1.0, 2.0, 3.0, 4.0]))
def test_moment_of_atoms_property(atoms, p):
    pairs = [((z if pos else -z), r) for z, r, pos in atoms]
    nu = LevyMeasureSpec.from_atoms(pairs)
    expected = math.fsum(r * abs(z) ** p for z, r in pairs)
    assert moment(nu, p) == pytest.approx(expected, rel=1e-14)
    assert moment(nu, 2) > 0


def test_moment_order_below_one_rejected():
    with pytest.raises(ValueError):
        moment(symmetric_unit_atoms(), 0.5)


def test_divergent_moment_reported():
    nu = LevyMeasureSpec.truncated_density("power_law", 0.5, c=1.0, alpha=3.0)
    assert moment_is_finite(nu, 2)
    with pytest.raises(DivergentMoment):
        moment(nu, 4)
    assert not moment_is_finite(nu, 4)


def test_power_law_moments_closed_form():
    # 2 c int_eps^inf z^{p-1-a} dz = 2 c eps^{p-a} / (a - p)
    nu = LevyMeasureSpec.truncated_density("power_law", 0.5, c=1.0, alpha=3.0)
    assert moment(nu, 2) == pytest.approx(2.0 * 0.5 ** -1 / 1.0, rel=1e-9)
    assert nu.total_rate == pytest.approx(2.0 * 0.5 ** -3 / 3.0, rel=1e-9)


def test_invalid_measures():
    with pytest.raises(EmptyMeasure):
        LevyMeasureSpec.from_atoms([])
    with pytest.raises(InvalidMeasure):
        LevyMeasureSpec.from_atoms([(0.0, 1.0)])
    with pytest.raises(InvalidMeasure):
        LevyMeasureSpec.from_atoms([(1.0, -1.0)])
    with pytest.raises(InvalidMeasure):
        LevyMeasureSpec.scaled_density("cauchy", 1.0, scale=1.0)
    with pytest.raises(InvalidMeasure):
        LevyMeasureSpec.scaled_density("laplace", 1.0, scale=1.0, shape=2.0)
    with pytest.raises(InvalidMeasure):
        LevyMeasureSpec.truncated_density("tempered_stable", 0.1, c=1.0, alpha=2.5, lam=1.0)


def test_sample_unit_atoms_frequencies():
    z = sample_jump(symmetric_unit_atoms(), make_rng(11), size=100_000)
    assert set(np.unique(z)) == {-1.0, 1.0}
    freq = np.mean(z > 0)
    se = math.sqrt(0.25 / z.size)
    assert abs(freq - 0.5) <= 3 * se


def test_single_atom_always_returned():
    nu = LevyMeasureSpec.from_atoms([(3.0, 2.0)])
    assert np.all(sample_jump(nu, make_rng(0), size=1000) == 3.0)
    assert sample_jump(nu, make_rng(0)) == 3.0
    assert nu.mean_jump == 6.0 and not nu.is_centered


FAMILY_CASES = [
    LevyMeasureSpec.scaled_density("laplace", 1.0, scale=1.0),
    LevyMeasureSpec.scaled_density("normal", 2.0, scale=0.7),
    LevyMeasureSpec.truncated_density("normal", 0.3, rate=1.0, scale=1.0),
    LevyMeasureSpec.truncated_density("tempered_stable", 0.2, c=1.0, alpha=0.5, lam=1.0),
    LevyMeasureSpec.truncated_density("tempered_stable", 0.2, c=1.0, alpha=0.0, lam=2.0),
    LevyMeasureSpec.truncated_density("power_law", 0.5, c=1.0, alpha=5.0),
    LevyMeasureSpec.from_atoms([(2.0, 0.5), (-0.5, 3.0)]),
]


@pytest.mark.parametrize("nu", FAMILY_CASES, ids=lambda m: m.name)
@pytest.mark.parametrize("p", [1, 2])
def test_sampling_matches_normalized_moment(nu, p):
    z = np.abs(sample_jump(nu, make_rng((5, p)), size=100_000)) ** p
    target = moment(nu, p) / nu.total_rate
    se = z.std(ddof=1) / math.sqrt(z.size)
    assert abs(z.mean() - target) <= 4 * se


@pytest.mark.parametrize("nu", FAMILY_CASES[:-1], ids=lambda m: m.name)
def test_density_samples_symmetric_and_above_cutoff(nu):
    z = sample_jump(nu, make_rng(3), size=20_000)
    assert np.all(np.abs(z) >= nu.truncation_eps)
    assert abs(np.mean(z > 0) - 0.5) <= 4 * math.sqrt(0.25 / z.size)


def test_infinite_activity_cannot_be_sampled():
    nu = LevyMeasureSpec.truncated_density("tempered_stable", 0.0, c=1.0, alpha=0.5, lam=1.0)
    assert not nu.finite_activity
    with pytest.raises(StillInfiniteActivity):
        sample_jump(nu, make_rng(0))


def test_truncate_finite_atoms_keeps_spec():
    nu = symmetric_unit_atoms()
    out, dropped = truncate(nu, 1e-6)
    assert out is nu and dropped == 0.0


def test_truncate_drops_small_atoms():
    nu = LevyMeasureSpec.from_atoms([(0.1, 4.0), (1.0, 1.0), (-1.0, 1.0)])
    out, dropped = truncate(nu, 0.5)
    assert out.atoms == ((1.0, 1.0), (-1.0, 1.0))
    assert dropped == pytest.approx(0.04)


def test_truncate_everything_is_empty():
    with pytest.raises(EmptyMeasure):
        truncate(symmetric_unit_atoms(), 2.0)


def test_truncate_density_discarded_variance_oracle():
    # tempered stable, alpha = 1/2: substitute z = eps u^2 so the Gauss-Legendre
    # integrand 4 c eps^{3/2} u^2 exp(-lam eps u^2) is smooth on [0, 1]
    c, lam, eps = 1.0, 1.0, 0.3
    nu = LevyMeasureSpec.truncated_density("tempered_stable", 0.0, c=c, alpha=0.5, lam=lam)
    out, dropped = truncate(nu, eps)
    x, w = np.polynomial.legendre.leggauss(40)
    u = 0.5 * (x + 1.0)
    half = 0.5 * np.sum(w * 2.0 * c * eps**1.5 * u**2 * np.exp(-lam * eps * u**2))
    oracle = 2.0 * half
    assert dropped == pytest.approx(oracle, abs=1e-8)
    assert out.finite_activity and out.truncation_eps == eps
    assert out.m2 + dropped == pytest.approx(nu.m2, rel=1e-8)


def test_truncate_density_no_op_below_existing_cutoff():
    nu = LevyMeasureSpec.truncated_density("power_law", 0.5, c=1.0, alpha=3.0)
    out, dropped = truncate(nu, 0.1)
    assert out == nu and dropped == 0.0


def test_truncate_rejects_nonpositive_eps():
    with pytest.raises(ValueError):
        truncate(symmetric_unit_atoms(), 0.0)


@settings(max_examples=30)
@given(st.sampled_from(FAMILY_CASES))
def test_config_round_trip(nu):
    back = LevyMeasureSpec.from_config(nu.to_config())
    assert back == nu
    assert back.m2 == nu.m2
