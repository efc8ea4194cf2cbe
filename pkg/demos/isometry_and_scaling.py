"""Variance of the spatial integral: how it starts and how it grows.

With a constant coefficient the solution is deterministic plus one Poisson
integral, so Var F_R(t) is known exactly. With sigma(u) = u it is not, but the
ratio between R and 2R should still approach 2. Both are estimated below from
coupled replicates (one skeleton per replicate, reused across R).
"""
from levywave import Nonlinearity, kernel
from levywave.levy_measure import symmetric_unit_atoms
from levywave.statistics import mc_variance, mc_variance_scaling

SEED = 7
measure = symmetric_unit_atoms()  # jumps of size +-1, each at rate 1

exact = measure.m2 * kernel.phi_sq_mass(1.0, 1.0)
rep = mc_variance(1.0, 1.0, Nonlinearity.constant(1.0), measure, 10_000, SEED)
lo, hi = rep.ci95
print(f"sigma = 1, R = 1: Var F = {rep.estimate:.4f} (95% CI {lo:.4f}..{hi:.4f}), exact {exact:.4f}")

reports, ratios = mc_variance_scaling(1.0, [2.0, 4.0, 8.0, 16.0], Nonlinearity.identity(),
                                      measure, 4000, SEED)
for rep in reports:
    print(f"sigma(u) = u, R = {rep.metadata['R']:>4g}: Var F = {rep.estimate:.3f}")
for R1, R2, ratio, se in ratios:
    print(f"  Var F({R2:g}) / Var F({R1:g}) = {ratio:.3f} +- {se:.3f}")
