# Fluctuation side of the picture: the ladder probabilities P(L_n >= 0),
# P(L~_n >= 0) and the Spitzer fraction P(S_n > 0), which all hinge on rho.
import numpy as np

from lifeperiod import StableParams, fit_exponent, ladder_probability, rho_from_stable, spitzer_rho_empirical, stable_preset

REPLICAS = 100_000
grid = np.unique(np.geomspace(100, 5_000, 20).astype(int))

for alpha, beta in ((2.0, 0.0), (1.5, 1.0)):
    model = stable_preset(alpha, beta)
    rho = rho_from_stable(StableParams(alpha, beta))
    plain = ladder_probability(model, grid, REPLICAS, seed=7)
    refl = ladder_probability(model, grid, REPLICAS, seed=7, reflected=True)
    a = fit_exponent(grid, plain.estimate, plain.stderr)
    b = fit_exponent(grid, refl.estimate, refl.stderr)
    frac = spitzer_rho_empirical(model, [1000], REPLICAS, seed=7)
    print(f"alpha={alpha}, beta={beta}: rho = {rho:.4f}")
    print(f"  P(S_1000 > 0)       = {frac.estimate[0]:.4f} +/- {frac.stderr[0]:.4f}")
    print(f"  P(L_n >= 0)  slope  = {a.slope:+.3f}   (-(1 - rho) = {rho - 1:+.3f})")
    print(f"  P(L~_n >= 0) slope  = {b.slope:+.3f}   (-rho       = {-rho:+.3f})")
