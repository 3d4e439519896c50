"""Life-period tail on the two-atom environment and its log-log slope.

The walk is symmetric with finite variance, so rho = 1/2 and the tail should
decay like n^(-1/2) up to a slowly varying factor.  The local slopes show how
far the fit is from its asymptotic value over each dyadic window.
"""
import warnings

import numpy as np

from lifeperiod import estimate_tail, example2, fit_exponent

REPLICAS = 100_000
grid = np.unique(np.geomspace(100, 10_000, 25).astype(int))

with warnings.catch_warnings(record=True) as caught:
    warnings.simplefilter("always")
    tail = estimate_tail(example2(), grid, REPLICAS, seed=2024)
for w in caught:
    print("warning:", w.message)

fit = fit_exponent(grid, tail.survival, tail.stderr)
print(f"slope {fit.slope:.4f} +/- {fit.slope_stderr:.4f}   (theory -0.5)")
print(f"drift flag {fit.drift_flag} (p = {fit.drift_pvalue:.3f})")
for w in fit.local_slopes:
    print(f"  n in [{w.n_lo:>5}, {w.n_hi:>5}]  local slope {w.slope:+.3f} +/- {w.stderr:.3f}")
print(f"replicas that ever needed the log-domain state: {tail.saturated_fraction[-1]:.2%}")
