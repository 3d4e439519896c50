"""The renewal function U of the two-atom walk and its harmonic property.

With steps +-a (a = log 63) the walk is a simple random walk on the lattice
aZ, for which U(ka) = 1 + k.  The check compares E[U(x + X); x + X >= 0]
with U(x) using the estimate's own covariance.
"""
import math

import numpy as np

from lifeperiod import check_harmonic_identity, estimate_U, example2

a = math.log(63)
grid = a * np.arange(6)
u = estimate_U(example2(), grid, n_truncation=100_000, replicas=100_000, seed=11)

print(f"{'x / a':>6} {'U(x)':>10} {'stderr':>9} {'exact':>6}")
for k, (x, val, se) in enumerate(u.rows()):
    print(f"{k:>6} {val:>10.4f} {se:>9.4f} {1 + k:>6}")
print(f"paths still below 0 at the truncation: {u.active_at_truncation:.2e}  flagged: {u.truncation_flagged}")

for c in check_harmonic_identity(example2(), u, grid[:5]):
    print(f"x = {c.x / a:.0f}a: lhs {c.lhs:.4f}  U {c.u:.4f}  z {c.discrepancy / c.stderr:+.2f}  pass {c.passed}")
