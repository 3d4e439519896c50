"""Three routes to P(zeta > n) on the two-atom environment, compared exactly.

The renewal recursion and the direct enumeration of 1 - E[N(n; 0)] are run
in rational arithmetic, so agreement here is equality, not closeness.
"""
from fractions import Fraction

from lifeperiod import deterministic_critical, example2
from lifeperiod.renewal import check_series_identity, exact_series

N_MAX = 8

# unit-mean warm-up: every number here can be checked by hand
unit = exact_series(deterministic_critical(), 2).exact
print("unit mean:  d_1 =", unit["d"][1], " H*_0 =", unit["h_star"][0], " H*_1 =", unit["h_star"][1])
print("            R_1 =", unit["r"][0], " R_2 =", unit["r"][1])
assert unit["r"][:2] == [Fraction(3, 4), Fraction(47, 72)]

series = exact_series(example2(), N_MAX)
ex = series.exact
print(f"\nexample2, n <= {N_MAX}")
print(f"{'n':>3} {'R (recursion)':>22} {'R (enumeration)':>22}")
for n in range(1, N_MAX + 1):
    print(f"{n:>3} {float(ex['r'][n - 1]):>22.17f} {float(ex['r_enumeration'][n - 1]):>22.17f}")

print("recursion == enumeration:", ex["r"] == ex["r_enumeration"])
print("forward d == reversed d:  ", ex["d"] == ex["d_backward"])
print("series identity residual: ", check_series_identity(series, N_MAX).max_residual)
