# Offspring totals for large populations: summing w geometric variables
# directly costs O(w); the gamma-Poisson mixture costs O(1) and has the same law.
import math
import time

import numpy as np
from scipy import stats

from lifeperiod.rng import stream
from lifeperiod.simulate import offspring_totals

draws = 50_000
for w in (1, 5, 50):
    for m in (1 / 63, 1.0, 63.0):
        size = np.full(draws, w, dtype=np.int64)
        a, _, _ = offspring_totals(size, math.log(m), stream(1, f"direct-{w}-{m}"), method="direct")
        b, _, _ = offspring_totals(size, math.log(m), stream(1, f"mixture-{w}-{m}"), method="gamma_poisson")
        p = stats.ks_2samp(a, b).pvalue
        print(f"w={w:>3} m={m:8.4f}  mean {a.mean():10.3f} vs {b.mean():10.3f}  (target {w * m:10.3f})  KS p={p:.3f}")

# cost per replica for a large parent count
size = np.full(draws, 10**6, dtype=np.int64)
t0 = time.perf_counter()
offspring_totals(size, 0.0, stream(2), method="gamma_poisson")
print(f"\n{draws} totals for w = 10^6 parents: {time.perf_counter() - t0:.3f} s")

# past 2**53 the rate leaves the integer range; the state moves to logs
t, big, log_rate = offspring_totals(np.array([2**60]), 5.0, stream(3))
print("w = 2^60, m = e^5:  log-domain", bool(big[0]), " log T ~", round(float(log_rate[0]), 3), "vs", round(60 * math.log(2) + 5, 3))
