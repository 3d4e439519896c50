# d_n against the reflected ladder probability: the ratio should settle to a
# constant theta.  Each n gets its own random streams so that the trend test
# sees independent points.
import numpy as np

from lifeperiod import example2, ladder_probability, mc_series
from lifeperiod.analyze import theta_ratio

REPLICAS = 100_000
grid = np.unique(np.geomspace(100, 1000, 8).astype(int))

d, d_se, p, p_se = [], [], [], []
for n in grid:
    series = mc_series(example2(), int(n), REPLICAS, seed=5, tag=f"d-{n}")
    ladder = ladder_probability(example2(), [n], REPLICAS, seed=5, reflected=True, tag=f"ladder-{n}")
    d.append(series.d[-1])
    d_se.append(series.d_stderr[-1])
    p.append(ladder.estimate[0])
    p_se.append(ladder.stderr[0])

ratio = theta_ratio((grid, d, d_se), (grid, p, p_se), trend_from=100)
for n, r, se in ratio.rows():
    print(f"n = {n:>5}   d_n / P(L~_n >= 0) = {r:.4f} +/- {se:.4f}")
print(f"Mann-Kendall: tau {ratio.trend.tau:+.3f}, p {ratio.trend.p_value:.3f}, trend {ratio.trend.direction}")
