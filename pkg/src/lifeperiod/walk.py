"""The associated random walk S_n = X_1 + ... + X_n and its fluctuation functionals.

Monte Carlo estimators here simulate many paths at once in time chunks and
drop paths as soon as they can no longer contribute.  Lattice walks (finite
mixtures whose log-means share a span) are simulated on integer steps so that
ties such as S_n = 0 are decided exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from . import rng as rngmod
from .envmodel import EnvironmentModel, StableParams

CHUNK_CELLS = 1 << 22


@dataclass(frozen=True)
class WalkPath:
    increments: np.ndarray
    prefix_sums: np.ndarray
    running_min: float
    running_max_from_1: float
    argmin_first: int
    reflected: bool = False

    @property
    def n(self) -> int:
        return self.increments.size

    def A(self, n: int) -> float:
        """e^{S_n}."""
        return math.exp(self.prefix_sums[n])

    def B(self, i: int, n: int) -> float:
        """B_{i,n} = sum_{k=i}^n e^{S_k}."""
        return math.fsum(np.exp(self.prefix_sums[i : n + 1]))

    def B_total(self, n: int) -> float:
        return self.B(0, n)

    def reflect(self) -> "WalkPath":
        return path_statistics(-self.increments, reflected=not self.reflected)


def path_statistics(increments, reflected: bool = False) -> WalkPath:
    """Prefix sums, L_n = min(S_0..S_n), M_n = max(S_1..S_n) and the first argmin.

    ``reflected`` only labels the path; pass already negated increments.
    For n = 0, M_0 is -inf (empty maximum).
    """
    x = np.asarray(increments, dtype=float).ravel()
    if not np.all(np.isfinite(x)):
        raise ValueError("increments must be finite")
    s = np.concatenate([[0.0], np.cumsum(x)])
    tau = int(np.argmin(s))  # argmin returns the first occurrence
    return WalkPath(
        increments=x,
        prefix_sums=s,
        running_min=float(s[tau]),
        running_max_from_1=float(s[1:].max()) if x.size else -math.inf,
        argmin_first=tau,
        reflected=reflected,
    )


def rho_from_stable(params: StableParams) -> float:
    """P(S_n > 0) limit for the stable law: 1/2 + arctan(beta tan(pi alpha / 2)) / (pi alpha)."""
    a, b = params.alpha, params.beta
    if a == 1.0:
        return 0.5
    return 0.5 + math.atan(b * math.tan(math.pi * a / 2)) / (math.pi * a)


# ---------------------------------------------------------------------------
# Increment sources
# ---------------------------------------------------------------------------


def increment_source(model: EnvironmentModel, reflected: bool = False):
    """``(span, draw)`` where ``span * draw(rng, shape)`` are increments of S (or -S).

    Lattice models draw integer steps; others draw floats with span 1.
    """
    lat = model.lattice()
    sign = -1 if reflected else 1
    if lat is not None:
        span, steps = lat
        steps = sign * steps

        def draw(rng, shape):
            return steps[model.offspring_index(rng, shape)]

        return span, draw

    def draw(rng, shape):
        return sign * model.sample_log_means(rng, shape)

    return 1.0, draw


def _chunk_len(active: int, remaining: int) -> int:
    return max(1, min(remaining, max(64, CHUNK_CELLS // max(active, 1))))


# ---------------------------------------------------------------------------
# Ladder probabilities and the Spitzer fraction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProbabilityEstimate:
    n: np.ndarray
    estimate: np.ndarray
    stderr: np.ndarray
    replicas: int

    def rows(self):
        return zip(self.n.tolist(), self.estimate.tolist(), self.stderr.tolist(), [self.replicas] * self.n.size)


def _binomial(n_list, hits, replicas) -> ProbabilityEstimate:
    p = hits / replicas
    return ProbabilityEstimate(np.asarray(n_list), p, np.sqrt(p * (1 - p) / replicas), int(replicas))


def _ladder_block(index, size, gen, model, n_max, reflected):
    """Histogram of the first n with S_n < 0 (n_max + 1 means never)."""
    _, draw = increment_source(model, reflected)
    first_neg = np.zeros(n_max + 2, dtype=np.int64)
    s = np.zeros(size, dtype=np.int64 if model.lattice() is not None else float)
    t = 0
    while s.size and t < n_max:
        length = _chunk_len(s.size, n_max - t)
        path = s[:, None] + np.cumsum(draw(gen, (s.size, length)), axis=1)
        below = path < 0
        hit = below.any(axis=1)
        first = np.argmax(below, axis=1)
        np.add.at(first_neg, t + 1 + first[hit], 1)
        s = path[~hit, -1]
        t += length
    first_neg[n_max + 1] += s.size
    return first_neg


def ladder_probability(
    model: EnvironmentModel,
    n_list,
    replicas: int,
    seed: int,
    reflected: bool = False,
    workers: int = 1,
    tag: str | None = None,
) -> ProbabilityEstimate:
    """P(L_n >= 0) for each n (or P(L~_n >= 0) for the reflected walk).

    All n share the same paths, so the estimate is nonincreasing in n.
    ``tag`` selects an independent stream family under the same seed.
    """
    n_list = np.asarray(n_list, dtype=np.int64)
    n_max = int(n_list.max())
    tag = tag or ("ladder-reflected" if reflected else "ladder")
    fn = partial(_ladder_block, model=model, n_max=n_max, reflected=reflected)
    hist = rngmod.merge_sums(rngmod.run_blocks(fn, replicas, seed, tag, workers))
    survivors = replicas - np.cumsum(hist)
    return _binomial(n_list, survivors[n_list].astype(float), replicas)


def _spitzer_block(index, size, gen, model, n_list):
    span, draw = increment_source(model)
    positive = np.zeros(n_list.size, dtype=np.int64)
    s = np.zeros(size, dtype=np.int64 if model.lattice() is not None else float)
    t = 0
    n_max = int(n_list.max())
    while t < n_max:
        length = _chunk_len(size, n_max - t)
        path = s[:, None] + np.cumsum(draw(gen, (size, length)), axis=1)
        for j, n in enumerate(n_list):
            if t < n <= t + length:
                positive[j] += np.count_nonzero(path[:, n - t - 1] > 0)
        s = path[:, -1]
        t += length
    return positive


def spitzer_rho_empirical(model: EnvironmentModel, n_list, replicas: int, seed: int, workers: int = 1) -> ProbabilityEstimate:
    """Monte Carlo P(S_n > 0) for each n, with binomial standard errors."""
    n_list = np.asarray(n_list, dtype=np.int64)
    fn = partial(_spitzer_block, model=model, n_list=n_list)
    hits = rngmod.merge_sums(rngmod.run_blocks(fn, replicas, seed, "spitzer", workers))
    return _binomial(n_list, hits.astype(float), replicas)


# ---------------------------------------------------------------------------
# Renewal function U
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RenewalFunctionEstimate:
    x_grid: np.ndarray
    u_values: np.ndarray
    std_errors: np.ndarray
    n_truncation: int
    replicas: int
    covariance: np.ndarray = field(repr=False)
    active_at_truncation: float = 0.0
    truncation_flagged: bool = False

    def __call__(self, x):
        """Piecewise-linear interpolation on the grid; 0 for x < 0."""
        x = np.asarray(x, dtype=float)
        return np.where(x < 0, 0.0, np.interp(x, self.x_grid, self.u_values))

    def weights(self, x: float) -> np.ndarray:
        """Interpolation weights so that U(x) = weights(x) @ u_values."""
        w = np.zeros(self.x_grid.size)
        if x < 0:
            return w
        g = self.x_grid
        j = int(np.searchsorted(g, x, side="right")) - 1
        if j < 0:
            raise ValueError(f"x = {x} below grid")
        if j >= g.size - 1 or math.isclose(x, g[j], rel_tol=0, abs_tol=1e-12):
            if x > g[-1] + 1e-12:
                raise ValueError(f"x = {x} beyond grid")
            w[min(j, g.size - 1)] = 1.0
            return w
        t = (x - g[j]) / (g[j + 1] - g[j])
        w[j], w[j + 1] = 1.0 - t, t
        return w

    def rows(self):
        return zip(self.x_grid.tolist(), self.u_values.tolist(), self.std_errors.tolist())


def _u_block(index, size, gen, model, thresholds, n_trunc, lattice):
    """Per-grid sums of visit counts and their cross products, plus survivors at truncation."""
    _, draw = increment_source(model)
    g = thresholds.size
    counts = np.zeros((size, g), dtype=np.int64)
    ids = np.arange(size)
    s = np.zeros(size, dtype=np.int64 if lattice else float)
    t = 0
    while ids.size and t < n_trunc:
        length = _chunk_len(ids.size, n_trunc - t)
        path = s[:, None] + np.cumsum(draw(gen, (ids.size, length)), axis=1)
        alive = np.maximum.accumulate(path, axis=1) < 0
        for k in range(g):
            counts[ids, k] += np.count_nonzero(alive & (path >= thresholds[k]), axis=1)
        keep = alive[:, -1]
        ids, s = ids[keep], path[keep, -1]
        t += length
    return np.concatenate([[ids.size], counts.sum(axis=0), (counts.T @ counts).ravel()])


def estimate_U(
    model: EnvironmentModel,
    x_grid,
    n_truncation: int = 10_000,
    replicas: int = 100_000,
    seed: int | None = None,
    workers: int = 1,
    tail_tolerance: float = 1e-2,
) -> RenewalFunctionEstimate:
    """U(x) = 1{x >= 0} + sum_{n=1}^{N} P(S_n >= -x, M_n < 0) by Monte Carlo.

    Every path is followed until its running maximum reaches 0 or until
    ``n_truncation``.  The fraction of paths still below 0 at the truncation
    is reported; above ``tail_tolerance`` the estimate is flagged.
    """
    x_grid = np.asarray(x_grid, dtype=float)
    if np.any(np.diff(x_grid) <= 0):
        raise ValueError("x_grid must be strictly increasing")
    lat = model.lattice()
    if lat is not None:
        span = lat[0]
        thresholds = -np.floor(np.maximum(x_grid, 0) / span + 1e-9).astype(np.int64)
    else:
        thresholds = -np.maximum(x_grid, 0)
    fn = partial(_u_block, model=model, thresholds=thresholds, n_trunc=int(n_truncation), lattice=lat is not None)
    tot = rngmod.merge_sums(rngmod.run_blocks(fn, replicas, seed, "renewal-U", workers))
    g = x_grid.size
    active = tot[0] / replicas
    mean = tot[1 : g + 1] / replicas
    second = tot[g + 1 :].reshape(g, g) / replicas
    cov = (second - np.outer(mean, mean)) * replicas / (replicas - 1) / replicas if replicas > 1 else np.zeros((g, g))
    nonneg = x_grid >= 0
    u = np.where(nonneg, 1.0 + mean, 0.0)
    mask = np.outer(nonneg, nonneg)
    cov = np.where(mask, cov, 0.0)
    return RenewalFunctionEstimate(
        x_grid=x_grid,
        u_values=u,
        std_errors=np.sqrt(np.diag(cov)),
        n_truncation=int(n_truncation),
        replicas=int(replicas),
        covariance=cov,
        active_at_truncation=float(active),
        truncation_flagged=bool(active > tail_tolerance),
    )


@dataclass(frozen=True)
class HarmonicCheck:
    x: float
    lhs: float
    u: float
    discrepancy: float
    stderr: float
    passed: bool
    coverage_ok: bool


def check_harmonic_identity(
    model: EnvironmentModel,
    u_est: RenewalFunctionEstimate,
    x_grid,
    seed: int | None = None,
    samples: int = 100_000,
    k_sigma: float = 3.0,
) -> list[HarmonicCheck]:
    """Compare E[U(x + X); x + X >= 0] with U(x) at each x.

    For finite mixtures the expectation over X is exact, so the left side is a
    fixed linear combination of grid values and its error follows from the
    estimate's covariance.  Stable models sample ``samples`` draws of X.
    """
    out = []
    if model.stable is None:
        atoms = [(float(w), law.log_mean_x) for w, law in model.offspring_atoms]
        xs_sample = None
    else:
        xs_sample = model.sample_log_means(rngmod.stream(seed, "harmonic"), samples)
    for x in np.asarray(x_grid, dtype=float):
        if x < 0:
            out.append(HarmonicCheck(float(x), 0.0, 0.0, 0.0, 0.0, True, True))
            continue
        try:
            c = -u_est.weights(x)
            extra_var = 0.0
            if xs_sample is None:
                for w, dx in atoms:
                    c = c + w * u_est.weights(_snap(x + dx, u_est.x_grid))
            else:
                vals = u_est(x + xs_sample)
                c = c + np.mean([u_est.weights(v) for v in x + xs_sample], axis=0)
                extra_var = float(np.var(vals, ddof=1)) / samples
            coverage = True
        except ValueError:
            out.append(HarmonicCheck(float(x), math.nan, float(u_est(x)), math.nan, math.nan, False, False))
            continue
        diff = float(c @ u_est.u_values)
        se = math.sqrt(max(float(c @ u_est.covariance @ c) + extra_var, 0.0))
        u = float(u_est(x))
        passed = abs(diff) <= k_sigma * se if se > 0 else abs(diff) <= 1e-12
        out.append(HarmonicCheck(float(x), diff + u, u, diff, se, passed, coverage))
    return out


def _snap(x: float, grid: np.ndarray) -> float:
    """Move x onto a grid point it equals up to rounding (lattice arithmetic)."""
    j = np.argmin(np.abs(grid - x))
    return float(grid[j]) if abs(grid[j] - x) <= 1e-9 * max(1.0, abs(x)) else x
