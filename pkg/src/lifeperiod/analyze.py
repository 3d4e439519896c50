"""Asymptotic diagnostics: power-law exponent fits, trend tests, the d_n / ladder ratio
and the Tauberian check of the generating function D(s) = sum d_n s^n.

Slowly varying factors are never estimated.  Every fit reports local slopes
on dyadic windows so a drifting exponent is visible rather than averaged away.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial

import numpy as np
from scipy import stats

from . import rng as rngmod
from .envmodel import EnvironmentModel
from .walk import increment_source, ladder_probability

DYADIC_START = 16
DRIFT_LEVEL = 0.05
DRIFT_FLOOR = 1e-8


class InsufficientSeries(ValueError):
    """The input series is too short for the requested diagnostic."""

    def __init__(self, message: str, required_n: int | None = None):
        super().__init__(message)
        self.required_n = required_n


# ---------------------------------------------------------------------------
# Weighted least squares on log-log scale
# ---------------------------------------------------------------------------


def _wls(logn, logy, sigma):
    """Slope, intercept and slope stderr.  ``sigma`` None means unweighted with residual errors."""
    X = np.column_stack([np.ones_like(logn), logn])
    if sigma is None:
        coef, *_ = np.linalg.lstsq(X, logy, rcond=None)
        dof = logn.size - 2
        resid = logy - X @ coef
        s2 = float(resid @ resid) / dof if dof > 0 else 0.0
        cov = s2 * np.linalg.inv(X.T @ X)
    else:
        w = 1.0 / sigma**2
        xtw = X.T * w
        cov = np.linalg.inv(xtw @ X)
        coef = cov @ (xtw @ logy)
    return float(coef[1]), float(coef[0]), math.sqrt(max(cov[1, 1], 0.0))


@dataclass(frozen=True)
class LocalSlope:
    n_lo: int
    n_hi: int
    slope: float
    stderr: float


@dataclass(frozen=True)
class ExponentFit:
    n_range: tuple
    slope: float
    slope_stderr: float
    intercept: float
    local_slopes: list
    drift_flag: bool
    drift_pvalue: float
    excluded: list = field(default_factory=list)
    points: int = 0

    def within(self, target: float, tol: float) -> bool:
        return abs(self.slope - target) <= tol


def dyadic_windows(n_lo: int, n_hi: int, start: int = DYADIC_START) -> list[tuple[int, int]]:
    """Windows [2^k, 2^{k+1}) from ``start`` on, clipped to [n_lo, n_hi]."""
    out = []
    k = int(math.log2(start))
    while 2**k <= n_hi:
        lo, hi = max(2**k, n_lo), min(2 ** (k + 1) - 1, n_hi)
        if lo <= hi:
            out.append((lo, hi))
        k += 1
    return out


def fit_exponent(n, value, stderr=None, n_range=None, min_windows: int = 4) -> ExponentFit:
    """Log-log slope of ``value`` against ``n`` with dyadic local slopes and a drift test.

    With positive ``stderr`` the fit is weighted by the delta-method errors of
    log value; with zero (or no) stderr it is ordinary least squares.  The drift
    flag tests whether local slopes trend with log n (5% level); local slopes
    equal to within 1e-8 never count as drift.
    """
    n = np.asarray(n, dtype=float)
    value = np.asarray(value, dtype=float)
    stderr = np.zeros_like(value) if stderr is None else np.asarray(stderr, dtype=float)
    lo, hi = n_range if n_range is not None else (n.min(), n.max())
    if lo < 10:
        raise ValueError("fits start at n >= 10")
    sel = (n >= lo) & (n <= hi)
    excluded = n[sel & ~(value > 0)].astype(int).tolist()
    sel &= value > 0
    n, value, stderr = n[sel], value[sel], stderr[sel]
    weighted = bool(np.all(stderr > 0))
    if not weighted and np.any(stderr > 0):
        raise ValueError("stderr must be all positive or all zero on the fit range")
    logn, logy = np.log(n), np.log(value)
    sig = stderr / value if weighted else None
    slope, intercept, se = _wls(logn, logy, sig)

    local = []
    for a, b in dyadic_windows(int(lo), int(hi)):
        m = (n >= a) & (n <= b)
        if np.count_nonzero(m) >= 2:
            ls, _, lse = _wls(logn[m], logy[m], sig[m] if weighted else None)
            local.append(LocalSlope(a, b, ls, lse))
    if len(local) < min_windows:
        raise InsufficientSeries(f"only {len(local)} dyadic windows with >= 2 points; need {min_windows}")
    drift, p = _slope_drift(local)
    return ExponentFit((int(lo), int(hi)), slope, se, intercept, local, drift, p, excluded, int(n.size))


def _slope_drift(local: list[LocalSlope]) -> tuple[bool, float]:
    s = np.array([w.slope for w in local])
    if np.ptp(s) <= DRIFT_FLOOR:
        return False, 1.0
    mid = np.log([math.sqrt(w.n_lo * w.n_hi) for w in local])
    se = np.array([w.stderr for w in local])
    weighted = bool(np.all(se > 0))
    trend, _, trend_se = _wls(mid, s, se if weighted else None)
    if trend_se == 0.0:
        return abs(trend) > DRIFT_FLOOR, 0.0
    z = trend / trend_se
    if weighted:
        p = 2 * stats.norm.sf(abs(z))
    else:
        p = 2 * stats.t.sf(abs(z), df=max(len(local) - 2, 1))
    return bool(p < DRIFT_LEVEL), float(p)


# ---------------------------------------------------------------------------
# Mann-Kendall
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrendTest:
    tau: float
    p_value: float
    n: int
    level: float = DRIFT_LEVEL

    @property
    def significant(self) -> bool:
        return self.p_value < self.level

    @property
    def direction(self) -> str:
        if not self.significant:
            return "none"
        return "increasing" if self.tau > 0 else "decreasing"


def mann_kendall(y, level: float = DRIFT_LEVEL) -> TrendTest:
    """Mann-Kendall test for a monotone trend in ``y`` (Kendall's tau against time)."""
    y = np.asarray(y, dtype=float)
    if y.size < 3:
        raise ValueError("Mann-Kendall needs at least 3 points")
    if np.ptp(y) == 0:
        return TrendTest(0.0, 1.0, int(y.size), level)
    res = stats.kendalltau(np.arange(y.size), y)
    return TrendTest(float(res.statistic), float(res.pvalue), int(y.size), level)


# ---------------------------------------------------------------------------
# d_n over ladder probabilities
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ThetaRatio:
    n: np.ndarray
    ratio: np.ndarray
    stderr: np.ndarray
    trend: TrendTest | None
    dropped: list
    degenerate: bool

    def rows(self):
        return zip(self.n.tolist(), self.ratio.tolist(), self.stderr.tolist())


def theta_ratio(series_d, ladder_series, trend_from: int | None = None) -> ThetaRatio:
    """Pointwise d_n / P(L~_n >= 0) with delta-method errors and a trend test.

    Both inputs are (n, value, stderr) triples on the same grid.  The trend is
    tested on the top half of the grid, or on n >= ``trend_from`` if given.
    A ladder series identically 1 marks a non-oscillating walk.
    """
    n, d, sd = (np.asarray(a, dtype=float) for a in series_d)
    n2, p, sp = (np.asarray(a, dtype=float) for a in ladder_series)
    if n.shape != n2.shape or np.any(n != n2):
        raise ValueError("series must share the n grid")
    keep = p > 0
    dropped = n[~keep].astype(int).tolist()
    n, d, sd, p, sp = n[keep], d[keep], sd[keep], p[keep], sp[keep]
    ratio = d / p
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.hypot(np.where(d != 0, sd / d, 0.0), sp / p)
    err = np.abs(ratio) * rel
    degenerate = bool(np.all(p == 1.0))
    top = n >= trend_from if trend_from is not None else np.arange(n.size) >= n.size // 2
    trend = mann_kendall(ratio[top]) if np.count_nonzero(top) >= 3 else None
    return ThetaRatio(n.astype(np.int64), ratio, err, trend, dropped, degenerate)


# ---------------------------------------------------------------------------
# Tauberian check
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TauberianCheck:
    s: np.ndarray
    scaled: np.ndarray
    stderr: np.ndarray
    tail_bound: float
    trend: TrendTest | None

    def rows(self):
        return zip(self.s.tolist(), self.scaled.tolist(), self.stderr.tolist())


def required_terms(d_last: float, n_last: int, decay: float, s: float, tol: float) -> int:
    """Smallest N with d_N s^{N+1} / (1 - s) <= tol, extrapolating d_N = d_last (N / n_last)^{-decay}."""
    def bound(N):
        return d_last * (N / n_last) ** (-decay) * s ** (N + 1) / (1 - s)

    N = max(n_last, 1)
    while bound(N) > tol:
        N *= 2
    lo, hi = N // 2, N
    while hi - lo > 1:
        mid = (lo + hi) // 2
        lo, hi = (mid, hi) if bound(mid) > tol else (lo, mid)
    return hi


def tauberian_check(d, rho: float, s_grid, d_stderr=None, tol: float = 1e-6) -> TauberianCheck:
    """D_trunc(s) (1 - s)^{1 - rho} on ``s_grid`` for d = (d_0, d_1, ...).

    Refuses unless the discarded tail at max(s_grid), bounded by
    d_N s^{N+1} / (1 - s) for nonincreasing d, is below ``tol``.  Estimates
    of d_n from shared paths are positively correlated, so the reported error
    is the upper bound sum_n stderr_n s^n (1 - s)^{1 - rho}.
    """
    if not 0 < rho < 1:
        raise ValueError("rho must lie in (0, 1)")
    d = np.asarray(d, dtype=float)
    s_grid = np.asarray(s_grid, dtype=float)
    if np.any((s_grid <= 0) | (s_grid >= 1)):
        raise ValueError("s must lie in (0, 1)")
    N = d.size - 1
    s_max = float(s_grid.max())
    tail = float(d[-1] * s_max ** (N + 1) / (1 - s_max))
    if tail > tol:
        raise InsufficientSeries(
            f"tail bound {tail:.3g} at s = {s_max} exceeds {tol:g}",
            required_n=required_terms(float(d[-1]), N, rho, s_max, tol),
        )
    n = np.arange(d.size)
    scaled, err = [], []
    for s in s_grid:
        w = np.exp(n * math.log(s))
        scale = (1 - s) ** (1 - rho)
        scaled.append(math.fsum(d * w) * scale)
        err.append(math.fsum(np.asarray(d_stderr) * w) * scale if d_stderr is not None else 0.0)
    scaled = np.array(scaled)
    trend = mann_kendall(scaled) if scaled.size >= 3 else None
    return TauberianCheck(s_grid, scaled, np.array(err), tail, trend)


# ---------------------------------------------------------------------------
# Tail-sum diagnostic
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TailSum:
    n: int
    m: int
    ratio: float
    terms: np.ndarray


def _strict_min_block(index, size, gen, model, n, rate, reflected):
    """Sums over paths of u(-S_k) 1{S_k < S_i for all i < k}, k = 0..n."""
    span, draw = increment_source(model, reflected)
    out = np.zeros(n + 1)
    out[0] = size
    s = np.zeros(size)
    low = np.zeros(size)
    for k in range(1, n + 1):
        s = s + span * draw(gen, size)
        new = s < low
        low = np.where(new, s, low)
        out[k] = np.exp(rate * s[new]).sum()
    return out


def tail_sum_diagnostic(
    model: EnvironmentModel, n: int, m: int, rate: float, replicas: int, seed: int, reflected: bool = True, workers: int = 1
) -> TailSum:
    """sum_{k=m}^n E[u(-S_k); tau(k) = k] P(L_{n-k} >= 0) / P(L_n >= 0) with u(x) = exp(-rate x).

    Uses the reflected walk by default.  Reported only; no threshold applies.
    """
    fn = partial(_strict_min_block, model=model, n=int(n), rate=float(rate), reflected=reflected)
    a = rngmod.merge_sums(rngmod.run_blocks(fn, replicas, seed, "tail-sum", workers)) / replicas
    ladder = ladder_probability(model, np.arange(n + 1), replicas, seed, reflected=reflected, workers=workers).estimate
    terms = a[m : n + 1] * ladder[n - np.arange(m, n + 1)]
    return TailSum(int(n), int(m), float(terms.sum() / ladder[n]), terms)
