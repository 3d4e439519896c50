"""Renewal sequences d_n, H_n, H*_n and the life-period tail R_n = P(zeta > n).

Two backends fill a :class:`RenewalSeries`:

* exact enumeration over every sequence of environment atoms (rational
  arithmetic when the model is rational), which also computes R_n directly as
  1 - E N(n; 0) so the recursion can be checked against it;
* Monte Carlo over sampled environments, with the inner products evaluated
  exactly per environment.

In both, H_n is d_n - d_{n+1}, so the telescoping sum holds by construction.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import partial

import numpy as np
from scipy.optimize import isotonic_regression

from . import rng as rngmod
from .envmodel import EnvironmentModel, ModelError, frac_complement
from .gfalg import complement_table, extinction_chain

ENUMERATION_BUDGET = 1 << 20
COVARIANCE_MAX_N = 64


@dataclass(frozen=True)
class RenewalSeries:
    n_max: int
    d: np.ndarray
    h: np.ndarray
    h_star: np.ndarray
    r: np.ndarray
    backend: str
    r_enumeration: np.ndarray | None = None
    d_backward: np.ndarray | None = None
    replicas: int | None = None
    d_stderr: np.ndarray | None = None
    h_stderr: np.ndarray | None = None
    h_star_stderr: np.ndarray | None = None
    d_isotonic: np.ndarray | None = None
    isotonic_distance: float | None = None
    covariance: np.ndarray | None = field(default=None, repr=False)
    exact: dict | None = field(default=None, repr=False)

    def rows(self):
        """Rows (n, d, H, H*, R_recursion, R_enumeration[, stderr columns]); R is indexed from 1."""
        for n in range(self.n_max + 1):
            row = [
                n,
                self.d[n],
                self.h[n] if n < self.h.size else math.nan,
                self.h_star[n] if n < self.h_star.size else math.nan,
                self.r[n - 1] if n >= 1 else 1.0,
                (self.r_enumeration[n - 1] if n >= 1 else 1.0) if self.r_enumeration is not None else math.nan,
            ]
            if self.backend == "monte_carlo":
                row += [
                    self.d_stderr[n],
                    self.h_stderr[n] if n < self.h_stderr.size else math.nan,
                    self.h_star_stderr[n] if n < self.h_star_stderr.size else math.nan,
                ]
            yield row

    def columns(self) -> list[str]:
        cols = ["n", "d", "H", "H_star", "R_recursion", "R_enumeration"]
        if self.backend == "monte_carlo":
            cols += ["d_stderr", "H_stderr", "H_star_stderr"]
        return cols


# ---------------------------------------------------------------------------
# Recursion and the series identity
# ---------------------------------------------------------------------------


def solve_recursion_values(h, h_star, n_max: int | None = None) -> list:
    """R_1 = H*_0 and R_{n+1} = sum_{k=0}^{n-1} H_k R_{n-k} + H*_n.

    Works on any number type (floats or exact rationals).
    """
    n_max = len(h_star) if n_max is None else n_max
    r = [h_star[0]]
    for n in range(1, n_max):
        r.append(sum((h[k] * r[n - 1 - k] for k in range(n)), h_star[n] * 0) + h_star[n])
    return r


def solve_recursion(series: RenewalSeries) -> np.ndarray:
    """R_1..R_{n_max} from the series' H and H*."""
    n_max = series.n_max
    if series.h.size < n_max - 1 or series.h_star.size < n_max:
        raise ValueError("series does not reach n_max")
    if series.exact is not None:
        return np.array([float(v) for v in solve_recursion_values(series.exact["h"], series.exact["h_star"], n_max)])
    h, hs = series.h, series.h_star
    r = np.empty(n_max)
    r[0] = hs[0]
    for n in range(1, n_max):
        r[n] = math.fsum(h[:n] * r[n - 1 :: -1][:n]) + hs[n]
    return r


@dataclass(frozen=True)
class SeriesIdentityCheck:
    max_residual: float
    residuals: np.ndarray
    stderr: np.ndarray | None = None


def check_series_identity(series: RenewalSeries, order: int, r=None) -> SeriesIdentityCheck:
    """Coefficients 1..order of R(s)(1 - s H(s)) - s H*(s) - s R_1, with H*(s) from n = 1.

    ``r`` (R_1, R_2, ...) defaults to the enumerated tail when the series has
    one, and to the recursion output otherwise (which makes the identity hold
    by construction).  For Monte Carlo series with a stored covariance and an
    exact ``r`` the residuals get propagated standard errors.
    """
    if r is None:
        r = series.r_enumeration if series.r_enumeration is not None else series.r
    r = np.asarray(r, dtype=float)
    if r.size < order or series.h.size < order - 1 or series.h_star.size < order:
        raise ValueError("series too short for the requested order")
    res = np.empty(order)
    coef = []
    n1 = series.n_max + 1
    for m in range(1, order + 1):
        conv = math.fsum(series.h[k] * r[m - 2 - k] for k in range(m - 1))
        tail = series.h_star[m - 1] if m >= 2 else r[0]
        res[m - 1] = r[m - 1] - conv - tail
        if series.covariance is not None:
            # residual as a linear functional of the per-path (d_0.., H*_0..) means
            c = np.zeros(2 * n1)
            for k in range(m - 1):
                c[k] -= r[m - 2 - k]
                c[k + 1] += r[m - 2 - k]
            if m >= 2:
                c[n1 + m - 1] -= 1.0
            coef.append(c)
    se = None
    if coef:
        C = np.array(coef)
        se = np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", C, series.covariance, C), 0.0))
    return SeriesIdentityCheck(float(np.max(np.abs(res))), res, se)


# ---------------------------------------------------------------------------
# Exact enumeration
# ---------------------------------------------------------------------------


def enumeration_cost(model: EnvironmentModel, n_max: int) -> int:
    """Number of environment sequences needed for ``exact_series(model, n_max)``."""
    if model.stable is not None:
        return math.inf
    n_off, n_imm = len(model.offspring_atoms), len(model.immigration_laws)
    return n_off ** (n_max + 1) * n_imm ** (n_max + 1)


def _weighted_mean(weights, values, exact: bool):
    if exact:
        return sum((w * v for w, v in zip(weights, values)), Fraction(0))
    return math.fsum(weights * values)


def exact_series(model: EnvironmentModel, n_max: int, exact: bool | None = None, budget: int = ENUMERATION_BUDGET) -> RenewalSeries:
    """d_0..d_{n_max}, H, H*, recursion R and enumerated R by summing over all atom sequences.

    Generations 1..n_max+1 carry offspring atoms, generations 0..n_max carry
    immigration atoms.  ``exact`` defaults to rational arithmetic whenever the
    model is rational.
    """
    if model.stable is not None:
        raise ModelError("exact enumeration needs finitely many environment atoms")
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    cost = enumeration_cost(model, n_max)
    if cost > budget:
        raise ModelError(f"enumeration needs {cost} environment sequences, budget is {budget}")
    exact = model.exact if exact is None else exact
    if exact and not model.exact:
        raise ModelError("rational enumeration needs rational weights, means and probabilities")

    off = model.offspring_atoms
    imm_atoms = model.immigration
    L = n_max + 1
    off_seq = np.array(list(itertools.product(range(len(off)), repeat=L)), dtype=np.int64).reshape(-1, L)
    imm_seq = np.array(list(itertools.product(range(len(imm_atoms)), repeat=L)), dtype=np.int64).reshape(-1, L)
    # full product of offspring and immigration sequences, lexicographic
    oi = np.repeat(np.arange(off_seq.shape[0]), imm_seq.shape[0])
    ii = np.tile(np.arange(imm_seq.shape[0]), off_seq.shape[0])
    F_idx, G_idx = off_seq[oi], imm_seq[ii]  # G_idx[:, 0] is the initial law

    if exact:
        ow = [w for w, _ in off]
        iw = [w for w, _ in imm_atoms]
        means = np.array([law.exact_mean for _, law in off], dtype=object)
        weights = np.ones(F_idx.shape[0], dtype=object)
        for k in range(L):
            weights = weights * np.array(ow, dtype=object)[F_idx[:, k]] * np.array(iw, dtype=object)[G_idx[:, k]]

        def off_comp(k, v):
            m = means[F_idx[:, k - 1]]
            return m * v / (1 + m * v)

        one = Fraction(1)
    else:
        ow = np.array([float(w) for w, _ in off])
        iw = np.array([float(w) for w, _ in imm_atoms])
        weights = np.prod(ow[F_idx], axis=1) * np.prod(iw[G_idx], axis=1)
        xs = np.array([law.log_mean_x for _, law in off])

        def off_comp(k, v):
            return frac_complement(xs[F_idx[:, k - 1]], v)

        one = 1.0

    laws = [g for _, g in imm_atoms]

    def imm_comp(k, v):
        if len(laws) == 1:
            return laws[0].complement(v)
        out = np.empty(np.shape(v), dtype=object if exact else float)
        for j, g in enumerate(laws):
            mask = G_idx[:, k] == j
            out[mask] = g.complement(v[mask])
        return out

    g0_zero = np.array([g.g0 for g in laws], dtype=object if exact else float)[G_idx[:, 0]]
    if np.any(g0_zero == 1):
        raise ModelError("G_0(0) = 1: the initial law puts no mass on positive states")

    def to_batch(v):
        return np.full(F_idx.shape[0], v, dtype=object if exact else float)

    table = complement_table(lambda k, v: off_comp(k, to_batch(v) if np.ndim(v) == 0 else v), L)

    # forward products prod_{i=1}^n G_i(F_{i,n+1}(0)) and H* terms
    d, hs = [], []
    for n in range(n_max + 1):
        col = table[n]  # 1 - F_{k,n+1}(0), k = 0..n
        prod = to_batch(one)
        for i in range(1, n + 1):
            prod = prod * (1 - imm_comp(i, col[i]))
        d.append(_weighted_mean(weights, prod, exact))
        hs.append(_weighted_mean(weights, imm_comp(0, col[0]) / (1 - g0_zero) * prod, exact))

    # backward products prod_{i=1}^n G_i(F_{i,0}(0))
    d_back = [one]
    vb, prod = to_batch(one), to_batch(one)
    for i in range(1, n_max + 1):
        vb = off_comp(i, vb)
        prod = prod * (1 - imm_comp(i, vb))
        d_back.append(_weighted_mean(weights, prod, exact))

    if len(laws) == 1:
        g00 = laws[0].g0

        def init_comp(v):
            return laws[0].complement(v)
    else:
        g00 = g0_zero

        def init_comp(v):
            return imm_comp(0, v)

    chain = extinction_chain(table[:n_max], imm_comp, init_comp, g00)
    r_enum = [1 - _weighted_mean(weights, nk, exact) for nk in chain]

    h = [d[n] - d[n + 1] for n in range(n_max)]
    r_rec = solve_recursion_values(h, hs, n_max)
    def as_float(seq):
        return np.array([float(v) for v in seq])

    return RenewalSeries(
        n_max=n_max,
        d=as_float(d),
        h=as_float(h),
        h_star=as_float(hs),
        r=as_float(r_rec),
        backend="exact_enumeration",
        r_enumeration=as_float(r_enum),
        d_backward=as_float(d_back),
        exact={"d": d, "h": h, "h_star": hs, "r": r_rec, "r_enumeration": r_enum, "d_backward": d_back} if exact else None,
    )


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------


def _column_moments(c):
    """Mean and centered sum of squares; shifting by the first entry keeps constant columns exact."""
    c0 = c[0]
    mean = c0 + (c - c0).mean()
    dev = c - mean
    return mean, float(dev @ dev)


def _mc_block(index, size, gen, model, n_max, with_cov):
    """Block moments of the per-path d_n and H*_n values.

    Uses the reversed form: d_n = E prod_{i<=n} G_i(F_{i,0}(0)) and
    H*_n = E[(1 - G_{n+1}(F_{n+1,0}(0))) / (1 - G_{n+1}(0)) prod_{i<=n} G_i(F_{i,0}(0))].
    Columns are d_0..d_{n_max}, then H*_0..H*_{n_max}.
    """
    laws = model.immigration_laws
    g0 = np.array([float(g.g0) for g in laws])
    n1 = n_max + 1
    mean = np.empty(2 * n1)
    m2 = np.empty(2 * n1)
    vals = np.empty((size, 2 * n1)) if with_cov else None
    v = np.ones(size)
    prod = np.ones(size)
    for i in range(1, n1 + 1):
        x = model.sample_log_means(gen, size)
        idx = np.broadcast_to(model.immigration_index(gen, size), (size,))
        v = frac_complement(x, v)
        gc = np.empty(size)
        for j, g in enumerate(laws):
            mask = idx == j
            gc[mask] = g.complement(v[mask])
        hs = prod * gc / (1.0 - g0[idx])
        mean[i - 1], m2[i - 1] = _column_moments(prod)
        mean[n1 + i - 1], m2[n1 + i - 1] = _column_moments(hs)
        if with_cov:
            vals[:, i - 1], vals[:, n1 + i - 1] = prod, hs
        prod = prod * (1.0 - gc)
    co = None
    if with_cov:
        dev = vals - mean
        co = dev.T @ dev
    return size, mean, m2, co


def _merge_moments(parts):
    """Chan's pairwise update, applied in block order."""
    n, mean, m2, co = parts[0]
    mean, m2 = mean.copy(), m2.copy()
    co = None if co is None else co.copy()
    for nb, mb, m2b, cob in parts[1:]:
        tot = n + nb
        delta = mb - mean
        mean = mean + delta * (nb / tot)
        m2 = m2 + m2b + delta * delta * (n * nb / tot)
        if co is not None:
            co = co + cob + np.outer(delta, delta) * (n * nb / tot)
        n = tot
    return n, mean, m2, co


def mc_series(
    model: EnvironmentModel,
    n_max: int,
    replicas: int,
    seed: int,
    workers: int = 1,
    tag: str = "renewal-mc",
) -> RenewalSeries:
    """Monte Carlo d, H*, and R by the recursion, with standard errors.

    d̂ is reported raw; its antitonic projection and the projection distance
    are reported alongside.  The covariance of the per-path (d, H*) values is
    kept when n_max <= 64.
    """
    if replicas < 1000:
        raise ValueError("mc_series needs at least 1000 replicas")
    with_cov = n_max <= COVARIANCE_MAX_N
    fn = partial(_mc_block, model=model, n_max=int(n_max), with_cov=with_cov)
    n, mean, m2, co = _merge_moments(rngmod.run_blocks(fn, replicas, seed, tag, workers))
    var = m2 / max(n - 1, 1) / n
    n1 = n_max + 1
    d, hs = mean[:n1], mean[n1:]
    se = np.sqrt(var)
    cov = co / max(n - 1, 1) / n if co is not None else None
    if cov is not None:
        dvar = np.diag(cov)[:n1]
        h_se = np.sqrt(np.maximum(dvar[:-1] + dvar[1:] - 2 * np.diag(cov[:n1, :n1], 1), 0.0))
    else:
        h_se = np.sqrt(se[: n1 - 1] ** 2 + se[1:n1] ** 2)  # conservative without covariance
    h = d[:-1] - d[1:]
    iso = isotonic_regression(d, increasing=False).x
    series = RenewalSeries(
        n_max=int(n_max),
        d=d,
        h=h,
        h_star=hs,
        r=np.empty(0),
        backend="monte_carlo",
        replicas=int(replicas),
        d_stderr=se[:n1],
        h_stderr=h_se,
        h_star_stderr=se[n1:],
        d_isotonic=iso,
        isotonic_distance=float(np.max(np.abs(iso - d))),
        covariance=cov,
    )
    return _with_r(series)


def _with_r(series: RenewalSeries) -> RenewalSeries:
    return replace(series, r=solve_recursion(series))


# ---------------------------------------------------------------------------
# Theta functional
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ThetaEstimate:
    n: int
    s: float
    theta: float
    stderr: float
    ladder: float
    ladder_stderr: float
    replicas: int


def _theta_block(index, size, gen, model, n, s):
    lat = model.lattice()
    laws = model.immigration_laws
    v = np.full(size, 1.0 - s)
    prod = np.ones(size)
    walk = np.zeros(size, dtype=np.int64 if lat is not None else float)
    ok = np.ones(size, dtype=bool)
    for _ in range(n):
        if model.stable is None:
            k = model.offspring_index(gen, size)
            x = model.log_mean_atoms[k]
            walk = walk + (lat[1][k] if lat is not None else x)
        else:
            x = model.sample_log_means(gen, size)
            walk = walk + x
        ok &= walk <= 0  # reflected walk -S stays >= 0
        idx = np.broadcast_to(model.immigration_index(gen, size), (size,))
        v = frac_complement(x, v)
        gc = np.empty(size)
        for j, g in enumerate(laws):
            mask = idx == j
            gc[mask] = g.complement(v[mask])
        prod = prod * (1.0 - gc)
    val = np.where(ok, prod, 0.0)
    return np.array([val.sum(), (val * val).sum(), ok.sum()])


def theta_functional(model: EnvironmentModel, n: int, s: float, replicas: int, seed: int, workers: int = 1) -> ThetaEstimate:
    """Theta(n; s) = E[prod_{j<=n} G_j(F_{j,0}(s)); L~_n >= 0] with the reflected walk -S."""
    if not 0 <= s < 1:
        raise ValueError("s must lie in [0, 1)")
    if n == 0:
        return ThetaEstimate(0, float(s), 1.0, 0.0, 1.0, 0.0, int(replicas))
    fn = partial(_theta_block, model=model, n=int(n), s=float(s))
    tot = rngmod.merge_sums(rngmod.run_blocks(fn, replicas, seed, f"theta-{n}", workers))
    mean = tot[0] / replicas
    var = max(tot[1] / replicas - mean * mean, 0.0) * replicas / max(replicas - 1, 1)
    p = tot[2] / replicas
    return ThetaEstimate(
        int(n), float(s), float(mean), math.sqrt(var / replicas), float(p), math.sqrt(p * (1 - p) / replicas), int(replicas)
    )
