"""Forward simulation of Y (with immigration), Z (without) and W (immigration stopped at zero).

Offspring totals of w geometric individuals are negative binomial.  Small
generations are summed individual by individual; larger ones use the exact
Gamma-Poisson mixture T ~ Poisson(m * Gamma(w, 1)), which costs O(1) whatever w.

Once the Poisson rate exceeds 2**53 a replica moves to a log-domain state:
the population is carried as log W, the Gamma draw is replaced by its normal
limit and immigration (a few individuals) is dropped as below float
resolution.  Such a replica cannot die while there, and returns to exact
integers when the rate falls back below 2**53.  The fraction of replicas that
ever used the log domain is reported as ``saturated_fraction``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import partial

import numpy as np

from . import rng as rngmod
from .envmodel import EnvironmentModel, ImmigrationLaw, ModelError, OffspringLaw
from .gfalg import EnvRealization

DIRECT_MAX = 8
LOG_RATE_CAP = 53 * math.log(2.0)
SATURATION_WARN = 1e-3
INT64_MAX = np.iinfo(np.int64).max


# ---------------------------------------------------------------------------
# Offspring totals
# ---------------------------------------------------------------------------


def _direct_totals(w, x, gen):
    q = 1.0 / (1.0 + np.exp(x))  # F(0)
    k = int(w.max())
    draws = gen.geometric(np.broadcast_to(q[:, None], (w.size, k))) - 1
    draws[np.arange(k)[None, :] >= w[:, None]] = 0
    return draws.sum(axis=1)


def offspring_totals(w, x, gen: np.random.Generator, method: str = "auto"):
    """Sum of w_i i.i.d. geometric variables with means exp(x_i), elementwise.

    Returns ``(T, big, log_rate)``: ``big`` marks entries whose Poisson rate
    exceeded 2**53, for which ``T`` is meaningless and ``log_rate`` holds log T.
    """
    w = np.asarray(w, dtype=np.int64)
    x = np.broadcast_to(np.asarray(x, dtype=float), w.shape)
    if np.any(w < 0):
        raise ValueError("population sizes must be nonnegative")
    t = np.zeros(w.shape, dtype=np.int64)
    log_rate = np.full(w.shape, -np.inf)
    big = np.zeros(w.shape, dtype=bool)
    if method == "direct":
        small = w > 0
    elif method == "gamma_poisson":
        small = np.zeros(w.shape, dtype=bool)
    elif method == "auto":
        small = (w > 0) & (w <= DIRECT_MAX)
    else:
        raise ValueError(f"unknown method {method!r}")
    if np.any(small):
        t[small] = _direct_totals(w[small], x[small], gen)
    rest = (w > 0) & ~small
    if np.any(rest):
        lr = x[rest] + np.log(gen.gamma(w[rest].astype(float)))
        over = lr > LOG_RATE_CAP
        tr = np.zeros(lr.size, dtype=np.int64)
        tr[~over] = gen.poisson(np.exp(lr[~over]))
        t[rest] = tr
        big[rest] = over
        log_rate[rest] = lr
    return t, big, log_rate


def step_offspring_total(w: int, law: OffspringLaw, rng: np.random.Generator, method: str = "auto") -> int:
    """Total offspring of ``w`` individuals under ``law``; negative binomial(w, F(0))."""
    if w < 1:
        raise ValueError("step_offspring_total needs w >= 1; absorption is the caller's job")
    t, big, lr = offspring_totals(np.array([w]), np.array([law.log_mean_x]), rng, method)
    if big[0]:
        return INT64_MAX if lr[0] >= math.log(INT64_MAX) else int(round(math.exp(lr[0])))
    return int(t[0])


def _log_domain_rate(logw, x, gen):
    """log(m * Gamma(W, 1)) for W = exp(logw) >= 2**53, using the normal limit of Gamma."""
    z = gen.standard_normal(logw.size)
    return logw + np.log1p(z * np.exp(-0.5 * logw)) + x


# ---------------------------------------------------------------------------
# Population state shared by trajectories and the tail estimator
# ---------------------------------------------------------------------------


@dataclass
class _State:
    w: np.ndarray  # exact counts (meaningful where ~big)
    big: np.ndarray
    logw: np.ndarray

    @classmethod
    def start(cls, w0) -> "_State":
        w0 = np.asarray(w0, dtype=np.int64)
        return cls(w0.copy(), np.zeros(w0.shape, dtype=bool), np.full(w0.shape, -np.inf))

    def take(self, mask) -> "_State":
        return _State(self.w[mask], self.big[mask], self.logw[mask])


def _offspring_step(state: _State, x, gen) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Offspring totals for every replica: ``(T, big, logT)``."""
    t = np.zeros(state.w.shape, dtype=np.int64)
    big = np.zeros(state.w.shape, dtype=bool)
    logt = np.full(state.w.shape, -np.inf)
    ex = ~state.big
    if np.any(ex):
        t[ex], big[ex], logt[ex] = offspring_totals(state.w[ex], x[ex], gen)
    if np.any(state.big):
        lr = _log_domain_rate(state.logw[state.big], x[state.big], gen)
        over = lr > LOG_RATE_CAP
        tb = np.zeros(lr.size, dtype=np.int64)
        tb[~over] = gen.poisson(np.exp(lr[~over]))
        t[state.big], big[state.big], logt[state.big] = tb, over, lr
    return t, big, logt


def _next_state(t, big, logt, eta, kind: str) -> _State:
    if kind == "W":
        w = np.where(t > 0, t + eta, 0)
    elif kind == "Y":
        w = t + eta
    else:
        w = t
    return _State(np.where(big, 0, w), big, np.where(big, logt, -np.inf))


def _initial_sizes(model: EnvironmentModel, gen, size: int, initial):
    """W_0 from G_0 conditioned positive, or a fixed size when ``initial`` is given."""
    if initial is not None:
        if int(initial) < 1:
            raise ValueError("a fixed initial size must be >= 1")
        return np.full(size, int(initial), dtype=np.int64)
    idx = model.immigration_index(gen, size)
    return model.sample_immigrants(np.broadcast_to(idx, (size,)), gen, positive=True)


# ---------------------------------------------------------------------------
# Single trajectories
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrajectorySample:
    process_kind: str
    sizes: list
    environment_log: EnvRealization | None = None
    zeta: int | None = None
    saturated: bool = False


def _record(state: _State) -> int:
    if state.big[0]:
        return INT64_MAX if state.logw[0] >= math.log(INT64_MAX) else int(round(math.exp(state.logw[0])))
    return int(state.w[0])


def _environment_arrays(env: EnvRealization, model: EnvironmentModel):
    laws = list(model.immigration_laws)

    def law_index(g: ImmigrationLaw) -> int:
        for j, law in enumerate(laws):
            if law == g:
                return j
        laws.append(g)
        return len(laws) - 1

    return env.log_means, np.array([law_index(env.G(i)) for i in range(1, env.n + 1)]), laws


def _positive_draw(law: ImmigrationLaw, gen) -> int:
    """Inverse-CDF draw from ``law`` conditioned on being >= 1."""
    c = law.cdf_table()
    if c[0] >= 1.0:
        raise ModelError("G_0(0) = 1: the initial law puts no mass on positive states")
    return int(np.searchsorted(c, c[0] + gen.random() * (1.0 - c[0]), side="right"))


def _simulate_one(kind, model, n_max, gen, environment, initial, keep_environment):
    if environment is None:
        environment = EnvRealization.sample(model, n_max, gen)
    elif environment.n < n_max:
        raise ModelError("environment shorter than n_max")
    x, idx, laws = _environment_arrays(environment, model)
    tables = [law.cdf_table() for law in laws]
    if kind == "Z":
        w0 = 1 if initial is None else int(initial)
    elif initial is not None:
        w0 = int(initial)
    else:
        w0 = _positive_draw(environment.initial_immigration, gen)
    state = _State.start([w0])
    sizes, zeta, saturated = [w0], None, False
    for n in range(1, n_max + 1):
        if kind != "Y" and not state.big[0] and state.w[0] == 0:
            # W and Z are absorbed at 0; Y is revived by immigrants
            sizes.append(0)
            continue
        t, big, logt = _offspring_step(state, x[n - 1 : n], gen)
        eta = np.searchsorted(tables[idx[n - 1]], gen.random(1), side="right")
        state = _next_state(t, big, logt, eta, kind)
        saturated |= bool(state.big[0])
        sizes.append(_record(state))
        if kind == "W" and sizes[-1] == 0:
            zeta = n
            sizes.extend([0] * (n_max - n))
            break
    env = environment.prefix(n_max) if keep_environment else None
    return TrajectorySample(kind, sizes, env, zeta, saturated)


def _gen(rng, seed_tag):
    if isinstance(rng, np.random.Generator):
        return rng
    return rngmod.stream(rng, seed_tag)


def simulate_W(model, n_max, rng, environment=None, initial=None, keep_environment=True) -> TrajectorySample:
    """One path of the process stopped at zero; immigrants arrive only if T_n > 0."""
    return _simulate_one("W", model, n_max, _gen(rng, "trajectory-W"), environment, initial, keep_environment)


def simulate_Y(model, n_max, rng, environment=None, initial=None, keep_environment=True) -> TrajectorySample:
    """One path of the process with immigration in every generation."""
    return _simulate_one("Y", model, n_max, _gen(rng, "trajectory-Y"), environment, initial, keep_environment)


def simulate_Z(model, n_max, rng, environment=None, initial=None, keep_environment=True) -> TrajectorySample:
    """One path of the process without immigration, Z_0 = 1 by default."""
    return _simulate_one("Z", model, n_max, _gen(rng, "trajectory-Z"), environment, initial, keep_environment)


def simulate_coupled(model, n_max, rng, environment=None, initial=None) -> tuple[TrajectorySample, TrajectorySample]:
    """W and Y driven by the same offspring and immigrant draws.

    Y's individuals are W's plus D = Y - W extra ones; the extra ones get
    their own offspring draws, so W_n <= Y_n always and W_n = Y_n before zeta.
    Both marginals are exact.  Populations are kept as exact integers.
    """
    gen = _gen(rng, "trajectory-coupled")
    if environment is None:
        environment = EnvRealization.sample(model, n_max, gen)
    x, idx, laws = _environment_arrays(environment, model)
    tables = [law.cdf_table() for law in laws]
    w0 = int(initial) if initial is not None else _positive_draw(environment.initial_immigration, gen)
    w, y, zeta = w0, w0, None
    ws, ys = [w], [y]
    for n in range(1, n_max + 1):
        xs = np.array([x[n - 1], x[n - 1]])
        t, big, _ = offspring_totals(np.array([w, y - w]), xs, gen)
        if np.any(big):
            raise OverflowError("coupled trajectories are limited to exact integer sizes")
        eta = int(np.searchsorted(tables[idx[n - 1]], gen.random(), side="right"))
        tw, ty = int(t[0]), int(t[0] + t[1])
        w = tw + eta if tw > 0 else 0
        y = ty + eta
        if zeta is None and w == 0 and ws[-1] > 0:
            zeta = n
        ws.append(w)
        ys.append(y)
    env = environment.prefix(n_max)
    return TrajectorySample("W", ws, env, zeta), TrajectorySample("Y", ys, env, None)


# ---------------------------------------------------------------------------
# Tail of the life period
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TailEstimate:
    n_grid: np.ndarray
    survival: np.ndarray
    stderr: np.ndarray
    replicas: int
    master_seed: int
    saturated_fraction: np.ndarray
    warnings: tuple = ()

    def rows(self):
        for n, s, e, f in zip(self.n_grid.tolist(), self.survival.tolist(), self.stderr.tolist(), self.saturated_fraction.tolist()):
            yield n, s, e, self.replicas, f


def _tail_block(index, size, gen, model, n_max, initial):
    """Histograms over n of deaths (zeta = n) and of first entries into the log domain."""
    deaths = np.zeros(n_max + 1, dtype=np.int64)
    first_big = np.zeros(n_max + 1, dtype=np.int64)
    state = _State.start(_initial_sizes(model, gen, size, initial))
    ever_big = np.zeros(size, dtype=bool)
    for n in range(1, n_max + 1):
        if state.w.size == 0:
            break
        x = model.sample_log_means(gen, state.w.size)
        eta = model.sample_immigrants(model.immigration_index(gen, state.w.size), gen)
        t, big, logt = _offspring_step(state, x, gen)
        state = _next_state(t, big, logt, eta, "W")
        new_big = state.big & ~ever_big
        first_big[n] += np.count_nonzero(new_big)
        ever_big |= state.big
        alive = state.big | (state.w > 0)
        deaths[n] = alive.size - np.count_nonzero(alive)
        state, ever_big = state.take(alive), ever_big[alive]
    return np.concatenate([deaths, first_big])


def estimate_tail(
    model: EnvironmentModel,
    n_grid,
    replicas: int,
    seed: int,
    workers: int = 1,
    initial: int | None = None,
) -> TailEstimate:
    """Monte Carlo P(zeta > n) on ``n_grid``, censored at max(n_grid)."""
    if replicas < 1000:
        raise ValueError("estimate_tail needs at least 1000 replicas")
    n_grid = np.asarray(n_grid, dtype=np.int64)
    if np.any(n_grid < 0):
        raise ValueError("n_grid must be nonnegative")
    n_max = int(n_grid.max())
    fn = partial(_tail_block, model=model, n_max=n_max, initial=initial)
    tot = rngmod.merge_sums(rngmod.run_blocks(fn, replicas, seed, "tail", workers))
    deaths, first_big = tot[: n_max + 1], tot[n_max + 1 :]
    surv = (replicas - np.cumsum(deaths)) / replicas
    sat = np.cumsum(first_big) / replicas
    p = surv[n_grid]
    notes = []
    if sat[-1] > SATURATION_WARN:
        notes.append(
            f"{sat[-1]:.3%} of replicas used the log-domain population state (rate above 2**53)"
        )
        warnings.warn(notes[-1], RuntimeWarning, stacklevel=2)
    return TailEstimate(
        n_grid=n_grid,
        survival=p,
        stderr=np.sqrt(p * (1 - p) / replicas),
        replicas=int(replicas),
        master_seed=int(seed),
        saturated_fraction=sat[n_grid],
        warnings=tuple(notes),
    )
