"""Exact algebra of fractional-linear generating functions in a fixed environment.

All maps are evaluated on the complement v = 1 - s.  A fractional-linear pgf
is stored as the pair (A, B) of

    1 - f(1 - v) = A v / (1 + B v),

which has no pole on [0, 1] and keeps relative accuracy when f(s) is close
to 1.  A single geometric law with mean m is (m, m); composing outer (A1, B1)
with inner (A2, B2) gives (A1 A2, B2 + B1 A2).
"""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass
from fractions import Fraction
import numpy as np

from .envmodel import EnvironmentModel, ImmigrationLaw, ModelError, OffspringLaw, sample_environment_step


class ConsistencyError(ArithmeticError):
    """Two independent evaluation routes disagreed beyond tolerance."""


@dataclass(frozen=True)
class FracLinear:
    """s -> 1 - A(1 - s) / (1 + B(1 - s))."""

    a: object
    b: object

    @classmethod
    def identity(cls) -> "FracLinear":
        return cls(1, 0)

    @classmethod
    def from_law(cls, law: OffspringLaw, exact: bool = False) -> "FracLinear":
        if exact:
            if law.exact_mean is None:
                raise ModelError("exact mode needs rational offspring means")
            return cls(law.exact_mean, law.exact_mean)
        m = law.mean_m
        return cls(m, m)

    def complement(self, v):
        return self.a * v / (1 + self.b * v)

    def __call__(self, s):
        v = 1 - s
        # equivalent to 1 - complement(v); the ratio form avoids cancellation near 0
        return (1 + (self.b - self.a) * v) / (1 + self.b * v)

    def compose(self, inner: "FracLinear") -> "FracLinear":
        """self(inner(s))."""
        return FracLinear(self.a * inner.a, inner.b + self.b * inner.a)

    __matmul__ = compose


@dataclass(frozen=True)
class EnvRealization:
    """A fixed environment: F_1..F_n, G_1..G_n and the initial law G_0.

    ``offspring[i - 1]`` is F_i and ``immigration[i - 1]`` is G_i.
    """

    offspring: tuple
    immigration: tuple
    initial_immigration: ImmigrationLaw

    def __post_init__(self):
        object.__setattr__(self, "offspring", tuple(self.offspring))
        object.__setattr__(self, "immigration", tuple(self.immigration))
        if len(self.offspring) != len(self.immigration):
            raise ModelError("offspring and immigration sequences differ in length")

    @property
    def n(self) -> int:
        return len(self.offspring)

    @property
    def exact(self) -> bool:
        return all(f.exact_mean is not None for f in self.offspring) and all(
            g.exact for g in self.immigration + (self.initial_immigration,)
        )

    def F(self, i: int) -> OffspringLaw:
        return self.offspring[i - 1]

    def G(self, i: int) -> ImmigrationLaw:
        return self.initial_immigration if i == 0 else self.immigration[i - 1]

    @property
    def log_means(self) -> np.ndarray:
        return np.array([f.log_mean_x for f in self.offspring])

    @property
    def prefix_sums(self) -> np.ndarray:
        """S_0 = 0, S_1, ..., S_n."""
        return np.concatenate([[0.0], np.cumsum(self.log_means)])

    def prefix(self, n: int) -> "EnvRealization":
        return EnvRealization(self.offspring[:n], self.immigration[:n], self.initial_immigration)

    @classmethod
    def sample(cls, model: EnvironmentModel, n: int, rng: np.random.Generator) -> "EnvRealization":
        g0 = model.immigration_laws[int(model.immigration_index(rng))]
        steps = [sample_environment_step(model, rng) for _ in range(n)]
        return cls(tuple(f for f, _ in steps), tuple(g for _, g in steps), g0)

    @classmethod
    def constant(cls, law: OffspringLaw, g: ImmigrationLaw, n: int) -> "EnvRealization":
        return cls((law,) * n, (g,) * n, g)


def _check_indices(env: EnvRealization, lo: int, hi: int) -> None:
    if not (0 <= lo <= hi <= env.n):
        raise IndexError(f"need 0 <= {lo} <= {hi} <= {env.n}")


def _exact_arg(s) -> bool:
    return isinstance(s, Fraction)


def compose_forward(env: EnvRealization, i: int, n: int, s):
    """F_{i,n}(s) = F_{i+1}(F_{i+2}(...F_n(s)...)); F_{n,n}(s) = s."""
    _check_indices(env, i, n)
    v = 1 - s
    for k in range(n, i, -1):
        v = env.F(k).complement(v)
    return 1 - v if _exact_arg(s) else float(1.0 - v)


def _iterate_backward(env: EnvRealization, n: int, i: int, s):
    v = 1 - s
    for k in range(i + 1, n + 1):
        v = env.F(k).complement(v)
    return v


def _closed_backward(env: EnvRealization, n: int, s):
    """F_{n,0}(s) = 1 - A_n v / (1 + B_{1,n} v) with A_n = e^{S_n}, B_{1,n} = sum_{k=1}^n e^{S_k}."""
    v = 1 - s
    if _exact_arg(s) and env.exact:
        a, b = Fraction(1), Fraction(0)
        for k in range(1, n + 1):
            a = a * env.F(k).exact_mean
            b = b + a
        prev = b - a
        return (1 + prev * v) / (1 + b * v)
    S = env.prefix_sums[: n + 1]
    top = S.max() if n else 0.0
    # scale by e^{-top}: (e^{-top} + B_{1,n-1} e^{-top} v) / (e^{-top} + B_{1,n} e^{-top} v)
    e = np.exp(S[1:] - top)
    b = math.fsum(e)
    prev = math.fsum(e[:-1]) if n else 0.0
    scale = math.exp(-top)
    return float((scale + prev * float(v)) / (scale + b * float(v)))


def compose_backward(env: EnvRealization, n: int, i: int, s, check: bool = False, rtol: float = 1e-12):
    """F_{n,i}(s) = F_n(F_{n-1}(...F_{i+1}(s)...)).

    For ``i == 0`` the closed form in the exponential sums of the walk is used;
    otherwise the maps are iterated.  ``check=True`` evaluates both routes for
    ``i == 0`` and raises :class:`ConsistencyError` if they disagree.
    """
    _check_indices(env, i, n)
    if s == 1:
        return Fraction(1) if _exact_arg(s) else 1.0
    if i == 0:
        val = _closed_backward(env, n, s)
        if check:
            it = 1 - _iterate_backward(env, n, 0, s)
            if _exact_arg(s) and env.exact:
                if it != val:
                    raise ConsistencyError(f"F_{{{n},0}}: {it} != {val}")
            elif abs(float(it) - float(val)) > rtol * max(abs(float(val)), 1e-300):
                raise ConsistencyError(f"F_{{{n},0}}({s}): iterated {float(it)!r} vs closed {float(val)!r}")
        return val
    v = _iterate_backward(env, n, i, s)
    return 1 - v if _exact_arg(s) else float(1.0 - v)


def product_C(env: EnvRealization, n: int, s, rtol: float = 1e-12):
    """C_n(s) = prod_{i=1}^n F_{i,0}(s), by literal product and by closed form.

    The closed form is v^{-1} / (v^{-1} + B_{1,n}) = 1 / (1 + B_{1,n} v) with
    v = 1 - s, so C_n(0) = 1 / B_n.  Raises :class:`ConsistencyError` when the
    two routes differ by more than ``rtol`` (relative).
    """
    _check_indices(env, 0, n)
    if not s < 1:
        raise ValueError("product_C needs s < 1")
    exact = _exact_arg(s) and env.exact
    v = 1 - s
    if exact:
        lit = Fraction(1)
        vv = v
        b, a = Fraction(0), Fraction(1)
        for k in range(1, n + 1):
            m = env.F(k).exact_mean
            lit *= 1 / (1 + m * vv)
            vv = m * vv / (1 + m * vv)
            a *= m
            b += a
        closed = 1 / (1 + b * v)
        if lit != closed:
            raise ConsistencyError(f"C_{n}: {lit} != {closed}")
        return closed
    x = env.log_means[:n]
    # literal: F_{i,0}(s) = 1 / (1 + m_i v_{i-1}) with v_i the running complement
    # the running complement is carried as a log so it survives long negative excursions
    log_v = math.log(float(v)) if float(v) > 0.0 else -math.inf
    terms = np.empty(n)
    for k in range(n):
        lmv = x[k] + log_v
        terms[k] = np.logaddexp(0.0, lmv)
        log_v = lmv - terms[k]
    log_lit = -math.fsum(terms)
    S = np.concatenate([[0.0], np.cumsum(x)])
    top = S[1:].max() if n else 0.0
    bsum = math.fsum(np.exp(S[1:] - top)) if n else 0.0
    # log(1 / (1 + B v)) with B = e^{top} * bsum
    if n == 0 or float(v) == 0.0:
        log_closed = 0.0
    else:
        lb = top + math.log(bsum) + math.log(float(v))
        log_closed = -(lb + math.log1p(math.exp(-lb))) if lb > 0 else -math.log1p(math.exp(lb))
    # a relative gap in C is an absolute gap in log C; allow for the spacing of doubles near log C
    slack = rtol + 64 * np.spacing(max(abs(log_lit), abs(log_closed)))
    if abs(log_lit - log_closed) > slack:
        raise ConsistencyError(f"C_{n}({s}): literal {math.exp(log_lit)!r} vs closed {math.exp(log_closed)!r}")
    return math.exp(log_closed)


def initial_pgf(g0: ImmigrationLaw, s):
    """N(0; s) = (G_0(s) - G_0(0)) / (1 - G_0(0))."""
    g00 = g0.g0
    if g00 == 1:
        raise ModelError("G_0(0) = 1: the initial law puts no mass on positive states")
    if _exact_arg(s) and g0.exact:
        return (g0.pgf(s) - g00) / (1 - g00)
    return float(1.0 - g0.complement(1.0 - float(s)) / (1.0 - float(g00)))


def conditional_pgf_N(env: EnvRealization, n: int, s):
    """N(n; s) = E[s^{W_n} | environment] by the two-point recursion.

    N(k; x) = N(k-1; F_k(0)) (1 - G_k(x)) + N(k-1; F_k(x)) G_k(x).  The
    recursion is memoised on exact argument values (bit patterns for floats,
    exact rationals otherwise), which keeps the work at O(n^2).
    """
    _check_indices(env, 0, n)
    if env.initial_immigration.g0 == 1:
        raise ModelError("G_0(0) = 1: the initial law puts no mass on positive states")
    exact = _exact_arg(s) and env.exact
    g00 = env.initial_immigration.g0
    memo: dict = {}

    # arguments are carried as complements v = 1 - x
    def N(k, v):
        key = (k, v)
        if key in memo:
            return memo[key]
        if k == 0:
            g = env.initial_immigration.complement(v)
            out = 1 - g / (1 - g00) if exact else 1.0 - float(g) / (1.0 - float(g00))
        else:
            f = env.F(k)
            one = Fraction(1) if exact else 1.0
            v0 = f.complement(one)
            vs = f.complement(v)
            if not exact:
                v0, vs = float(v0), float(vs)
            gk = env.G(k).complement(v)
            if not exact:
                gk = float(gk)
            out = N(k - 1, v0) * gk + N(k - 1, vs) * (1 - gk)
        memo[key] = out
        return out

    limit = sys.getrecursionlimit()
    if n + 50 > limit:
        sys.setrecursionlimit(n + 100)
    try:
        v = 1 - s if exact else 1.0 - float(s)
        return N(n, v)
    finally:
        sys.setrecursionlimit(limit)


# ---------------------------------------------------------------------------
# Vectorised kernels shared by enumeration and Monte Carlo
# ---------------------------------------------------------------------------


def complement_table(off_comp, n: int) -> list:
    """``table[j - 1][k] = 1 - F_{k,j}(0)`` for 0 <= k < j <= n.

    ``off_comp(k, v)`` applies ``1 - F_k(1 - v)`` elementwise over a batch of
    environments; entries are batch arrays.
    """
    table = []
    for j in range(1, n + 1):
        col = [None] * j
        v = off_comp(j, 1)
        col[j - 1] = v
        for k in range(j - 2, -1, -1):
            v = off_comp(k + 1, v)
            col[k] = v
        table.append(col)
    return table


def extinction_chain(table: list, imm_comp, init_comp, g00) -> list:
    """``[N(1;0), ..., N(n;0)]`` over a batch of environments.

    With T[k][j] = N(k; F_{k,j}(0)) for k < j,
    T[k][j] = T[k-1][k] (1 - G_k(F_{k,j}(0))) + T[k-1][j] G_k(F_{k,j}(0))
    and N(k; 0) = T[k-1][k].  ``imm_comp(k, v)`` is 1 - G_k(1 - v), ``init_comp``
    the same for G_0.
    """
    n = len(table)
    prev = [None] + [1 - init_comp(table[j - 1][0]) / (1 - g00) for j in range(1, n + 1)]
    out = [prev[1]]
    for k in range(1, n):
        cur = [None] * (n + 1)
        for j in range(k + 1, n + 1):
            g = imm_comp(k, table[j - 1][k])
            cur[j] = prev[k] * g + prev[j] * (1 - g)
        out.append(cur[k + 1])
        prev = cur
    return out
