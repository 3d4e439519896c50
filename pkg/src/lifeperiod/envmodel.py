"""Offspring and immigration laws, environment distributions and hypothesis checks.

Offspring laws are geometric (fractional-linear), F(s) = 1 / (1 + m (1 - s)),
and are carried by their log-mean X = log m so that heavy-tailed environments
never overflow.  Immigration laws are finitely supported pgfs.  Numbers may be
given as :class:`fractions.Fraction` (or strings such as ``"1/63"``), in which
case exact rational evaluation is available to the oracle code paths.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence, Union

import numpy as np

Number = Union[float, Fraction]

WEIGHT_TOL = 1e-12
CRITICALITY_TOL = 1e-12
A2_GRID_POINTS = 10_000
A2_SLACK = 1e-12


class ModelError(ValueError):
    """Raised for an environment model that violates its invariants."""


def as_number(value) -> Number:
    """Parse ints, Fractions and ``"p/q"`` strings exactly; floats stay floats."""
    if isinstance(value, bool):
        raise TypeError("booleans are not numbers here")
    if isinstance(value, (Fraction, int)):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value.strip())
    return float(value)


def is_exact(value) -> bool:
    return isinstance(value, Fraction)


def exact_log(value: Number) -> float:
    """log of a positive number; rationals use log(p) - log(q) so log(1/m) == -log(m)."""
    if isinstance(value, Fraction):
        return math.log(value.numerator) - math.log(value.denominator)
    return math.log(value)


def _is_object_array(v) -> bool:
    return isinstance(v, np.ndarray) and v.dtype == object


def _number_repr(v: Number):
    if isinstance(v, Fraction):
        return str(v) if v.denominator != 1 else v.numerator
    return float(v)


# ---------------------------------------------------------------------------
# Offspring law
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OffspringLaw:
    """Geometric offspring law with mean ``m = exp(log_mean_x)``."""

    log_mean_x: float
    exact_mean: Fraction | None = None

    @classmethod
    def from_mean(cls, mean_m) -> "OffspringLaw":
        m = as_number(mean_m)
        if not m > 0:
            raise ModelError(f"offspring mean must be positive, got {m}")
        return cls(exact_log(m), m if is_exact(m) else None)

    @classmethod
    def from_log_mean(cls, x: float) -> "OffspringLaw":
        if not np.isfinite(x):
            raise ModelError("log-mean must be finite")
        return cls(float(x))

    @property
    def mean_m(self) -> float:
        with np.errstate(over="ignore"):
            return float(np.exp(self.log_mean_x))

    @property
    def f0(self) -> float:
        """F(0) = 1 / (1 + m), evaluated without overflow."""
        x = self.log_mean_x
        return 1.0 / (1.0 + math.exp(x)) if x < 0 else math.exp(-x) / (1.0 + math.exp(-x))

    @property
    def p(self) -> float:
        """m / (1 + m)."""
        x = self.log_mean_x
        return 1.0 / (1.0 + math.exp(-x)) if x > -700 else math.exp(x)

    @property
    def q(self) -> float:
        return self.f0

    def pgf(self, s):
        if self.exact_mean is not None and (isinstance(s, Fraction) or _is_object_array(s)):
            return 1 / (1 + self.exact_mean * (1 - s))
        return 1.0 / (1.0 + self.mean_m * (1.0 - np.asarray(s, dtype=float)))

    def complement(self, v):
        """1 - F(1 - v) = m v / (1 + m v)."""
        if self.exact_mean is not None and (isinstance(v, Fraction) or _is_object_array(v)):
            m = self.exact_mean
            return m * v / (1 + m * v)
        return frac_complement(self.log_mean_x, v)


def frac_complement(x, v):
    """Vectorised ``1 - F(1 - v)`` for log-means ``x``: v / (v + exp(-x)).

    Stable for |x| large: exp(-x) overflowing to inf gives 0, underflowing gives 1.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        em = np.exp(-np.asarray(x, dtype=float))
        v = np.asarray(v, dtype=float)
        out = v / (v + em)
    return np.where(v == 0.0, 0.0, out)


def frac_value(x, v):
    """Vectorised F(1 - v) = 1 / (1 + exp(x) v), accurate in relative terms near 0."""
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(np.asarray(x, dtype=float)) * np.asarray(v, dtype=float))


# ---------------------------------------------------------------------------
# Immigration law
# ---------------------------------------------------------------------------

IMMIGRATION_KINDS = ("finite_support", "at_least_one_uniform_shiftable", "custom_polynomial")


@dataclass(frozen=True)
class ImmigrationLaw:
    """Finitely supported immigration law; ``probs[k] = P(eta = k)``."""

    probs: tuple
    kind: str = "finite_support"

    def __post_init__(self):
        if self.kind not in IMMIGRATION_KINDS:
            raise ModelError(f"unknown immigration kind {self.kind!r}")
        probs = tuple(as_number(p) for p in self.probs)
        if not probs:
            raise ModelError("immigration law needs at least one probability")
        if any(p < 0 for p in probs):
            raise ModelError("immigration probabilities must be nonnegative")
        total = sum(probs)
        if all(is_exact(p) for p in probs):
            if total != 1:
                raise ModelError(f"immigration probabilities sum to {total}, not 1")
        elif abs(float(total) - 1.0) > WEIGHT_TOL:
            raise ModelError(f"immigration probabilities sum to {float(total)!r}, not 1")
        while len(probs) > 1 and probs[-1] == 0:
            probs = probs[:-1]
        object.__setattr__(self, "probs", probs)

    @classmethod
    def finite_support(cls, probs) -> "ImmigrationLaw":
        return cls(tuple(probs), "finite_support")

    @classmethod
    def uniform(cls, high: int, low: int = 1) -> "ImmigrationLaw":
        """Uniform on {low, ..., high}; ``low >= 1`` means at least one immigrant."""
        if not 0 <= low <= high:
            raise ModelError("need 0 <= low <= high")
        w = Fraction(1, high - low + 1)
        return cls(tuple([Fraction(0)] * low + [w] * (high - low + 1)), "at_least_one_uniform_shiftable")

    @classmethod
    def polynomial(cls, coefficients) -> "ImmigrationLaw":
        return cls(tuple(coefficients), "custom_polynomial")

    @property
    def exact(self) -> bool:
        return all(is_exact(p) for p in self.probs)

    @property
    def float_probs(self) -> np.ndarray:
        return np.array([float(p) for p in self.probs])

    @property
    def mean(self) -> Number:
        total = sum(k * p for k, p in enumerate(self.probs))
        return total if self.exact else float(total)

    @property
    def g0(self) -> Number:
        return self.probs[0]

    def pgf(self, s):
        if self.exact and (isinstance(s, Fraction) or _is_object_array(s)):
            acc = 0
            for p in reversed(self.probs):
                acc = acc * s + p
            return acc
        s = np.asarray(s, dtype=float)
        acc = np.zeros_like(s)
        for p in reversed(self.float_probs):
            acc = acc * s + p
        return acc

    def complement(self, v):
        """1 - G(1 - v), summed term by term to keep relative accuracy for small v."""
        if isinstance(v, Fraction) or _is_object_array(v):
            if self.exact:
                return 1 - self.pgf(1 - v)
            v = np.asarray(v, dtype=float) if _is_object_array(v) else float(v)
        v = np.asarray(v, dtype=float)
        with np.errstate(divide="ignore"):
            lv = np.log1p(-np.minimum(v, 1.0))
        out = np.zeros_like(v)
        for k, p in enumerate(self.float_probs):
            if k and p:
                out = out + p * -np.expm1(k * lv)
        return out

    def cdf_table(self) -> np.ndarray:
        c = np.cumsum(self.float_probs)
        c[-1] = 1.0
        return c

    def sample(self, rng: np.random.Generator, size=None):
        u = rng.random(size)
        return np.searchsorted(self.cdf_table(), u, side="right")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "probs": [_number_repr(p) for p in self.probs]}

    @classmethod
    def from_dict(cls, d: dict) -> "ImmigrationLaw":
        kind = d.get("kind", "finite_support")
        if kind == "at_least_one_uniform_shiftable" and "high" in d:
            return cls.uniform(int(d["high"]), int(d.get("low", 1)))
        return cls(tuple(as_number(p) for p in d["probs"]), kind)


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HypothesisParams:
    """kappa, gamma, sigma for the bound checked by validate_hypothesis_A2; epsilon for validate_hypothesis_A3."""

    kappa: Number = 0.0
    gamma: Number = 1.0
    sigma: Number = 1.0
    epsilon: Number = 1.0

    def __post_init__(self):
        for name in ("kappa", "gamma", "sigma", "epsilon"):
            object.__setattr__(self, name, as_number(getattr(self, name)))
        if not 0 <= self.kappa < 1:
            raise ModelError("kappa must lie in [0, 1)")
        if not 0 < self.gamma <= 1:
            raise ModelError("gamma must lie in (0, 1]")
        if not 0 < self.sigma <= 1:
            raise ModelError("sigma must lie in (0, 1]")
        if not self.epsilon > 0:
            raise ModelError("epsilon must be positive")

    @property
    def s_low(self) -> float:
        """Left end kappa**sigma of the interval where G(s) <= s**gamma is required."""
        return float(self.kappa) ** float(self.sigma)

    def to_dict(self) -> dict:
        return {k: _number_repr(getattr(self, k)) for k in ("kappa", "gamma", "sigma", "epsilon")}


def admissible(alpha: float, beta: float) -> bool:
    return (
        (0 < alpha < 1 and abs(beta) < 1)
        or (1 < alpha < 2 and abs(beta) <= 1)
        or (alpha == 1 and beta == 0)
        or (alpha == 2 and beta == 0)
    )


@dataclass(frozen=True)
class StableParams:
    """Stable law with characteristic function exp(-c|t|^a (1 - i b sgn(t) tan(pi a / 2)))."""

    alpha: float
    beta: float = 0.0
    scale_c: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "scale_c", float(self.scale_c))
        if not admissible(self.alpha, self.beta):
            raise ModelError(f"(alpha, beta) = ({self.alpha}, {self.beta}) is not admissible")
        if not self.scale_c > 0:
            raise ModelError("scale c must be positive")

    @property
    def rho(self) -> float:
        from .walk import rho_from_stable

        return rho_from_stable(self)

    def negated(self) -> "StableParams":
        return StableParams(self.alpha, -self.beta, self.scale_c)


def sample_stable(params: StableParams, rng: np.random.Generator, size=None) -> np.ndarray:
    """Chambers-Mallows-Stuck draws from the stable law of ``params``.

    For alpha > 1 the draws have mean zero; for alpha != 1 they are strictly stable.
    """
    # X(alpha, -beta) = -X(alpha, beta); the sign of beta (including -0.0) flips the draw
    sign = math.copysign(1.0, params.beta)
    a, b = params.alpha, abs(params.beta)
    v = np.pi * (rng.random(size) - 0.5)
    w = rng.standard_exponential(size)
    if a == 1.0:
        # only beta == 0 is admissible: Cauchy with scale c
        return sign * params.scale_c * np.tan(v)
    t = b * math.tan(math.pi * a / 2)
    shift = math.atan(t) / a
    amp = (1.0 + t * t) ** (1.0 / (2.0 * a))
    av = a * (v + shift)
    x = amp * np.sin(av) / np.cos(v) ** (1.0 / a) * (np.cos(v - av) / w) ** ((1.0 - a) / a)
    return sign * params.scale_c ** (1.0 / a) * x


def sample_stable_increment(params: StableParams, rng: np.random.Generator) -> float:
    return float(sample_stable(params, rng))


# ---------------------------------------------------------------------------
# Environment model
# ---------------------------------------------------------------------------


def _check_weights(weights: Sequence[Number], what: str) -> None:
    if not weights:
        raise ModelError(f"{what} mixture is empty")
    if any(not w > 0 for w in weights):
        raise ModelError(f"{what} mixture weights must be positive")
    total = sum(weights)
    if all(is_exact(w) for w in weights):
        if total != 1:
            raise ModelError(f"{what} weights sum to {total}")
    elif abs(float(total) - 1.0) > WEIGHT_TOL:
        raise ModelError(f"{what} weights sum to {float(total)!r}")


def _cum_weights(weights) -> np.ndarray:
    c = np.cumsum([float(w) for w in weights])
    c[-1] = 1.0
    return c


@dataclass(frozen=True)
class EnvironmentModel:
    """Law of the i.i.d. environment pairs (F, G) with independent components.

    ``offspring`` is either a tuple of ``(weight, OffspringLaw)`` atoms or a
    :class:`StableParams` describing X = log m.  ``immigration`` is a tuple of
    ``(weight, ImmigrationLaw)`` atoms; a single atom is a deterministic G.
    """

    offspring: tuple | StableParams
    immigration: tuple
    hypothesis: HypothesisParams = field(default_factory=HypothesisParams)
    name: str = ""

    def __post_init__(self):
        if not isinstance(self.offspring, StableParams):
            atoms = tuple((as_number(w), law) for w, law in self.offspring)
            _check_weights([w for w, _ in atoms], "offspring")
            drift = math.fsum(float(w) * law.log_mean_x for w, law in atoms)
            if abs(drift) > CRITICALITY_TOL:
                raise ModelError(f"offspring mixture is not critical: E[log m] = {drift!r}")
            object.__setattr__(self, "offspring", atoms)
        imm = tuple((as_number(w), law) for w, law in self.immigration)
        _check_weights([w for w, _ in imm], "immigration")
        object.__setattr__(self, "immigration", imm)

    # -- structure -------------------------------------------------------

    @property
    def offspring_kind(self) -> str:
        return "stable_log_mean" if isinstance(self.offspring, StableParams) else "finite_mixture"

    @property
    def immigration_kind(self) -> str:
        return "deterministic" if len(self.immigration) == 1 else "finite_mixture"

    @property
    def stable(self) -> StableParams | None:
        return self.offspring if isinstance(self.offspring, StableParams) else None

    @property
    def offspring_atoms(self) -> tuple:
        if self.stable is not None:
            raise ModelError("stable offspring component has no finite atom list")
        return self.offspring

    @property
    def immigration_laws(self) -> tuple:
        return tuple(law for _, law in self.immigration)

    @property
    def log_mean_atoms(self) -> np.ndarray:
        return np.array([law.log_mean_x for _, law in self.offspring_atoms])

    @property
    def exact(self) -> bool:
        """True when every weight, mean and probability is rational."""
        if self.stable is not None:
            return False
        return (
            all(is_exact(w) and law.exact_mean is not None for w, law in self.offspring)
            and all(is_exact(w) and law.exact for w, law in self.immigration)
        )

    def walk_variance(self) -> float:
        if self.stable is not None:
            return math.inf if self.stable.alpha < 2 else 2.0 * self.stable.scale_c
        return math.fsum(float(w) * law.log_mean_x ** 2 for w, law in self.offspring)

    def lattice(self) -> tuple[float, np.ndarray] | None:
        """``(span, steps)`` if every log-mean atom is an integer multiple of ``span``."""
        if self.stable is not None:
            return None
        x = self.log_mean_atoms
        nz = np.abs(x[x != 0])
        if nz.size == 0:
            return 1.0, np.zeros(x.size, dtype=np.int64)
        base = nz.min()
        for q in range(1, 13):
            h = base / q
            k = x / h
            if np.all(np.abs(k - np.round(k)) < 1e-9):
                return float(h), np.round(k).astype(np.int64)
        return None

    # -- sampling ---------------------------------------------------------

    def offspring_index(self, rng: np.random.Generator, size=None):
        return np.searchsorted(_cum_weights([w for w, _ in self.offspring_atoms]), rng.random(size), side="right")

    def sample_log_means(self, rng: np.random.Generator, size=None) -> np.ndarray:
        if self.stable is not None:
            return sample_stable(self.stable, rng, size)
        return self.log_mean_atoms[self.offspring_index(rng, size)]

    def immigration_index(self, rng: np.random.Generator, size=None):
        if len(self.immigration) == 1:
            return np.zeros(size, dtype=np.int64) if size is not None else 0
        return np.searchsorted(_cum_weights([w for w, _ in self.immigration]), rng.random(size), side="right")

    def immigration_cdf_table(self) -> np.ndarray:
        laws = self.immigration_laws
        k = max(len(law.probs) for law in laws)
        table = np.ones((len(laws), k))
        for i, law in enumerate(laws):
            c = law.cdf_table()
            table[i, : c.size] = c
        return table

    def sample_immigrants(self, law_index, rng: np.random.Generator, positive: bool = False) -> np.ndarray:
        """Draw eta for each entry of ``law_index`` by inverse CDF.

        With ``positive=True`` the draw is conditioned on eta >= 1 (the initial
        generation law).
        """
        law_index = np.asarray(law_index)
        table = self.immigration_cdf_table()[law_index]
        u = rng.random(law_index.shape)
        if positive:
            c0 = table[..., 0]
            if np.any(c0 >= 1.0):
                raise ModelError("an immigration law puts no mass on positive values")
            u = c0 + u * (1.0 - c0)
        return (u[..., None] >= table).sum(axis=-1)

    # -- transforms -------------------------------------------------------

    def negated(self) -> "EnvironmentModel":
        """The model whose walk increments are -X (means m -> 1/m, beta -> -beta)."""
        if self.stable is not None:
            off = self.stable.negated()
        else:
            off = tuple(
                (w, OffspringLaw.from_mean(1 / law.exact_mean) if law.exact_mean is not None
                 else OffspringLaw(-law.log_mean_x))
                for w, law in self.offspring
            )
        return EnvironmentModel(off, self.immigration, self.hypothesis, f"negated({self.name})")

    # -- serialisation ----------------------------------------------------

    def to_dict(self) -> dict:
        if self.stable is not None:
            off = {"kind": "stable_log_mean", "alpha": self.stable.alpha, "beta": self.stable.beta,
                   "scale": self.stable.scale_c}
        else:
            off = {"kind": "finite_mixture", "atoms": [
                {"weight": _number_repr(w),
                 "mean": _number_repr(law.exact_mean) if law.exact_mean is not None else law.mean_m}
                for w, law in self.offspring]}
        if len(self.immigration) == 1:
            imm = {"kind": "deterministic", "law": self.immigration[0][1].to_dict()}
        else:
            imm = {"kind": "finite_mixture", "atoms": [
                {"weight": _number_repr(w), "law": law.to_dict()} for w, law in self.immigration]}
        return {"name": self.name, "offspring": off, "immigration": imm, "hypothesis": self.hypothesis.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "EnvironmentModel":
        try:
            off = d["offspring"]
            if off["kind"] == "stable_log_mean":
                offspring = StableParams(off["alpha"], off.get("beta", 0.0), off.get("scale", 1.0))
            elif off["kind"] == "finite_mixture":
                offspring = tuple(
                    (a["weight"], OffspringLaw.from_mean(a["mean"]) if "mean" in a
                     else OffspringLaw.from_log_mean(float(a["log_mean"])))
                    for a in off["atoms"]
                )
            else:
                raise ModelError(f"unknown offspring kind {off['kind']!r}")
            imm = d["immigration"]
            if imm["kind"] == "deterministic":
                immigration = ((1, ImmigrationLaw.from_dict(imm["law"])),)
            elif imm["kind"] == "finite_mixture":
                immigration = tuple((a["weight"], ImmigrationLaw.from_dict(a["law"])) for a in imm["atoms"])
            else:
                raise ModelError(f"unknown immigration kind {imm['kind']!r}")
            hyp = HypothesisParams(**d.get("hypothesis", {}))
        except (KeyError, TypeError) as exc:
            raise ModelError(f"malformed model document: {exc!r}") from exc
        return cls(offspring, immigration, hyp, d.get("name", ""))

    @classmethod
    def from_json(cls, path) -> "EnvironmentModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------

EXAMPLE2_G = ImmigrationLaw.finite_support((Fraction(1, 3), Fraction(0), Fraction(2, 3)))


def example2() -> EnvironmentModel:
    """m in {63, 1/63} with probability 1/2 each and G(s) = (2/3)s^2 + 1/3."""
    half = Fraction(1, 2)
    return EnvironmentModel(
        ((half, OffspringLaw.from_mean(63)), (half, OffspringLaw.from_mean(Fraction(1, 63)))),
        ((1, EXAMPLE2_G),),
        HypothesisParams(Fraction(1, 64), Fraction(1, 3), Fraction(1, 2), 1),
        "example2",
    )


def deterministic_critical() -> EnvironmentModel:
    return EnvironmentModel(
        ((1, OffspringLaw.from_mean(1)),),
        ((1, EXAMPLE2_G),),
        HypothesisParams(Fraction(1, 64), Fraction(1, 3), Fraction(1, 2), 1),
        "deterministic-critical",
    )


def stable_preset(alpha: float, beta: float, scale_c: float = 1.0) -> EnvironmentModel:
    """Stable log-means with one immigrant per allowed generation (G(s) = s)."""
    return EnvironmentModel(
        StableParams(alpha, beta, scale_c),
        ((1, ImmigrationLaw.finite_support((0, 1))),),
        HypothesisParams(0, 1, 1, 1),
        f"stable({alpha:g},{beta:g})",
    )


_STABLE_RE = re.compile(r"^stable\(\s*([-+0-9.eE/]+)\s*,\s*([-+0-9.eE/]+)\s*\)$")

PRESETS = ("example2", "deterministic-critical", "stable(alpha,beta)")


def preset(name: str) -> EnvironmentModel:
    if name == "example2":
        return example2()
    if name == "deterministic-critical":
        return deterministic_critical()
    m = _STABLE_RE.match(name.strip())
    if m:
        return stable_preset(float(Fraction(m.group(1))), float(Fraction(m.group(2))))
    raise KeyError(name)


# ---------------------------------------------------------------------------
# Sampling a single environment step
# ---------------------------------------------------------------------------


def sample_environment_step(model: EnvironmentModel, rng: np.random.Generator) -> tuple[OffspringLaw, ImmigrationLaw]:
    """Draw one (F, G) pair; the two components are drawn independently."""
    if model.stable is not None:
        f = OffspringLaw.from_log_mean(float(sample_stable(model.stable, rng)))
    else:
        f = model.offspring_atoms[int(model.offspring_index(rng))][1]
    g = model.immigration_laws[int(model.immigration_index(rng))]
    return f, g


# ---------------------------------------------------------------------------
# Hypothesis checks
# ---------------------------------------------------------------------------


@dataclass
class A2Report:
    passed: bool
    worst_margin: float
    worst_s: float
    offspring_margin: float
    analytic: bool | None
    grid_passed: bool
    notes: list = field(default_factory=list)


def _analytic_ineq1(law: ImmigrationLaw, gamma: Fraction, kappa: Fraction, sigma: Fraction) -> tuple[bool, str]:
    """Exact check of s**gamma - G(s) >= 0 on [kappa**sigma, 1] for rational gamma.

    With gamma = p/q and s = t**q the inequality becomes P(t) = t**p - G(t**q) >= 0
    on [t_low, 1].  Real roots of P are isolated exactly; the sign of P is constant
    between roots, so probing every isolating-interval end and the gaps between
    them decides the inequality.
    """
    import sympy as sp

    p, q = gamma.numerator, gamma.denominator
    t = sp.Symbol("t")
    g = sum(sp.Rational(c.numerator, c.denominator) * t ** (q * k) for k, c in enumerate(law.probs))
    poly = sp.Poly(t ** p - g, t)
    lo = sp.Rational(kappa.numerator, kappa.denominator) ** (sp.Rational(sigma.numerator, sigma.denominator) / q)
    note = ""
    if lo.is_rational:
        t_lo = sp.Rational(lo)
    else:
        # a rational lower bound only enlarges the interval, so a pass stays a pass
        t_lo = sp.Rational(math.floor(float(lo) * 2 ** 52), 2 ** 52)
        note = "irrational left endpoint replaced by a rational lower bound"
    one = sp.Integer(1)
    probes = {t_lo, one}
    for (a, b), _ in poly.intervals(eps=sp.Rational(1, 10 ** 12)):
        for x in (a, b):
            if t_lo <= x <= one:
                probes.add(x)
    probes = sorted(probes)
    probes += [(a + b) / 2 for a, b in zip(probes[:-1], probes[1:])]
    return all(poly.eval(x) >= 0 for x in probes), note


def validate_hypothesis_A2(model: EnvironmentModel, grid_points: int = A2_GRID_POINTS) -> A2Report:
    """Check F(0) >= kappa and G(s) <= s**gamma on [kappa**sigma, 1].

    The offspring part is checked per atom from F(0) = 1/(1+m).  The immigration
    part is checked on a uniform grid and, for rational gamma and exact G, by
    exact polynomial root isolation; the exact verdict dominates the grid.
    """
    h = model.hypothesis
    notes = []
    if model.stable is not None:
        # stable log-means make F(0) arbitrarily small with positive probability
        off_margin = -float(h.kappa) if h.kappa > 0 else 0.0
        if h.kappa > 0:
            notes.append("stable offspring component forces kappa = 0")
    else:
        off_margin = min(law.f0 - float(h.kappa) for _, law in model.offspring_atoms)
    s_low = h.s_low
    grid = np.linspace(s_low, 1.0, grid_points)
    gamma = float(h.gamma)
    worst, worst_s = math.inf, 1.0
    grid_ok = True
    analytic = None
    for law in model.immigration_laws:
        margin = grid ** gamma - law.pgf(grid)
        i = int(np.argmin(margin))
        if margin[i] < worst:
            worst, worst_s = float(margin[i]), float(grid[i])
        if margin[i] < -A2_SLACK:
            grid_ok = False
        if is_exact(h.gamma) and law.exact and is_exact(h.kappa) and is_exact(h.sigma):
            ok, note = _analytic_ineq1(law, h.gamma, h.kappa, h.sigma)
            if note:
                notes.append(note)
            analytic = ok if analytic is None else (analytic and ok)
    if analytic is None:
        notes.append("no exact polynomial check available; grid result only")
    passed = off_margin >= -A2_SLACK and (analytic if analytic is not None else grid_ok)
    return A2Report(passed, worst, worst_s, off_margin, analytic, grid_ok, notes)


@dataclass
class A3Report:
    passed: bool
    status: str
    rho_used: float | None
    epsilon: float
    assumptions: list = field(default_factory=list)
    notes: list = field(default_factory=list)


def validate_hypothesis_A3(model: EnvironmentModel, immigration_log_tail=None) -> A3Report:
    """Moment conditions on log+ G'(1) and the Doney-Spitzer parameter.

    ``immigration_log_tail`` describes a parametric law of G'(1) through the
    index ``a`` of P(log G'(1) > x) ~ x**(-a): a number gives a closed-form
    verdict, ``"unknown"`` yields status ``"unverified"``.  Finitely many values
    of G'(1) make both moments finite for every epsilon.
    """
    eps = float(model.hypothesis.epsilon)
    assumptions = ["nonlattice distribution of X is declared, not verified"]
    notes = []
    lat = model.lattice()
    if lat is not None:
        notes.append("walk increments are lattice")
    if model.stable is not None:
        rho = model.stable.rho
    elif model.walk_variance() > 0:
        rho = 0.5  # finite support: finite variance and zero mean, so the CLT gives 1/2
    else:
        return A3Report(False, "fail", None, eps, assumptions, notes + ["degenerate walk X = 0 does not oscillate"])
    if immigration_log_tail is None:
        return A3Report(True, "pass", rho, eps, assumptions, notes + ["G'(1) takes finitely many values"])
    if isinstance(immigration_log_tail, str):
        return A3Report(False, "unverified", rho, eps, assumptions, notes + ["no closed form for the moment integrals"])
    a = float(immigration_log_tail)
    first = 1.0 / rho + eps
    # E[(U(X) log+ G'(1))^(1+eps)] factorises; U(X)^(1+eps) is integrable for these offspring laws
    second = 1.0 + eps
    ok = first < a and second < a
    if not ok:
        notes.append(f"E(log+ G'(1))^p diverges for p >= {a:g}; needed p = {first:g} and {second:g}")
    return A3Report(ok, "pass" if ok else "fail", rho, eps, assumptions, notes)
