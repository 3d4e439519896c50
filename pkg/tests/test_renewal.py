import math
from fractions import Fraction

import numpy as np
import pytest

from lifeperiod.envmodel import EXAMPLE2_G, EnvironmentModel, ImmigrationLaw, ModelError, OffspringLaw, deterministic_critical, example2
from lifeperiod.renewal import (
    check_series_identity,
    enumeration_cost,
    exact_series,
    mc_series,
    solve_recursion,
    solve_recursion_values,
    theta_functional,
)
from lifeperiod.walk import ladder_probability


def two_atom_model(r, a, b, immigration):
    """Critical mixture of means r^a and r^-b with weights b/(a+b), a/(a+b)."""
    off = (
        (Fraction(b, a + b), OffspringLaw.from_mean(Fraction(r) ** a)),
        (Fraction(a, a + b), OffspringLaw.from_mean(Fraction(r) ** -b)),
    )
    return EnvironmentModel(off, immigration)


RANDOM_MODELS = [
    two_atom_model(3, 1, 1, ((1, EXAMPLE2_G),)),
    two_atom_model(2, 1, 2, ((1, ImmigrationLaw.finite_support((Fraction(1, 4), Fraction(1, 2), Fraction(1, 4)))),)),
    two_atom_model(
        Fraction(5, 2),
        2,
        1,
        (
            (Fraction(1, 3), ImmigrationLaw.finite_support((Fraction(1, 2), Fraction(1, 2)))),
            (Fraction(2, 3), ImmigrationLaw.finite_support((Fraction(1, 5), 0, Fraction(4, 5)))),
        ),
    ),
]


# -- exact backend on the unit-mean preset ---------------------------------------------


def test_unit_mean_hand_values():
    s = exact_series(deterministic_critical(), 3)
    ex = s.exact
    assert ex["d"][0] == 1 and ex["d"][1] == Fraction(1, 2)
    assert ex["h_star"][0] == Fraction(3, 4) and ex["h_star"][1] == Fraction(5, 18)
    assert ex["r"][0] == Fraction(3, 4) and ex["r"][1] == Fraction(47, 72)
    assert ex["r_enumeration"][:2] == [Fraction(3, 4), Fraction(47, 72)]


def test_recursion_base_and_second_step():
    h = [Fraction(1, 2)]
    hs = [Fraction(3, 4), Fraction(5, 18)]
    assert solve_recursion_values(h, hs, 2) == [Fraction(3, 4), Fraction(47, 72)]


# -- the central oracle -----------------------------------------------------------


def test_example2_recursion_equals_enumeration(example2_exact):
    ex = example2_exact.exact
    assert ex["r"] == ex["r_enumeration"]
    np.testing.assert_allclose(example2_exact.r, example2_exact.r_enumeration, rtol=1e-10)


@pytest.mark.parametrize("model", RANDOM_MODELS, ids=["r3", "r2-three-point", "two-laws"])
def test_random_models_recursion_equals_enumeration(model):
    s = exact_series(model, 5)
    assert s.exact["r"] == s.exact["r_enumeration"]
    assert s.exact["d"] == s.exact["d_backward"]


def test_float_enumeration_tracks_exact(example2_exact):
    f = exact_series(example2(), 10, exact=False)
    np.testing.assert_allclose(f.r, example2_exact.r, rtol=1e-10)
    np.testing.assert_allclose(f.r_enumeration, example2_exact.r_enumeration, rtol=1e-10)


def test_d_reversal_identity(example2_exact):
    assert example2_exact.exact["d"] == example2_exact.exact["d_backward"]


def test_structural_invariants(example2_exact):
    ex = example2_exact.exact
    d, h = ex["d"], ex["h"]
    assert d[0] == 1 and all(0 < v <= 1 for v in d)
    assert all(a >= b for a, b in zip(d, d[1:]))
    assert all(v >= 0 for v in h) and all(h[n] == d[n] - d[n + 1] for n in range(len(h)))
    assert all(sum(h[: N + 1]) == 1 - d[N + 1] for N in range(len(h)))
    r = ex["r"]
    assert all(0 < v <= 1 for v in r) and all(a >= b for a, b in zip(r, r[1:]))


def test_series_identity_exact(example2_exact):
    assert check_series_identity(example2_exact, 10).max_residual <= 1e-9
    assert check_series_identity(example2_exact, 1).max_residual == 0.0


def test_solve_recursion_on_series(example2_exact):
    np.testing.assert_array_equal(solve_recursion(example2_exact), example2_exact.r)


def test_budget_refusal():
    with pytest.raises(ModelError, match=str(enumeration_cost(example2(), 30))):
        exact_series(example2(), 30)
    with pytest.raises(ModelError):
        exact_series(example2(), 12, budget=100)


def test_stable_model_not_enumerable():
    from lifeperiod.envmodel import stable_preset

    with pytest.raises(ModelError):
        exact_series(stable_preset(2, 0), 3)


def test_rows_and_columns(example2_exact):
    rows = list(example2_exact.rows())
    assert len(rows[0]) == len(example2_exact.columns())
    assert example2_exact.columns()[0] == "n"


# -- Monte Carlo backend -------------------------------------------------------------


def test_mc_matches_exact(example2_exact):
    mc = mc_series(example2(), 10, 200_000, seed=1)
    for name in ("d", "h_star"):
        z = np.abs(getattr(mc, name) - getattr(example2_exact, name)) / np.maximum(getattr(mc, name + "_stderr"), 1e-300)
        assert np.all(z[1:] <= 4), name
    assert mc.d[0] == 1.0 and mc.d_stderr[0] == 0.0


def test_mc_isotonic_projection_reported():
    mc = mc_series(example2(), 40, 2000, seed=2)
    assert np.all(np.diff(mc.d_isotonic) <= 0)
    assert mc.isotonic_distance == pytest.approx(np.max(np.abs(mc.d_isotonic - mc.d)))
    np.testing.assert_array_equal(mc.h, mc.d[:-1] - mc.d[1:])


def test_mc_deterministic_environment_is_exact():
    ex = exact_series(deterministic_critical(), 8)
    mc = mc_series(deterministic_critical(), 8, 5000, seed=3)
    assert np.all(mc.d_stderr == 0) and np.all(mc.h_star_stderr == 0)
    np.testing.assert_allclose(mc.d, ex.d, rtol=1e-15, atol=0)
    np.testing.assert_allclose(mc.r, ex.r, rtol=1e-14, atol=0)


def test_mc_identity_residuals_within_stderr(example2_exact):
    mc = mc_series(example2(), 10, 100_000, seed=4)
    chk = check_series_identity(mc, 10, r=example2_exact.r_enumeration)
    assert np.all(np.abs(chk.residuals[1:]) <= 3 * chk.stderr[1:])


def test_mc_unbiased_over_runs(example2_exact):
    runs = np.array([np.concatenate([m.d, m.h_star]) for m in (mc_series(example2(), 10, 1000, seed=100 + k) for k in range(100))])
    exact = np.concatenate([example2_exact.d, example2_exact.h_star])
    mean = runs.mean(axis=0)
    se = runs.std(axis=0, ddof=1) / math.sqrt(runs.shape[0])
    live = se > 0
    assert np.all(np.abs(mean - exact)[live] <= 3 * se[live])
    np.testing.assert_allclose(mean[~live], exact[~live], atol=1e-15)


def test_mc_needs_replicas():
    with pytest.raises(ValueError):
        mc_series(example2(), 5, 999, seed=1)


def test_mc_worker_independence():
    a = mc_series(example2(), 12, 70_000, seed=5, workers=1)
    b = mc_series(example2(), 12, 70_000, seed=5, workers=3)
    assert a.d.tobytes() == b.d.tobytes() and a.r.tobytes() == b.r.tobytes()


# -- theta functional --------------------------------------------------------------


def test_theta_at_zero_steps():
    t = theta_functional(example2(), 0, 0.3, 1000, seed=1)
    assert t.theta == 1.0 and t.ladder == 1.0


@pytest.mark.parametrize("s", [0.0, 0.5, 0.9])
def test_theta_bounded_by_reflected_ladder(s):
    for n in (1, 5, 30):
        t = theta_functional(example2(), n, s, 20_000, seed=2)
        assert 0 <= t.theta <= t.ladder <= 1


def test_theta_ladder_matches_reflected_ladder():
    n = 25
    t = theta_functional(example2(), n, 0.0, 50_000, seed=3)
    lad = ladder_probability(example2(), [n], 50_000, seed=4, reflected=True)
    assert abs(t.ladder - lad.estimate[0]) <= 4 * math.hypot(t.ladder_stderr, lad.stderr[0])


def test_theta_rejects_s_one():
    with pytest.raises(ValueError):
        theta_functional(example2(), 3, 1.0, 1000, seed=1)
