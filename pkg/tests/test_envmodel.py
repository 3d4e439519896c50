import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lifeperiod.envmodel import (
    EXAMPLE2_G,
    EnvironmentModel,
    HypothesisParams,
    ImmigrationLaw,
    ModelError,
    OffspringLaw,
    StableParams,
    deterministic_critical,
    example2,
    preset,
    sample_environment_step,
    sample_stable,
    sample_stable_increment,
    stable_preset,
    validate_hypothesis_A2,
    validate_hypothesis_A3,
)
from lifeperiod.rng import stream

G_NONE = ImmigrationLaw.finite_support((1,))
G_ONE = ImmigrationLaw.finite_support((0, 1))


def single_law_model(g, kappa=0, gamma=1, sigma=1):
    return EnvironmentModel(((1, OffspringLaw.from_mean(1)),), ((1, g),), HypothesisParams(kappa, gamma, sigma, 1))


# -- offspring law ----------------------------------------------------------


@settings(max_examples=50)
@given(st.floats(min_value=1e-6, max_value=1e6), st.integers(0, 2**32 - 1))
def test_pgf_forms_agree(m, seed):
    law = OffspringLaw.from_mean(m)
    s = np.random.default_rng(seed).random(100)
    p, q = law.p, law.q
    assert math.isclose(law.f0, 1 / (1 + m), rel_tol=1e-14)
    assert math.isclose(law.log_mean_x, math.log(m), rel_tol=1e-14, abs_tol=1e-15)
    assert math.isclose(p, m / (1 + m), rel_tol=1e-14) and math.isclose(p + q, 1.0, rel_tol=1e-15)
    # 1 - ps = q + p(1 - s); the left side loses about log10(m) digits near s = 1
    np.testing.assert_allclose(law.pgf(s), q / (q + p * (1 - s)), rtol=1e-14)
    np.testing.assert_allclose(law.pgf(s), 1 / (1 + m * (1 - s)), rtol=1e-14)


@given(st.floats(min_value=1e-3, max_value=1e3))
def test_pgf_monotone_between_f0_and_one(m):
    law = OffspringLaw.from_mean(m)
    vals = law.pgf(np.linspace(0, 1, 101))
    assert np.all(np.diff(vals) >= 0)
    assert vals[0] == pytest.approx(law.f0) and vals[-1] == 1.0


def test_offspring_rejects_nonpositive_mean():
    with pytest.raises(ModelError):
        OffspringLaw.from_mean(0)


def test_exact_offspring_arithmetic():
    law = OffspringLaw.from_mean(63)
    assert law.pgf(Fraction(0)) == Fraction(1, 64)
    assert law.complement(Fraction(1, 2)) == Fraction(63, 65)


# -- immigration law --------------------------------------------------------


def test_immigration_probabilities_validated():
    with pytest.raises(ModelError):
        ImmigrationLaw.finite_support((0.5, 0.4))
    with pytest.raises(ModelError):
        ImmigrationLaw.finite_support((1.2, -0.2))
    ImmigrationLaw.finite_support((0.5, 0.5 + 1e-13))


def test_immigration_kinds_and_mean():
    u = ImmigrationLaw.uniform(3)
    assert u.kind == "at_least_one_uniform_shiftable"
    assert u.g0 == 0 and u.mean == 2
    assert EXAMPLE2_G.mean == Fraction(4, 3)
    assert ImmigrationLaw.polynomial((Fraction(1, 2), Fraction(1, 2))).kind == "custom_polynomial"


@given(st.lists(st.floats(min_value=0, max_value=1), min_size=1, max_size=6).filter(lambda p: sum(p) > 0.1))
def test_immigration_pgf_convex_monotone(raw):
    total = sum(raw)
    probs = [p / total for p in raw]
    probs[-1] = 1 - sum(probs[:-1])
    if probs[-1] < 0:
        return
    law = ImmigrationLaw.finite_support(probs)
    s = np.linspace(0, 1, 201)
    g = law.pgf(s)
    assert g[-1] == pytest.approx(1.0, abs=1e-12)
    assert np.all(np.diff(g) >= -1e-15)
    assert np.all(np.diff(g, 2) >= -1e-12)
    np.testing.assert_allclose(law.complement(1 - s), 1 - g, atol=1e-14)


# -- presets and sampling ---------------------------------------------------


def test_presets_resolve():
    assert preset("example2").name == "example2"
    assert preset("deterministic-critical").offspring_atoms[0][1].mean_m == 1
    st_ = preset("stable(1.5,1)").stable
    assert (st_.alpha, st_.beta) == (1.5, 1.0)
    with pytest.raises(KeyError):
        preset("no-such-model")


def test_example2_step_distribution():
    model = example2()
    gen = stream(11, "env-test")
    means = []
    for _ in range(10_000):
        f, g = sample_environment_step(model, gen)
        assert g == EXAMPLE2_G
        means.append(f.exact_mean)
    assert set(means) == {Fraction(63), Fraction(1, 63)}
    k = sum(m == 63 for m in means)
    assert abs(k - 5000) <= 4 * math.sqrt(2500)


def test_deterministic_step():
    model = deterministic_critical()
    gen = stream(1)
    for _ in range(20):
        f, g = sample_environment_step(model, gen)
        assert f.mean_m == 1 and g == EXAMPLE2_G


def test_gaussian_log_mean_is_centered():
    x = stable_preset(2, 0).sample_log_means(stream(5, "gauss"), 1_000_000)
    assert abs(x.mean()) <= 4 * x.std() / 1000


def test_gaussian_variance_is_2c():
    for c in (1.0, 0.5):
        x = sample_stable(StableParams(2, 0, c), stream(3, f"var{c}"), 1_000_000)
        assert x.var() == pytest.approx(2 * c, rel=0.01)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5, 2.0])
def test_symmetric_stable_half_positive(alpha):
    x = sample_stable(StableParams(alpha, 0), stream(4, f"sym{alpha}"), 200_000)
    p = np.mean(x > 0)
    assert abs(p - 0.5) <= 4 * math.sqrt(0.25 / x.size)


def test_single_stable_increment_is_scalar():
    v = sample_stable_increment(StableParams(1.5, 0.5), stream(9))
    assert isinstance(v, float) and math.isfinite(v)


def test_stable_sampler_negation_symmetry():
    p = StableParams(1.5, 0.7)
    a = sample_stable(p, stream(2, "neg"), 1000)
    b = sample_stable(p.negated(), stream(2, "neg"), 1000)
    np.testing.assert_array_equal(a, -b)


@pytest.mark.parametrize("alpha,beta", [(1.0, 0.5), (2.0, 0.1), (0.5, 1.0), (0.5, -1.0), (2.5, 0.0), (0.0, 0.0)])
def test_inadmissible_stable_rejected(alpha, beta):
    with pytest.raises(ModelError):
        StableParams(alpha, beta)


def test_same_stream_same_draws():
    model = example2()
    a = model.sample_log_means(stream(123, "det"), 500)
    b = model.sample_log_means(stream(123, "det"), 500)
    np.testing.assert_array_equal(a, b)


def test_criticality_enforced():
    with pytest.raises(ModelError):
        EnvironmentModel(((1, OffspringLaw.from_mean(2)),), ((1, G_ONE),))


def test_weights_must_sum_to_one():
    with pytest.raises(ModelError):
        EnvironmentModel(
            ((0.5, OffspringLaw.from_mean(2)), (0.4, OffspringLaw.from_mean(0.5))),
            ((1, G_ONE),),
        )


def test_json_roundtrip(tmp_path):
    for model in (example2(), stable_preset(1.5, -0.5, 2.0)):
        path = tmp_path / "m.json"
        path.write_text(json.dumps(model.to_dict()))
        back = EnvironmentModel.from_json(path)
        assert back.to_dict() == model.to_dict()


def test_lattice_detection():
    span, steps = example2().lattice()
    assert span == pytest.approx(math.log(63))
    assert sorted(steps.tolist()) == [-1, 1]
    assert stable_preset(2, 0).lattice() is None


# -- hypothesis A2 ------------------------------------------------------------


def test_a2_example2_passes():
    rep = validate_hypothesis_A2(example2())
    assert rep.passed and rep.analytic
    h = example2().hypothesis
    assert (h.kappa, h.gamma, h.sigma) == (Fraction(1, 64), Fraction(1, 3), Fraction(1, 2))


def test_a2_one_immigrant_passes():
    assert validate_hypothesis_A2(single_law_model(G_ONE)).passed


@pytest.mark.parametrize("gamma", [Fraction(1, 3), Fraction(1, 2), 1])
def test_a2_no_immigrants_fails(gamma):
    rep = validate_hypothesis_A2(single_law_model(G_NONE, gamma=gamma))
    assert not rep.passed
    assert rep.worst_s < 1


def test_a2_offspring_margin():
    # m = 63 gives F(0) = 1/64, so kappa = 1/32 must fail
    model = EnvironmentModel(
        example2().offspring,
        ((1, EXAMPLE2_G),),
        HypothesisParams(Fraction(1, 32), Fraction(1, 3), Fraction(1, 2), 1),
    )
    rep = validate_hypothesis_A2(model)
    assert not rep.passed and rep.offspring_margin < 0


def test_a2_grid_refinement_never_overturns_exact_verdict():
    for model in (example2(), single_law_model(G_NONE), single_law_model(G_ONE)):
        verdicts = {validate_hypothesis_A2(model, grid_points=g).passed for g in (11, 1000, 100_000)}
        assert len(verdicts) == 1


def test_a2_exact_check_dominates_grid_slack():
    # G(s) = e + (1 - e)s misses s by e(1 - s): inside the grid slack, but a real violation
    e = Fraction(1, 10**14)
    model = single_law_model(ImmigrationLaw.finite_support((e, 1 - e)))
    rep = validate_hypothesis_A2(model)
    assert rep.grid_passed and rep.analytic is False and not rep.passed


def test_a2_tight_equality_passes():
    rep = validate_hypothesis_A2(single_law_model(G_ONE))
    assert rep.worst_margin == pytest.approx(0.0, abs=1e-15) and rep.passed


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 20), st.integers(0, 20), st.integers(1, 20), st.sampled_from([Fraction(1, 3), Fraction(1, 2), 1]))
def test_a2_grid_and_exact_agree_on_random_laws(a, b, c, gamma):
    total = a + b + c
    g = ImmigrationLaw.finite_support((Fraction(a, total), Fraction(b, total), Fraction(c, total)))
    rep = validate_hypothesis_A2(single_law_model(g, kappa=Fraction(1, 64), gamma=gamma, sigma=Fraction(1, 2)))
    if abs(rep.worst_margin) > 1e-9:
        assert rep.grid_passed == rep.analytic


# -- hypothesis A3 ------------------------------------------------------------


def test_a3_example2_passes():
    rep = validate_hypothesis_A3(example2())
    assert rep.passed and rep.rho_used == 0.5


def test_a3_log_tail_index_one_fails_for_all_eps():
    for eps in (1e-3, 0.5, 2.0):
        model = EnvironmentModel(
            example2().offspring, ((1, EXAMPLE2_G),), HypothesisParams(Fraction(1, 64), Fraction(1, 3), Fraction(1, 2), eps)
        )
        rep = validate_hypothesis_A3(model, immigration_log_tail=1.0)
        assert not rep.passed and rep.status == "fail"


def test_a3_deterministic_g_passes_and_unknown_tail_unverified():
    model = stable_preset(1.5, 1)
    rep = validate_hypothesis_A3(model)
    assert rep.passed and rep.rho_used == pytest.approx(1 / 3)
    assert validate_hypothesis_A3(model, immigration_log_tail="unknown").status == "unverified"
    assert any("nonlattice" in a for a in rep.assumptions)


def test_a3_degenerate_walk_fails():
    assert not validate_hypothesis_A3(deterministic_critical()).passed
