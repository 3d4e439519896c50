"""Life-period tails of critical branching processes with immigration stopped at zero
in a random environment with geometric offspring laws.

P(zeta > n) is computed by direct simulation, by exact enumeration of the
conditional generating functions and by the renewal recursion; helper modules
cover the associated random walk and power-law diagnostics.
"""
from .envmodel import (
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
    sample_stable_increment,
    stable_preset,
    validate_hypothesis_A2,
    validate_hypothesis_A3,
)
from .gfalg import EnvRealization, FracLinear, compose_backward, compose_forward, conditional_pgf_N, product_C
from .renewal import RenewalSeries, check_series_identity, exact_series, mc_series, solve_recursion, theta_functional
from .simulate import TailEstimate, TrajectorySample, estimate_tail, simulate_W, simulate_Y, simulate_Z, step_offspring_total
from .walk import (
    WalkPath,
    check_harmonic_identity,
    estimate_U,
    ladder_probability,
    path_statistics,
    rho_from_stable,
    spitzer_rho_empirical,
)
from .analyze import ExponentFit, fit_exponent, mann_kendall, tauberian_check, theta_ratio

__version__ = "0.1.0"
