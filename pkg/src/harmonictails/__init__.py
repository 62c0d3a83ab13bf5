"""Positive harmonic functions of banded kernels on the nonnegative integers
and exact-order tail asymptotics of stationary distributions."""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    ConvergenceError,
    DegenerateRowError,
    HarmonicTailsError,
    InconsistentRootError,
    InternalConsistencyError,
    NoCramerRootError,
    NoPositiveHarmonicError,
    SolverFailure,
    StateRangeError,
    UnsupportedInputError,
)
from .kernels import (
    HomogeneousTail,
    ParametricTail,
    StochasticKernel,
    TransitionKernel,
    kernel_from_rows,
)
from .ladder import (
    LadderData,
    LatticeWalk,
    cramer_root,
    equivalence_multiplier,
    ladder_harmonic,
    ladder_height,
    renewal_mass,
    ruin_exponent,
    tilt_walk,
    tilted_minimum_harmonic,
)
from .harmonic import (
    ConditionReport,
    HarmonicEstimate,
    build_mc,
    build_solve,
    check_conditions,
    drift_verdict,
    escape_probability,
    expected_local_times_mc,
    jump_down_majorant,
    jump_minorant,
    limit_theorem_verdict,
    local_time_moment_mc,
    minorant_verdict,
    reflected_walk_harmonic_exact,
    return_probability_bounds,
    verify_harmonicity,
)
from .chains import (
    AlternatingAlpha,
    ChainFamily,
    PowerAlpha,
    alternating_drift_chain,
    lindley_chain,
    multi_perturbed_walk,
    perturbed_reflected_walk,
    power_drift_chain,
    walk_killed_at_negative,
)
from .stationary import (
    StationaryResult,
    TailFit,
    TailModel,
    birth_death_closed_form,
    birth_death_rates,
    build_beta_fn,
    cramer_coefficients,
    cramer_series_residual,
    doob_transform,
    entry_measure,
    renewal_measure,
    stationary_solve,
    tail_extract,
)

__all__ = [
    "__version__",
    # errors
    "HarmonicTailsError",
    "StateRangeError",
    "DegenerateRowError",
    "NoCramerRootError",
    "InconsistentRootError",
    "NoPositiveHarmonicError",
    "SolverFailure",
    "ConvergenceError",
    "InternalConsistencyError",
    "UnsupportedInputError",
    "ConfigError",
    # kernels
    "TransitionKernel",
    "StochasticKernel",
    "HomogeneousTail",
    "ParametricTail",
    "kernel_from_rows",
    # ladder machinery
    "LatticeWalk",
    "LadderData",
    "cramer_root",
    "ruin_exponent",
    "tilt_walk",
    "ladder_height",
    "renewal_mass",
    "ladder_harmonic",
    "tilted_minimum_harmonic",
    "equivalence_multiplier",
    # harmonic construction
    "HarmonicEstimate",
    "ConditionReport",
    "build_solve",
    "build_mc",
    "check_conditions",
    "jump_minorant",
    "jump_down_majorant",
    "escape_probability",
    "return_probability_bounds",
    "local_time_moment_mc",
    "expected_local_times_mc",
    "minorant_verdict",
    "drift_verdict",
    "limit_theorem_verdict",
    "reflected_walk_harmonic_exact",
    "verify_harmonicity",
    # chain families
    "ChainFamily",
    "PowerAlpha",
    "AlternatingAlpha",
    "perturbed_reflected_walk",
    "multi_perturbed_walk",
    "walk_killed_at_negative",
    "lindley_chain",
    "alternating_drift_chain",
    "power_drift_chain",
    # stationary analysis
    "StationaryResult",
    "TailFit",
    "TailModel",
    "stationary_solve",
    "birth_death_closed_form",
    "birth_death_rates",
    "tail_extract",
    "cramer_coefficients",
    "cramer_series_residual",
    "build_beta_fn",
    "entry_measure",
    "doob_transform",
    "renewal_measure",
]
