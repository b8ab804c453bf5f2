"""Non-Markovian quantum jump simulation of open-system dynamics.

A piecewise deterministic process over pure states: deterministic
non-Hermitian drift punctuated by stochastic jumps whose rates may turn
negative, in which case jumps run in reverse between ensemble members.
The package provides the stochastic engine (stepwise and waiting-time
based), exact waiting-time distributions, a time-convolutionless
master-equation integrator for verification, and reference three-or-fewer
level systems coupled to a Lorentzian reservoir.
"""

from .deterministic import DEFAULT_STEP, PropagationResult, \
    effective_hamiltonian, propagate
from .ensemble import CohortEstimate, RunResult, SampleMatrix, \
    ensemble_average, estimate_wtd, run_stepwise, run_wtd_based
from .jump_process import DecompositionState, DivergenceError, JumpEdge, \
    build_jump_edges, resolve_jump_edges, target_distribution, \
    total_jump_rate
from .linalg import DensityMatrix, PureState, ZeroNormError, basis_state, \
    hermitian_eigenvalues, normalize, outer_product_sum
from .master_equation import DecompositionHistory, MasterEqSolution, \
    analytic_history, analytic_probabilities, integrate_tcl
from .rates import SignSegmentation, SpectralDensityParams, constant_rate, \
    cumulative_rate, load_rate_table, make_tcl4_rate, rate_table, \
    sign_segments, split_rate, tcl2_decay_rate, tcl4_asymptotic_rate, \
    tcl4_decay_rate
from .systems import Channel, RunPreset, SystemModel, PRESET_NAMES, \
    ladder_system, lambda_system, load_model_file, preset, two_level_atom
from .wtd import WTDCurve, sample_waiting_time, wtd_markovian, \
    wtd_product_negative_regions, wtd_solve, wtd_solve_ode, \
    wtd_source_only, wtd_tla_regions, write_curve_csv

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_STEP", "PropagationResult", "effective_hamiltonian",
    "propagate",
    "CohortEstimate", "RunResult", "SampleMatrix", "ensemble_average",
    "estimate_wtd", "run_stepwise", "run_wtd_based",
    "DecompositionState", "DivergenceError", "JumpEdge", "build_jump_edges",
    "resolve_jump_edges", "target_distribution", "total_jump_rate",
    "DensityMatrix", "PureState", "ZeroNormError", "basis_state",
    "hermitian_eigenvalues", "normalize", "outer_product_sum",
    "DecompositionHistory", "MasterEqSolution", "analytic_history",
    "analytic_probabilities", "integrate_tcl",
    "SignSegmentation", "SpectralDensityParams", "constant_rate",
    "cumulative_rate", "load_rate_table", "make_tcl4_rate", "rate_table",
    "sign_segments", "split_rate", "tcl2_decay_rate",
    "tcl4_asymptotic_rate", "tcl4_decay_rate",
    "Channel", "RunPreset", "SystemModel", "PRESET_NAMES",
    "ladder_system", "lambda_system", "load_model_file", "preset",
    "two_level_atom",
    "WTDCurve", "sample_waiting_time", "wtd_markovian",
    "wtd_product_negative_regions", "wtd_solve", "wtd_solve_ode",
    "wtd_source_only", "wtd_tla_regions", "write_curve_csv",
]
