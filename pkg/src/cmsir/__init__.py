"""SIR epidemics on configuration-model random graphs.

Exact half-edge simulation, the deterministic limit system and its
integral-equation representations.
"""
from .exceptions import ConfigError, NoMajorOutbreak, SimulationInvariantError, SolverError
from .limits import (
    LimitCurves,
    LimitFunctions,
    eval_limit_functions,
    final_size,
    find_theta_infinity,
    invert_v_s,
    solve_theta,
    solve_v_paths,
)
from .model import (
    DegreeDistribution,
    EpidemicRates,
    LimitProfile,
    PopulationSpec,
    basic_reproductive_ratio,
    limit_profile_from_distribution,
    limit_profile_from_population,
    sample_population,
    validate_population,
)
from .simulator import complete_residual_pairing, detect_t_star, run_epidemic

__version__ = "0.1.0"
