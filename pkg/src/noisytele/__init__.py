"""Simulation of qudit teleportation with noisy controls.

Closed-form average fidelity and fidelity deviation, Haar Monte-Carlo
estimates, control-noise experiments and differential-evolution recovery.
"""

from .bloch import bloch_rotation, qubit_covariance, qubit_D_analytic, qubit_F, tight_bound_check
from .core import (
    GAMMA_BV,
    GAMMA_C,
    Channel,
    FDReport,
    Protocol,
    analytic_F,
    entanglement_quantity_E,
    fidelity_bounds,
    input_fidelity,
    is_complete,
    optimal_protocol,
    schur_mean_xi,
    simulate_output,
)
from .errors import ConfigError, ConsistencyError, DimensionError
from .montecarlo import MCConfig, NoiseModel, deterioration_experiment, mc_estimate_FD, perturb_protocol
from .qlinalg import (
    ParamVector,
    haar_random_state,
    haar_random_unitary,
    make_rng,
    state_fidelity,
    su_generators,
    unitary_from_params,
)
from .stabilizer import DEConfig, evolve, init_population, realtime_stabilization, recover_experiment

__version__ = "0.1.0"

__all__ = [
    "GAMMA_BV",
    "GAMMA_C",
    "Channel",
    "ConfigError",
    "ConsistencyError",
    "DEConfig",
    "DimensionError",
    "FDReport",
    "MCConfig",
    "NoiseModel",
    "ParamVector",
    "Protocol",
    "analytic_F",
    "bloch_rotation",
    "deterioration_experiment",
    "entanglement_quantity_E",
    "evolve",
    "fidelity_bounds",
    "haar_random_state",
    "haar_random_unitary",
    "init_population",
    "input_fidelity",
    "is_complete",
    "make_rng",
    "mc_estimate_FD",
    "optimal_protocol",
    "perturb_protocol",
    "qubit_D_analytic",
    "qubit_F",
    "qubit_covariance",
    "realtime_stabilization",
    "recover_experiment",
    "schur_mean_xi",
    "simulate_output",
    "state_fidelity",
    "su_generators",
    "tight_bound_check",
    "unitary_from_params",
]
