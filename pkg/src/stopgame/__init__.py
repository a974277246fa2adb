"""Solver and Monte Carlo verification toolkit for one-side-stopping
continuous-time Markov games on finite state spaces."""

from .model import (Bounds, GameModel, ModelError, compute_bounds,
                    generate_random_model, load_model, model_from_tables,
                    model_to_dict)
from .hamiltonian import HamiltonianResult, eval_hamiltonian, isaacs_audit
from .solver import (ResidualReport, ValueGrid, check_residuals,
                     convergence_study, solve_zachrisson)
from .strategy import (PolicyTable, StoppingRule, extract_max_policy,
                       extract_min_policy, extract_stopping_rule,
                       first_hitting_time)
from .simulator import (HistoryPolicy, MartingaleReport, SaddleReport,
                        SimulationReport, Trajectory, estimate_value,
                        martingale_residual, saddle_check, simulate_path)

__all__ = [
    "Bounds", "GameModel", "ModelError", "compute_bounds",
    "generate_random_model", "load_model", "model_from_tables",
    "model_to_dict", "HamiltonianResult", "eval_hamiltonian", "isaacs_audit",
    "ResidualReport", "ValueGrid", "check_residuals", "convergence_study",
    "solve_zachrisson", "PolicyTable", "StoppingRule", "extract_max_policy",
    "extract_min_policy", "extract_stopping_rule", "first_hitting_time",
    "HistoryPolicy", "MartingaleReport", "SaddleReport", "SimulationReport",
    "Trajectory", "estimate_value", "martingale_residual", "saddle_check",
    "simulate_path",
]

__version__ = "0.1.0"
