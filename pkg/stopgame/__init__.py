# flake8: noqa: F401
"""
Stopgame: solve and verify zero-sum games with control and stopping
on continuous-time Markov chains.

"""

__title__ = "stopgame"
__license__ = "Apache-2.0 license"

from stopgame.version import __version__
from stopgame.game_model import (
    GameModel,
    LyapunovCertificate,
    ValueFunction,
    truncate_model,
    validate_model,
    weighted_norm,
)
from stopgame.matrix_game import MatrixGame, solve_matrix_game
from stopgame.dpi_solver import (
    EquilibriumSolution,
    apply_T,
    uniformize,
    value_iterate,
    verify_dpi,
)
from stopgame.evaluator import (
    Player,
    StrategyProfile,
    best_response,
    exact_value,
    saddle_certificate,
)
from stopgame.simulator import SimulationConfig, estimate_payoff, simulate_paths
from stopgame.models import QueueSpec, build_queueing_model, load_model, save_model
from stopgame.__main__ import StoppingGame
