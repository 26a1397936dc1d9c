"""
This module implements the basic developer interface for stopgame.
The :class:`StoppingGame <StoppingGame>` class only wires the pipeline
together: the numerical work lives in the peripheral modules.
"""
from typing import Any, Callable, List, Optional

from stopgame import models
from stopgame.dpi_solver import (
    DEFAULT_MAX_ITER,
    DEFAULT_THETA,
    DEFAULT_TOL,
    DPIReport,
    EquilibriumSolution,
    UniformizedModel,
    uniformize,
    value_iterate,
    verify_dpi,
)
from stopgame.evaluator import (
    PayoffEstimate,
    SaddleReport,
    StrategyProfile,
    equilibrium_profile,
    exact_value,
    saddle_certificate,
)
from stopgame.game_model import GameModel, ValidationReport, validate_model
from stopgame.simulator import PathRecord, SimulationConfig, estimate_payoff, simulate_paths


class StoppingGame:
    """Core developer interface for stopgame."""

    def __init__(
        self,
        model: GameModel,
        theta: float = DEFAULT_THETA,
        tol: float = DEFAULT_TOL,
        max_iter: int = DEFAULT_MAX_ITER,
        on_progress_callback: Optional[Callable[[int, Any], None]] = None,
    ):
        """Create :class:`StoppingGame <StoppingGame>`.
        :param GameModel model: The game; validated on construction.
        :param float theta: (Optional) Uniformization constant.
        :param float tol: (Optional) Convergence tolerance of value iteration.
        :param int max_iter: (Optional) Maximum number of value iteration sweeps.
        :param func on_progress_callback:
            (Optional) Called as ``(done, progress)`` during value iteration
            (``progress`` is the step size) and simulation (``progress`` is
            the total number of paths).
        """
        self.model = model
        self.theta = theta
        self.tol = tol
        self.max_iter = max_iter
        self.validation: ValidationReport = validate_model(model)
        self._on_progress = on_progress_callback

        self._uniformized: Optional[UniformizedModel] = None
        self._solution: Optional[EquilibriumSolution] = None
        self._dpi_report: Optional[DPIReport] = None
        self._saddle_report: Optional[SaddleReport] = None

    def __repr__(self):
        return f'<stopgame.__main__.StoppingGame object: {self.model!r}>'

    @classmethod
    def from_file(cls, path: str, **kwargs) -> "StoppingGame":
        """Load a model file and wrap it."""
        return cls(models.load_model(path), **kwargs)

    @classmethod
    def from_queue(cls, spec: Optional[models.QueueSpec] = None, **kwargs) -> "StoppingGame":
        """Build the controlled queue (default parameters when ``spec`` is
        omitted) and wrap it.
        """
        return cls(models.build_queueing_model(spec), **kwargs)

    def register_on_progress_callback(self, func: Callable[[int, Any], None]):
        """Register a progress callback function post initialization.
        :param callable func:
            A callback function that takes ``done`` and ``progress``.
        :rtype: None
        """
        self._on_progress = func

    @property
    def uniformized(self) -> UniformizedModel:
        if self._uniformized is not None:
            return self._uniformized
        self._uniformized = uniformize(self.model, self.theta)
        return self._uniformized

    @property
    def solution(self) -> EquilibriumSolution:
        """Value, saddle-point controls and stopping regions.
        :rtype: :class:`EquilibriumSolution <EquilibriumSolution>`
        """
        if self._solution is not None:
            return self._solution
        self._solution = value_iterate(
            self.uniformized, self.tol, self.max_iter, on_progress=self._on_progress
        )
        return self._solution

    @property
    def values(self):
        return self.solution.values

    @property
    def equilibrium(self) -> StrategyProfile:
        return equilibrium_profile(self.solution)

    @property
    def dpi_report(self) -> DPIReport:
        if self._dpi_report is not None:
            return self._dpi_report
        self._dpi_report = verify_dpi(self.uniformized, self.solution)
        return self._dpi_report

    @property
    def saddle_report(self) -> SaddleReport:
        if self._saddle_report is not None:
            return self._saddle_report
        self._saddle_report = saddle_certificate(self.model, self.solution, theta=self.theta)
        return self._saddle_report

    def evaluate(self, profile: Optional[StrategyProfile] = None) -> PayoffEstimate:
        """Exact payoff of ``profile``, the equilibrium by default."""
        return exact_value(self.model, profile or self.equilibrium)

    def simulate(
        self,
        initial: int,
        num_paths: int,
        seed: int = 0,
        profile: Optional[StrategyProfile] = None,
        **config,
    ) -> PayoffEstimate:
        """Monte-Carlo estimate of the payoff from ``initial``.
        :param int initial: Initial state.
        :param int num_paths: Number of simulated paths.
        :param int seed: (Optional) Master seed.
        :param StrategyProfile profile: (Optional) Profile to simulate,
            the equilibrium by default.
        :rtype: :class:`PayoffEstimate <PayoffEstimate>`
        """
        profile = profile or self.equilibrium
        paths = self.simulate_paths(initial, num_paths, seed, profile, **config)
        return estimate_payoff(paths, self.model, profile)

    def simulate_paths(
        self,
        initial: int,
        num_paths: int,
        seed: int = 0,
        profile: Optional[StrategyProfile] = None,
        **config,
    ) -> List[PathRecord]:
        cfg = SimulationConfig(num_paths, seed, **config)
        return simulate_paths(
            self.model, profile or self.equilibrium, cfg, initial, on_progress=self._on_progress
        )
