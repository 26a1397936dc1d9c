"""
Exact evaluation of fixed strategy profiles and one-sided best responses.

A profile pairs stationary randomized controls with hitting-time stopping
rules (stop on entry into a set of states). When both players would stop
at the same state player II's payoff psi2 applies.
"""
import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Dict, FrozenSet, Iterable, Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from stopgame.dpi_solver import DEFAULT_MAX_ITER, DEFAULT_THETA, EquilibriumSolution, uniformize
from stopgame.exceptions import InvalidProfile, MaxIterExceeded, SingularSystem
from stopgame.game_model import GameModel, ValueFunction


logger = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10
PROB_TOL = 1e-10


class Player(str, Enum):
    P1 = "P1"
    P2 = "P2"


class Method(str, Enum):
    EXACT = "EXACT"
    MONTE_CARLO = "MONTE_CARLO"


def _check_control(control: np.ndarray, name: str) -> np.ndarray:
    control = np.array(control, dtype=float)
    if control.ndim != 2:
        raise InvalidProfile(f"{name} must be a state-by-action matrix")
    if np.any(control < -PROB_TOL) or np.any(np.abs(control.sum(axis=1) - 1.0) > PROB_TOL):
        raise InvalidProfile(f"{name} rows must be probability vectors")
    control.setflags(write=False)
    return control


@dataclass(frozen=True)
class PlayerStrategy:
    """One player's half of a profile: a control and a stop region."""

    player: Player
    control: np.ndarray
    stop: FrozenSet[int]

    def __post_init__(self):
        object.__setattr__(self, "control", _check_control(self.control, "control"))
        object.__setattr__(self, "stop", frozenset(int(i) for i in self.stop))


@dataclass(frozen=True)
class StrategyProfile:
    """Stationary controls (phi for player I, psi for player II) with the
    players' stop regions.
    """

    phi: np.ndarray
    psi: np.ndarray
    stop1: FrozenSet[int] = frozenset()
    stop2: FrozenSet[int] = frozenset()

    def __post_init__(self):
        phi = _check_control(self.phi, "phi")
        psi = _check_control(self.psi, "psi")
        if phi.shape[0] != psi.shape[0]:
            raise InvalidProfile("phi and psi cover different state sets")
        n = phi.shape[0]
        stop1 = frozenset(int(i) for i in self.stop1)
        stop2 = frozenset(int(i) for i in self.stop2)
        if any(not 0 <= i < n for i in stop1 | stop2):
            raise InvalidProfile("stop region contains an unknown state")
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "stop1", stop1)
        object.__setattr__(self, "stop2", stop2)

    @property
    def num_states(self) -> int:
        return self.phi.shape[0]

    def half(self, player: Player) -> PlayerStrategy:
        if Player(player) is Player.P1:
            return PlayerStrategy(Player.P1, self.phi, self.stop1)
        return PlayerStrategy(Player.P2, self.psi, self.stop2)

    def with_half(self, strategy: PlayerStrategy) -> "StrategyProfile":
        if strategy.player is Player.P1:
            return replace(self, phi=strategy.control, stop1=strategy.stop)
        return replace(self, psi=strategy.control, stop2=strategy.stop)

    @classmethod
    def from_halves(cls, p1: PlayerStrategy, p2: PlayerStrategy) -> "StrategyProfile":
        return cls(p1.control, p2.control, p1.stop, p2.stop)

    def stopping_masks(self) -> Tuple[np.ndarray, np.ndarray]:
        """Boolean masks (player I stops, player II stops) after the tie rule."""
        n = self.num_states
        stop2 = np.zeros(n, dtype=bool)
        stop2[list(self.stop2)] = True
        stop1 = np.zeros(n, dtype=bool)
        stop1[list(self.stop1)] = True
        return stop1 & ~stop2, stop2


def equilibrium_profile(solution: EquilibriumSolution) -> StrategyProfile:
    """The saddle-point profile (Phi*, A1; Psi*, A2) of a solution."""
    return StrategyProfile(
        solution.phi_star, solution.psi_star, solution.region_A1, solution.region_A2
    )


@dataclass
class PayoffEstimate:
    """Exact or simulated J_alpha values, state-indexed."""

    values: np.ndarray
    method: Method
    stderr: Optional[np.ndarray] = None
    residual: Optional[float] = None
    counts: Optional[np.ndarray] = None

    def confidence_interval(self, i: int, z: float = 1.96) -> Tuple[float, float]:
        se = 0.0 if self.stderr is None else float(self.stderr[i])
        return float(self.values[i] - z * se), float(self.values[i] + z * se)

    def as_dict(self) -> Dict[str, Any]:
        doc: Dict[str, Any] = {"values": self.values, "method": self.method.value}
        if self.stderr is not None:
            doc["stderr"] = self.stderr
            doc["ci95"] = [self.confidence_interval(i) for i in range(len(self.values))]
        if self.residual is not None:
            doc["residual"] = self.residual
        if self.counts is not None:
            doc["counts"] = self.counts
        return doc


def mixed_extension(
    model: GameModel, profile: StrategyProfile
) -> Tuple[np.ndarray, np.ndarray]:
    """Reward rates r~(i) and generator q~(j|i) under the profile's controls."""
    r = np.einsum("ia,iab,ib->i", profile.phi, model.reward, profile.psi)
    q = np.einsum("ia,iabj,ib->ij", profile.phi, model.rates, profile.psi)
    return r, q


def exact_value(model: GameModel, profile: StrategyProfile) -> PayoffEstimate:
    """Solve the policy-evaluation system for J_alpha under a profile.

    Stopped states are pinned to their payoff; on the remaining states
    (alpha - q~(i|i)) J(i) - sum_{j != i} q~(j|i) J(j) = r~(i).
    :rtype: :class:`PayoffEstimate <PayoffEstimate>`
    :raises SingularSystem: When the solve fails its residual check.
    """
    if profile.num_states != model.num_states:
        raise InvalidProfile("profile and model have different state counts")
    n = model.num_states
    r, q = mixed_extension(model, profile)
    stop1, stop2 = profile.stopping_masks()
    stopped = stop1 | stop2

    matrix = model.alpha * np.eye(n) - q
    rhs = r.copy()
    matrix[stopped] = 0.0
    matrix[stopped, stopped] = 1.0
    rhs[stop1] = model.psi1[stop1]
    rhs[stop2] = model.psi2[stop2]

    system = sparse.csr_matrix(matrix)
    values = np.atleast_1d(spsolve(system, rhs))
    residual = float(np.max(np.abs(system @ values - rhs), initial=0.0))
    bound = RESIDUAL_TOL * (1.0 + float(np.max(np.abs(rhs), initial=0.0)))
    if not np.all(np.isfinite(values)) or residual > bound:
        raise SingularSystem(f"policy evaluation residual {residual:.3e}")
    return PayoffEstimate(values, Method.EXACT, residual=residual)


def best_response(
    model: GameModel,
    fixed_player: Player,
    fixed: PlayerStrategy,
    tol: float = 1e-11,
    max_iter: int = DEFAULT_MAX_ITER,
    theta: float = DEFAULT_THETA,
) -> Tuple[ValueFunction, PlayerStrategy]:
    """Optimal reply of the free player among stationary controls and
    hitting-time stopping rules.

    With player I fixed, player II maximizes and may stop for psi2; states
    in player I's region pay psi1 on entry. With player II fixed, player I
    minimizes and may stop for psi1; player II's region pays psi2.
    :returns: ``(best-response value, free player's strategy)``.
    :raises MaxIterExceeded: Without convergence in ``max_iter`` sweeps.
    """
    fixed_player = Player(fixed_player)
    um = uniformize(model, theta)
    pinned = np.zeros(model.num_states, dtype=bool)
    pinned[list(fixed.stop)] = True

    if fixed_player is Player.P1:
        # contract the fixed player's mixture away, leaving (S, V, S)
        reward = np.einsum("ia,iab->ib", fixed.control, um.stage_reward)
        kernel = np.einsum("ia,iabj->ibj", fixed.control, um.kernel)
        own_stop, pinned_value = model.psi2, model.psi1
        pick, clamp = np.max, np.maximum
    else:
        reward = np.einsum("ib,iab->ia", fixed.control, um.stage_reward)
        kernel = np.einsum("ib,iabj->iaj", fixed.control, um.kernel)
        own_stop, pinned_value = model.psi1, model.psi2
        pick, clamp = np.min, np.minimum

    def continuation(values: np.ndarray) -> np.ndarray:
        return reward + um.stage_discount[:, None] * np.einsum("ikj,j->ik", kernel, values)

    values = np.where(pinned, pinned_value, own_stop)
    step = np.inf
    for n in range(1, max_iter + 1):
        new = np.where(pinned, pinned_value, clamp(pick(continuation(values), axis=1), own_stop))
        step = float(np.max(np.abs(new - values), initial=0.0))
        values = new
        if step <= tol:
            logger.debug("best response for %s converged in %d sweeps", fixed_player.value, n)
            break
    else:
        raise MaxIterExceeded(max_iter, step)

    cont = continuation(values)
    choice = np.argmax(cont, axis=1) if fixed_player is Player.P1 else np.argmin(cont, axis=1)
    control = np.eye(cont.shape[1])[choice]
    best = pick(cont, axis=1)
    if fixed_player is Player.P1:
        stops = ~pinned & (own_stop >= best)
        free = Player.P2
    else:
        stops = ~pinned & (own_stop <= best)
        free = Player.P1
    strategy = PlayerStrategy(free, control, frozenset(np.flatnonzero(stops).tolist()))
    return ValueFunction(values, um.weight, n, step), strategy


@dataclass
class SaddleReport:
    """Numerical certificate that a solution is a saddle point."""

    consistency: float
    best_response_gap_p1: float
    best_response_gap_p2: float
    worst_deviation_p1: float
    worst_deviation_p2: float
    deviations_checked: int
    tol: float

    @property
    def passed(self) -> bool:
        return max(
            self.consistency,
            self.best_response_gap_p1,
            self.best_response_gap_p2,
            self.worst_deviation_p1,
            self.worst_deviation_p2,
        ) <= self.tol

    def as_dict(self) -> Dict[str, Any]:
        return {
            "passed": self.passed,
            "consistency": self.consistency,
            "best_response_gap_p1": self.best_response_gap_p1,
            "best_response_gap_p2": self.best_response_gap_p2,
            "worst_deviation_p1": self.worst_deviation_p1,
            "worst_deviation_p2": self.worst_deviation_p2,
            "deviations_checked": self.deviations_checked,
            "tol": self.tol,
        }


def _toggles(region: FrozenSet[int], n: int) -> Iterable[FrozenSet[int]]:
    for i in range(n):
        yield region ^ {i}


def saddle_certificate(
    model: GameModel,
    solution: EquilibriumSolution,
    tol: float = 1e-6,
    num_random: int = 100,
    seed: int = 0,
    theta: float = DEFAULT_THETA,
) -> SaddleReport:
    """Check that no sampled unilateral deviation and no best response
    improves on u* by more than ``tol`` for the deviating player.

    Player II (maximizer) deviations are scored by ``J - u*``, player I
    (minimizer) deviations by ``u* - J``; positive numbers favour the
    deviator.
    """
    u = solution.values
    n = model.num_states
    profile = equilibrium_profile(solution)
    rng = np.random.default_rng(seed)
    nu, nv = len(model.actions_p1), len(model.actions_p2)

    consistency = float(np.max(np.abs(exact_value(model, profile).values - u)))
    br2, _ = best_response(model, Player.P1, profile.half(Player.P1), theta=theta)
    br1, _ = best_response(model, Player.P2, profile.half(Player.P2), theta=theta)

    checked = 0
    worst_p2 = -np.inf
    for _ in range(num_random):
        dev = replace(profile, psi=rng.dirichlet(np.ones(nv), size=n))
        worst_p2 = max(worst_p2, float(np.max(exact_value(model, dev).values - u)))
        checked += 1
    for region in _toggles(profile.stop2, n):
        dev = replace(profile, stop2=region)
        worst_p2 = max(worst_p2, float(np.max(exact_value(model, dev).values - u)))
        checked += 1

    worst_p1 = -np.inf
    for _ in range(num_random):
        dev = replace(profile, phi=rng.dirichlet(np.ones(nu), size=n))
        worst_p1 = max(worst_p1, float(np.max(u - exact_value(model, dev).values)))
        checked += 1
    for region in _toggles(profile.stop1, n):
        dev = replace(profile, stop1=region)
        worst_p1 = max(worst_p1, float(np.max(u - exact_value(model, dev).values)))
        checked += 1

    report = SaddleReport(
        consistency=consistency,
        best_response_gap_p1=float(np.max(u - br1.values)),
        best_response_gap_p2=float(np.max(br2.values - u)),
        worst_deviation_p1=worst_p1,
        worst_deviation_p2=worst_p2,
        deviations_checked=checked,
        tol=tol,
    )
    logger.info("saddle certificate %s (%d deviations)",
                "passed" if report.passed else "failed", checked)
    return report
