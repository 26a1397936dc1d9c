"""
Monotone value iteration for the clamped dynamic-programming operator.

The model is uniformized with a state-dependent constant q(i) + theta so
that one stage of the game at state i is the matrix game

    stage_reward(i, a, b) + stage_discount(i) * sum_j p(j|i,a,b) phi(j)

whose value I(i, phi) is then clamped between the obstacles:
T phi(i) = min{max{I(i, phi); psi2(i)}; psi1(i)}.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from stopgame.exceptions import MaxIterExceeded, ModelError, MonotonicityViolation
from stopgame.game_model import GameModel, ValueFunction, weighted_norm
from stopgame.helpers import thread_count
from stopgame.matrix_game import GameSolution, MatrixGame, solve_matrix_game


logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 100000
DEFAULT_THETA = 1.0
MONOTONE_TOL = 1e-12
FORMS_TOL = 1e-9


class StateClass(str, Enum):
    CONTINUATION = "CONTINUATION"
    STOP_P1 = "STOP_P1"
    STOP_P2 = "STOP_P2"


@dataclass(frozen=True)
class UniformizedModel:
    """Discrete-time form of a :class:`GameModel` with uniformization
    constant q(i) + theta at each state.
    """

    model: GameModel
    theta: float
    kernel: np.ndarray
    stage_reward: np.ndarray
    stage_discount: np.ndarray
    weight: np.ndarray

    @property
    def num_states(self) -> int:
        return self.model.num_states

    @property
    def psi1(self) -> np.ndarray:
        return self.model.psi1

    @property
    def psi2(self) -> np.ndarray:
        return self.model.psi2

    @property
    def scale(self) -> np.ndarray:
        """Per-state ratio (alpha + q(i) + theta) linking I-form and H-form."""
        return self.model.alpha + self.model.exit_rates + self.theta


def uniformize(
    model: GameModel, theta: float = DEFAULT_THETA, weight: Optional[Any] = None
) -> UniformizedModel:
    """Build the stochastic kernel, stage rewards and stage discounts.
    :param GameModel model: A validated model.
    :param float theta: Positive uniformization constant.
    :param weight: (Optional) Weight W of the norm, ones by default.
    :rtype: :class:`UniformizedModel <UniformizedModel>`
    """
    if not theta > 0:
        raise ModelError(f"theta must be positive, got {theta}")
    n = model.num_states
    rate_scale = model.exit_rates + theta
    kernel = model.rates / rate_scale[:, None, None, None]
    idx = np.arange(n)
    kernel[idx, :, :, idx] += 1.0
    sums = kernel.sum(axis=3)
    if np.any(kernel < -1e-12) or np.any(np.abs(sums - 1.0) > 1e-10):
        raise ModelError("uniformized kernel is not stochastic; validate the model first")

    denom = model.alpha + rate_scale
    weight = np.ones(n) if weight is None else np.array(weight, dtype=float)
    arrays = [
        kernel,
        model.reward / denom[:, None, None],
        rate_scale / denom,
        weight,
    ]
    for arr in arrays:
        arr.setflags(write=False)
    return UniformizedModel(model, float(theta), *arrays)


def stage_matrices(um: UniformizedModel, phi: np.ndarray) -> np.ndarray:
    """All stage payoff matrices at once, shape (S, U, V)."""
    expected = np.einsum("iabj,j->iab", um.kernel, phi)
    return um.stage_reward + um.stage_discount[:, None, None] * expected


def stage_payoff_matrix(um: UniformizedModel, i: int, phi: ValueFunction) -> MatrixGame:
    """Stage game at state ``i``; its value is I(i, phi)."""
    expected = np.einsum("abj,j->ab", um.kernel[i], phi.values)
    return MatrixGame(um.stage_reward[i] + um.stage_discount[i] * expected)


def hamiltonian_matrix(model: GameModel, i: int, phi: np.ndarray) -> np.ndarray:
    """Entries r(i,a,b) + sum_j q(j|i,a,b) phi(j); the game value is H(i, phi)."""
    return model.reward[i] + np.einsum("abj,j->ab", model.rates[i], phi)


def hamiltonian(model: GameModel, i: int, phi: np.ndarray) -> float:
    return solve_matrix_game(MatrixGame(hamiltonian_matrix(model, i, phi))).value


def clamp(values: np.ndarray, um: UniformizedModel) -> np.ndarray:
    return np.minimum(np.maximum(values, um.psi2), um.psi1)


def _operator(
    um: UniformizedModel,
    phi: np.ndarray,
    hints: Optional[Sequence[GameSolution]] = None,
    pool: Optional[ThreadPoolExecutor] = None,
) -> Tuple[np.ndarray, List[GameSolution]]:
    """Unclamped I(., phi) together with each state's stage solution."""
    mats = stage_matrices(um, phi)

    def solve(i: int) -> GameSolution:
        hint = hints[i] if hints is not None else None
        return solve_matrix_game(MatrixGame(mats[i]), hint=hint)

    states = range(um.num_states)
    sols = list(pool.map(solve, states)) if pool is not None else [solve(i) for i in states]
    return np.array([s.value for s in sols]), sols


def apply_T(
    um: UniformizedModel,
    phi: ValueFunction,
    hints: Optional[Sequence[GameSolution]] = None,
) -> Tuple[ValueFunction, List[GameSolution]]:
    """One application of the clamped operator T.
    :returns: ``(T phi, per-state stage solutions)``.
    """
    values, sols = _operator(um, phi.values, hints)
    return ValueFunction(clamp(values, um), um.weight), sols


def contact_tolerance(tol: float, psi: np.ndarray) -> np.ndarray:
    return np.maximum(10.0 * tol, 1e-9 * (1.0 + np.abs(psi)))


def classify(
    um: UniformizedModel, values: np.ndarray, tol: float
) -> Tuple[Tuple[StateClass, ...], FrozenSet[int], FrozenSet[int]]:
    """Tag each state by obstacle contact; contact wins over continuation."""
    gap1 = np.abs(values - um.psi1)
    gap2 = np.abs(values - um.psi2)
    near1 = gap1 <= contact_tolerance(tol, um.psi1)
    near2 = gap2 <= contact_tolerance(tol, um.psi2)
    tags = []
    for i in range(um.num_states):
        if near1[i] and (not near2[i] or gap1[i] < gap2[i]):
            tags.append(StateClass.STOP_P1)
        elif near2[i]:
            tags.append(StateClass.STOP_P2)
        else:
            tags.append(StateClass.CONTINUATION)
    a1 = frozenset(i for i, t in enumerate(tags) if t is StateClass.STOP_P1)
    a2 = frozenset(i for i, t in enumerate(tags) if t is StateClass.STOP_P2)
    return tuple(tags), a1, a2


@dataclass
class EquilibriumSolution:
    """Game value, saddle-point controls and stopping regions."""

    u_star: ValueFunction
    phi_star: np.ndarray
    psi_star: np.ndarray
    region_A1: FrozenSet[int]
    region_A2: FrozenSet[int]
    classification: Tuple[StateClass, ...]
    iterations: int
    residual: float
    tol: float = DEFAULT_TOL
    history: Optional[List[np.ndarray]] = field(default=None, repr=False)

    @property
    def values(self) -> np.ndarray:
        return self.u_star.values

    def as_document(self) -> Dict[str, Any]:
        return {
            "u_star": self.values,
            "phi_star": self.phi_star,
            "psi_star": self.psi_star,
            "A1": sorted(self.region_A1),
            "A2": sorted(self.region_A2),
            "classification": [c.value for c in self.classification],
            "iterations": self.iterations,
            "residual": self.residual,
        }


def _assemble(
    um: UniformizedModel,
    values: np.ndarray,
    sols: Sequence[GameSolution],
    iterations: int,
    residual: float,
    tol: float,
    classification: Optional[Sequence[StateClass]] = None,
) -> EquilibriumSolution:
    if classification is None:
        tags, a1, a2 = classify(um, values, tol)
    else:
        tags = tuple(StateClass(c) for c in classification)
        a1 = frozenset(i for i, t in enumerate(tags) if t is StateClass.STOP_P1)
        a2 = frozenset(i for i, t in enumerate(tags) if t is StateClass.STOP_P2)
    return EquilibriumSolution(
        u_star=ValueFunction(values, um.weight, iterations, residual),
        phi_star=np.array([s.mu for s in sols]),
        psi_star=np.array([s.nu for s in sols]),
        region_A1=a1,
        region_A2=a2,
        classification=tags,
        iterations=iterations,
        residual=residual,
        tol=tol,
    )


def equilibrium_from_values(
    um: UniformizedModel,
    values: Any,
    tol: float = DEFAULT_TOL,
    classification: Optional[Sequence[StateClass]] = None,
) -> EquilibriumSolution:
    """Wrap externally supplied values as a solution, extracting the stage
    strategies at those values. Used to verify solutions not produced by
    :func:`value_iterate`.
    """
    values = np.asarray(values, dtype=float)
    I, sols = _operator(um, values)
    residual = weighted_norm(ValueFunction(clamp(I, um) - values, um.weight))
    return _assemble(um, values, sols, 0, residual, tol, classification)


def value_iterate(
    um: UniformizedModel,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    start: str = "lower",
    on_progress: Optional[Callable[[int, float], None]] = None,
    keep_history: bool = False,
) -> EquilibriumSolution:
    """Iterate u_n = T u_{n-1} to the fixed point.
    :param UniformizedModel um: Uniformized model.
    :param float tol: Bound on both the last step and the fixed-point
        residual, in the weighted norm.
    :param int max_iter: Maximum number of applications of T.
    :param str start: ``"lower"`` starts at psi2 (non-decreasing iterates),
        ``"upper"`` starts at psi1 (non-increasing iterates).
    :param func on_progress: (Optional) Called as ``(iteration, step)``.
    :param bool keep_history: Keep every iterate, starting with u_0.
    :raises MaxIterExceeded: Without convergence in ``max_iter`` sweeps.
    :raises MonotonicityViolation: When an iterate breaks monotonicity.
    """
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")
    if start == "lower":
        u, direction = um.psi2.copy(), 1.0
    elif start == "upper":
        u, direction = um.psi1.copy(), -1.0
    else:
        raise ValueError(f"start must be 'lower' or 'upper', got {start!r}")

    history = [u.copy()] if keep_history else None
    workers = thread_count()
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    hints: Optional[List[GameSolution]] = None
    prev_step = np.inf
    step = np.inf
    try:
        for n in range(1, max_iter + 1):
            I, sols = _operator(um, u, hints, pool)
            new = clamp(I, um)
            diff = new - u

            drop = -direction * diff - MONOTONE_TOL * (1.0 + np.abs(u))
            worst = int(np.argmax(drop))
            if drop[worst] > 0:
                raise MonotonicityViolation(n, worst, float(-direction * diff[worst]))

            step = weighted_norm(ValueFunction(diff, um.weight))
            logger.debug("iteration %d step %.3e", n, step)
            if on_progress is not None:
                on_progress(n, step)
            if step <= tol and prev_step <= tol:
                # u is u_{n-1}; sols come from the extra application T u
                logger.info("converged after %d iterations (residual %.3e)", n - 1, step)
                sol = _assemble(um, u, sols, n - 1, step, tol)
                sol.history = history
                return sol

            hints, prev_step, u = sols, step, new
            if history is not None:
                history.append(u.copy())
    finally:
        if pool is not None:
            pool.shutdown()

    logger.warning("value iteration stopped at max_iter=%d", max_iter)
    raise MaxIterExceeded(max_iter, float(step))


@dataclass(frozen=True)
class DPIViolation:
    state: int
    check: str
    gap: float

    def as_dict(self) -> Dict[str, Any]:
        return {"state": self.state, "check": self.check, "gap": self.gap}


@dataclass
class DPIReport:
    """Per-state outcome of the bilateral inequality checks."""

    violations: List[DPIViolation]
    stage_values: np.ndarray
    equality_residual: float
    forms_max_diff: float

    @property
    def passed(self) -> bool:
        return not self.violations

    def as_dict(self) -> Dict[str, Any]:
        return {
            "passed": self.passed,
            "violations": [v.as_dict() for v in self.violations],
            "stage_values": self.stage_values,
            "equality_residual": self.equality_residual,
            "forms_max_diff": self.forms_max_diff,
        }


def verify_dpi(
    um: UniformizedModel, sol: EquilibriumSolution, tol: float = 1e-7
) -> DPIReport:
    """Check the bilateral dynamic programming inequalities at ``sol``.

    Besides the three-way classification against I(i, u*), the same check
    is repeated in the rate form alpha u*(i) - H(i, u*) and both clamped
    fixed-point forms are compared with u*.
    :rtype: :class:`DPIReport <DPIReport>`
    """
    u = sol.values
    model = um.model
    I, _ = _operator(um, u)
    d = u - I
    scale = um.scale
    h_res = np.array([
        model.alpha * u[i] - hamiltonian(model, i, u) for i in range(um.num_states)
    ])
    form_ii = np.minimum(np.maximum(I, um.psi2), um.psi1)
    form_iii = np.maximum(np.minimum(I, um.psi1), um.psi2)

    found: List[DPIViolation] = []

    def flag(i, check, gap):
        found.append(DPIViolation(int(i), check, float(gap)))

    eps1 = contact_tolerance(sol.tol, um.psi1)
    eps2 = contact_tolerance(sol.tol, um.psi2)
    for i, tag in enumerate(sol.classification):
        if u[i] < um.psi2[i] - tol or u[i] > um.psi1[i] + tol:
            flag(i, "SANDWICH", max(um.psi2[i] - u[i], u[i] - um.psi1[i]))
        h_tol = tol * scale[i]
        if tag is StateClass.CONTINUATION:
            if abs(d[i]) > tol:
                flag(i, "CONTINUATION_EQUALITY", d[i])
            if abs(h_res[i]) > h_tol:
                flag(i, "H_FORM_EQUALITY", h_res[i])
        elif tag is StateClass.STOP_P2:
            if d[i] < -tol:
                flag(i, "A2_INEQUALITY_REVERSED", d[i])
            if h_res[i] < -h_tol:
                flag(i, "H_FORM_A2_REVERSED", h_res[i])
            if abs(u[i] - um.psi2[i]) > eps2[i]:
                flag(i, "CONTACT", u[i] - um.psi2[i])
        else:
            if d[i] > tol:
                flag(i, "A1_INEQUALITY_REVERSED", d[i])
            if h_res[i] > h_tol:
                flag(i, "H_FORM_A1_REVERSED", h_res[i])
            if abs(u[i] - um.psi1[i]) > eps1[i]:
                flag(i, "CONTACT", u[i] - um.psi1[i])
        if abs(form_ii[i] - u[i]) > tol:
            flag(i, "FORM_II", form_ii[i] - u[i])
        if abs(form_iii[i] - u[i]) > tol:
            flag(i, "FORM_III", form_iii[i] - u[i])
        if abs(form_ii[i] - form_iii[i]) > FORMS_TOL:
            flag(i, "FORMS_DISAGREE", form_ii[i] - form_iii[i])

    cont = [i for i, t in enumerate(sol.classification) if t is StateClass.CONTINUATION]
    report = DPIReport(
        violations=found,
        stage_values=I,
        equality_residual=float(np.max(np.abs(d[cont]), initial=0.0)),
        forms_max_diff=float(np.max(np.abs(form_ii - form_iii), initial=0.0)),
    )
    if found:
        logger.info("DPI check found %d violation(s)", len(found))
    return report
