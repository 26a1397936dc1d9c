"""
Finite zero-sum matrix games.

Rows belong to player I (the minimizer), columns to player II (the
maximizer); entry (a, b) is what player II receives. The solver tries,
in order: direct min/max for single-row or single-column games, an
equalizing solve on a hinted support, a pure saddle point, and finally
the pair of linear programs. Every answer is certified by its duality gap.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog

from stopgame.exceptions import MatrixGameError


logger = logging.getLogger(__name__)

GAP_TOL = 1e-8
# acceptance threshold for support solves, relative to the payoff scale
SUPPORT_TOL = 1e-11
_LP_OPTIONS = {
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
}


@dataclass(frozen=True)
class MatrixGame:
    """Payoff matrix paid to the maximizer (columns) by the minimizer (rows)."""

    payoff: np.ndarray

    def __post_init__(self):
        payoff = np.array(self.payoff, dtype=float)
        if payoff.ndim != 2 or payoff.shape[0] < 1 or payoff.shape[1] < 1:
            raise MatrixGameError(
                f"payoff must be a non-empty matrix, got shape {payoff.shape}"
            )
        if not np.all(np.isfinite(payoff)):
            raise MatrixGameError("payoff has non-finite entries")
        payoff.setflags(write=False)
        object.__setattr__(self, "payoff", payoff)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.payoff.shape


@dataclass(frozen=True)
class GameSolution:
    """Value and optimal mixed strategies of a matrix game."""

    value: float
    mu: np.ndarray
    nu: np.ndarray
    gap: float = 0.0
    method: str = "lp"

    @property
    def support_p1(self) -> np.ndarray:
        return np.flatnonzero(self.mu > 0)

    @property
    def support_p2(self) -> np.ndarray:
        return np.flatnonzero(self.nu > 0)


def certificate(
    payoff: np.ndarray, mu: np.ndarray, nu: np.ndarray
) -> Tuple[float, float]:
    """Bounds on the value guaranteed by a strategy pair.
    :returns: ``(upper, lower)`` where ``upper = max_b (mu^T A)_b`` is what
        the minimizer concedes at most and ``lower = min_a (A nu)_a`` is what
        the maximizer secures at least.
    """
    return float(np.max(mu @ payoff)), float(np.min(payoff @ nu))


def _unit(size: int, k: int) -> np.ndarray:
    e = np.zeros(size)
    e[k] = 1.0
    return e


def _finish(payoff, mu, nu, method) -> GameSolution:
    upper, lower = certificate(payoff, mu, nu)
    return GameSolution(
        value=0.5 * (upper + lower), mu=mu, nu=nu, gap=upper - lower, method=method
    )


def _equalizer(block: np.ndarray) -> Optional[np.ndarray]:
    """Find p >= 0, sum p = 1, with block @ p constant. Last entry is the constant."""
    k_r, k_c = block.shape
    system = np.zeros((k_r + 1, k_c + 1))
    system[:k_r, :k_c] = block
    system[:k_r, k_c] = -1.0
    system[k_r, :k_c] = 1.0
    rhs = np.zeros(k_r + 1)
    rhs[k_r] = 1.0
    try:
        if k_r == k_c:
            sol = np.linalg.solve(system, rhs)
        else:
            sol = np.linalg.lstsq(system, rhs, rcond=None)[0]
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(sol)):
        return None
    return sol


def _solve_on_support(
    payoff: np.ndarray, rows: Sequence[int], cols: Sequence[int]
) -> Optional[GameSolution]:
    rows, cols = np.asarray(rows, dtype=int), np.asarray(cols, dtype=int)
    if rows.size == 0 or cols.size == 0:
        return None
    block = payoff[np.ix_(rows, cols)]
    col_part = _equalizer(block)
    row_part = _equalizer(block.T)
    if col_part is None or row_part is None:
        return None
    nu_s, mu_s = col_part[:-1], row_part[:-1]
    if nu_s.min() < -1e-12 or mu_s.min() < -1e-12:
        return None
    m, n = payoff.shape
    mu, nu = np.zeros(m), np.zeros(n)
    mu[rows] = np.clip(mu_s, 0.0, None)
    nu[cols] = np.clip(nu_s, 0.0, None)
    if not (mu.sum() > 0 and nu.sum() > 0):
        return None
    mu /= mu.sum()
    nu /= nu.sum()
    sol = _finish(payoff, mu, nu, "support")
    scale = 1.0 + float(np.max(np.abs(payoff)))
    if sol.gap > SUPPORT_TOL * scale:
        return None
    return sol


def _pure_saddle(payoff: np.ndarray) -> Optional[GameSolution]:
    row_max = payoff.max(axis=1)
    col_min = payoff.min(axis=0)
    a, b = int(np.argmin(row_max)), int(np.argmax(col_min))
    if row_max[a] != col_min[b]:
        return None
    m, n = payoff.shape
    return _finish(payoff, _unit(m, a), _unit(n, b), "pure")


def _solve_lp(payoff: np.ndarray) -> GameSolution:
    m, n = payoff.shape
    shift = 1.0 + abs(float(payoff.min()))
    shifted = payoff + shift

    # minimizer: max sum x s.t. shifted^T x <= 1, x >= 0
    res_p1 = linprog(
        -np.ones(m), A_ub=shifted.T, b_ub=np.ones(n),
        bounds=[(0, None)] * m, method="highs-ds", options=_LP_OPTIONS,
    )
    # maximizer: min sum y s.t. shifted y >= 1, y >= 0
    res_p2 = linprog(
        np.ones(n), A_ub=-shifted, b_ub=-np.ones(m),
        bounds=[(0, None)] * n, method="highs-ds", options=_LP_OPTIONS,
    )
    for who, res in (("row", res_p1), ("column", res_p2)):
        if res.status != 0:
            raise MatrixGameError(
                f"LP_INFEASIBLE: {who} program failed ({res.message})"
            )
    mu = np.clip(res_p1.x, 0.0, None)
    nu = np.clip(res_p2.x, 0.0, None)
    mu /= mu.sum()
    nu /= nu.sum()
    return _finish(payoff, mu, nu, "lp")


def solve_matrix_game(
    g: MatrixGame, hint: Optional[GameSolution] = None
) -> GameSolution:
    """Solve a zero-sum matrix game.
    :param MatrixGame g: The game.
    :param GameSolution hint: (Optional) Solution of a nearby game; its
        supports are tried first.
    :rtype: :class:`GameSolution <GameSolution>`
    :raises MatrixGameError: When no certified solution is found.
    """
    payoff = g.payoff
    m, n = payoff.shape
    if m == 1:
        return _finish(payoff, np.ones(1), _unit(n, int(np.argmax(payoff[0]))), "direct")
    if n == 1:
        return _finish(payoff, _unit(m, int(np.argmin(payoff[:, 0]))), np.ones(1), "direct")

    if hint is not None and hint.mu.shape == (m,) and hint.nu.shape == (n,):
        sol = _solve_on_support(payoff, hint.support_p1, hint.support_p2)
        if sol is not None:
            return sol

    sol = _pure_saddle(payoff)
    if sol is not None:
        return sol

    lp = _solve_lp(payoff)
    polished = _solve_on_support(payoff, lp.support_p1, lp.support_p2)
    if polished is not None:
        return polished
    logger.debug("support polish failed, keeping LP solution (gap %.2e)", lp.gap)
    if lp.gap > GAP_TOL:
        raise MatrixGameError(f"duality gap {lp.gap:.3e} exceeds {GAP_TOL:.0e}")
    return lp


def game_value(payoff: np.ndarray) -> float:
    """Shortcut returning only the value of a payoff matrix."""
    return solve_matrix_game(MatrixGame(payoff)).value
