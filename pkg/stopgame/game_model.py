"""
This module contains the game primitives: the truncated model itself,
Lyapunov certificates for its standing assumptions, weighted value
functions and the validation routine that checks a model before any
solver touches it.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Hashable, List, Optional, Sequence

import numpy as np

from stopgame.exceptions import DegenerateWeight, ModelError, ModelRejected


logger = logging.getLogger(__name__)

CONSERVATIVE_TOL = 1e-12
CERTIFICATE_RTOL = 1e-9


def _frozen(arr: Any, ndim: int, name: str) -> np.ndarray:
    out = np.array(arr, dtype=float)
    if out.ndim != ndim:
        raise ModelError(f"{name} must have {ndim} dimensions, got {out.ndim}")
    out.setflags(write=False)
    return out


class GameModel:
    """Finite zero-sum game with control and stopping on a CTMC.

    Player I (the minimizer) picks actions from ``actions_p1`` and may stop
    paying ``psi1``; player II (the maximizer) picks from ``actions_p2`` and
    may stop receiving ``psi2``. ``rates[i, a, b, j]`` is the transition rate
    q(j|i,a,b) including the diagonal.
    """

    def __init__(
        self,
        alpha: float,
        actions_p1: Sequence[Hashable],
        actions_p2: Sequence[Hashable],
        rates: Any,
        reward: Any,
        psi1: Any,
        psi2: Any,
    ):
        """Construct a :class:`GameModel <GameModel>`.
        :param float alpha: Discount rate.
        :param list actions_p1: Action labels of player I.
        :param list actions_p2: Action labels of player II.
        :param rates: Array of shape (S, U, V, S) with q(j|i,a,b).
        :param reward: Array of shape (S, U, V) with r(i,a,b).
        :param psi1: Stop payoff when player I stops, shape (S,).
        :param psi2: Stop payoff when player II stops, shape (S,).
        """
        self.alpha = float(alpha)
        self.actions_p1 = tuple(actions_p1)
        self.actions_p2 = tuple(actions_p2)
        if not self.actions_p1 or not self.actions_p2:
            raise ModelError("both players need at least one action")

        self.rates = _frozen(rates, 4, "rates")
        self.reward = _frozen(reward, 3, "reward")
        self.psi1 = _frozen(psi1, 1, "psi1")
        self.psi2 = _frozen(psi2, 1, "psi2")

        n, nu, nv = self.num_states, len(self.actions_p1), len(self.actions_p2)
        if self.rates.shape != (n, nu, nv, n):
            raise ModelError(
                f"rates has shape {self.rates.shape}, expected {(n, nu, nv, n)}"
            )
        if self.reward.shape != (n, nu, nv):
            raise ModelError(
                f"reward has shape {self.reward.shape}, expected {(n, nu, nv)}"
            )
        if self.psi2.shape != (n,):
            raise ModelError(f"psi2 has length {len(self.psi2)}, expected {n}")

        diagonal = np.einsum("iabi->iab", self.rates)
        # total off-diagonal outflow for every (i, a, b)
        outflow = self.rates.sum(axis=3) - diagonal
        self.outflow = _frozen(outflow, 3, "outflow")
        self.exit_rates = _frozen(outflow.max(axis=(1, 2)), 1, "exit_rates")

    @property
    def num_states(self) -> int:
        return len(self.psi1)

    @property
    def shape(self):
        return self.num_states, len(self.actions_p1), len(self.actions_p2)

    def __repr__(self):
        n, nu, nv = self.shape
        return (
            f"<stopgame.GameModel states={n} actions=({nu}, {nv}) "
            f"alpha={self.alpha}>"
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GameModel):
            return NotImplemented
        return (
            self.alpha == other.alpha
            and self.actions_p1 == other.actions_p1
            and self.actions_p2 == other.actions_p2
            and np.array_equal(self.rates, other.rates)
            and np.array_equal(self.reward, other.reward)
            and np.array_equal(self.psi1, other.psi1)
            and np.array_equal(self.psi2, other.psi2)
        )

    __hash__ = None  # type: ignore

    def action_index(self, player: int, label: Any) -> int:
        """Resolve an action label (or a plain index) for player 1 or 2."""
        actions = self.actions_p1 if player == 1 else self.actions_p2
        return _action_index(actions, label, player)

    @classmethod
    def from_sparse(
        cls,
        alpha: float,
        num_states: int,
        actions_p1: Sequence[Hashable],
        actions_p2: Sequence[Hashable],
        rates: Sequence[Sequence[Any]],
        rewards: Sequence[Sequence[Any]],
        psi1: Sequence[float],
        psi2: Sequence[float],
    ) -> "GameModel":
        """Build a model from sparse ``[i, a, b, j, value]`` rate triplets and
        ``[i, a, b, value]`` reward triplets. Diagonal rates that are not
        given are reconstructed from conservativeness.
        """
        actions_p1, actions_p2 = tuple(actions_p1), tuple(actions_p2)
        nu, nv = len(actions_p1), len(actions_p2)
        q = np.zeros((num_states, nu, nv, num_states))
        given_diagonal = np.zeros((num_states, nu, nv), dtype=bool)
        for entry in rates:
            i, a, b, j, value = entry
            ia = _action_index(actions_p1, a, 1)
            ib = _action_index(actions_p2, b, 2)
            q[int(i), ia, ib, int(j)] = float(value)
            if int(i) == int(j):
                given_diagonal[int(i), ia, ib] = True

        for i in range(num_states):
            off = q[i].sum(axis=2) - q[i, :, :, i]
            missing = ~given_diagonal[i]
            q[i, :, :, i][missing] = -off[missing]

        r = np.zeros((num_states, nu, nv))
        for entry in rewards:
            i, a, b, value = entry
            ia = _action_index(actions_p1, a, 1)
            ib = _action_index(actions_p2, b, 2)
            r[int(i), ia, ib] = float(value)

        return cls(alpha, actions_p1, actions_p2, q, r, psi1, psi2)

    def to_document(self) -> Dict[str, Any]:
        """Sparse JSON-ready form of the model (the model file format).
        Diagonal rates are written out so that loading reproduces the
        model bit for bit.
        """
        rates = []
        for i, a, b, j in np.argwhere(self.rates != 0):
            rates.append([
                int(i), self.actions_p1[a], self.actions_p2[b], int(j),
                float(self.rates[i, a, b, j]),
            ])
        rewards = []
        for i, a, b in np.argwhere(self.reward != 0):
            rewards.append([
                int(i), self.actions_p1[a], self.actions_p2[b],
                float(self.reward[i, a, b]),
            ])
        return {
            "alpha": self.alpha,
            "states": self.num_states,
            "actions_p1": list(self.actions_p1),
            "actions_p2": list(self.actions_p2),
            "rates": rates,
            "rewards": rewards,
            "psi1": self.psi1.tolist(),
            "psi2": self.psi2.tolist(),
        }


def _action_index(actions: Sequence[Hashable], label: Any, player: int) -> int:
    # labels win over positional indices
    if label in actions:
        return list(actions).index(label)
    if isinstance(label, int) and 0 <= label < len(actions):
        return label
    raise ModelError(f"unknown action {label!r} for player {player}")


@dataclass(frozen=True)
class CountableModelSpec:
    """Rules of a model on the countable state space {0, 1, 2, ...}.

    ``rate(i, a, b)`` returns the off-diagonal row ``{j: q(j|i,a,b)}``;
    diagonal entries in the returned mapping are ignored.
    """

    alpha: float
    actions_p1: Sequence[Hashable]
    actions_p2: Sequence[Hashable]
    rate: Callable[[int, Any, Any], Dict[int, float]]
    reward: Callable[[int, Any, Any], float]
    psi1: Callable[[int], float]
    psi2: Callable[[int], float]


def truncate_model(spec: CountableModelSpec, s_max: int) -> GameModel:
    """Restrict a countable model to the states {0..s_max}.

    Rate mass leaving the range is dropped and the diagonal is rebuilt so
    every row stays conservative (reflecting truncation).
    :param CountableModelSpec spec: The model rules.
    :param int s_max: Largest kept state.
    :rtype: :class:`GameModel <GameModel>`
    """
    if s_max < 1:
        raise ModelError(f"s_max must be at least 1, got {s_max}")
    n = s_max + 1
    nu, nv = len(spec.actions_p1), len(spec.actions_p2)
    q = np.zeros((n, nu, nv, n))
    r = np.zeros((n, nu, nv))
    dropped = 0
    for i in range(n):
        for ia, a in enumerate(spec.actions_p1):
            for ib, b in enumerate(spec.actions_p2):
                for j, value in spec.rate(i, a, b).items():
                    if j == i:
                        continue
                    if j < 0:
                        raise ModelError(
                            f"rate rule sends state {i} to negative state {j}"
                        )
                    if j > s_max:
                        dropped += 1
                        continue
                    q[i, ia, ib, j] = float(value)
                q[i, ia, ib, i] = -q[i, ia, ib].sum()
                r[i, ia, ib] = spec.reward(i, a, b)
    if dropped:
        logger.debug("truncation at %d dropped %d rate entries", s_max, dropped)
    psi1 = [spec.psi1(i) for i in range(n)]
    psi2 = [spec.psi2(i) for i in range(n)]
    return GameModel(spec.alpha, spec.actions_p1, spec.actions_p2, q, r, psi1, psi2)


@dataclass
class ValueFunction:
    """State-indexed values living in the weighted space B_W(S)."""

    values: np.ndarray
    weight: np.ndarray
    iterations: int = 0
    residual: Optional[float] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.weight = np.asarray(self.weight, dtype=float)

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, i):
        return self.values[i]

    def norm(self) -> float:
        return weighted_norm(self)


def weighted_norm(f: ValueFunction) -> float:
    """Return max_i |f(i)| / W(i).
    :param ValueFunction f: Function with its weight.
    :raises DegenerateWeight: When W is not strictly positive.
    """
    bad = np.flatnonzero(~(f.weight > 0))
    if bad.size:
        raise DegenerateWeight(int(bad[0]))
    if f.values.size == 0:
        return 0.0
    return float(np.max(np.abs(f.values) / f.weight))


@dataclass
class LyapunovCertificate:
    """Drift functions and constants witnessing the standing assumptions.

    ``w`` has shape (N, S): the functions w_1..w_N.
    """

    w: np.ndarray
    W_tilde: np.ndarray
    M: float
    c: float
    c_tilde: float

    def __post_init__(self):
        self.w = np.atleast_2d(np.asarray(self.w, dtype=float))
        self.W_tilde = np.asarray(self.W_tilde, dtype=float)

    @property
    def W(self) -> np.ndarray:
        return self.w.sum(axis=0)

    def as_dict(self) -> Dict[str, Any]:
        return {
            "N": int(self.w.shape[0]),
            "W": self.W,
            "W_tilde": self.W_tilde,
            "M": self.M,
            "c": self.c,
            "c_tilde": self.c_tilde,
        }


@dataclass(frozen=True)
class Violation:
    """One violated assumption, located at (i, a, b, j) where relevant."""

    kind: str
    message: str
    state: Optional[int] = None
    a: Optional[int] = None
    b: Optional[int] = None
    j: Optional[int] = None

    def __str__(self):
        loc = [
            f"{k}={v}"
            for k, v in (("i", self.state), ("a", self.a), ("b", self.b), ("j", self.j))
            if v is not None
        ]
        where = f" at {', '.join(loc)}" if loc else ""
        return f"{self.kind}{where}: {self.message}"

    def as_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "message": self.message,
            "state": self.state,
            "a": self.a,
            "b": self.b,
            "j": self.j,
        }


@dataclass
class ValidationReport:
    """Outcome of :func:`validate_model`."""

    violations: List[Violation] = field(default_factory=list)
    certificate: Optional[LyapunovCertificate] = None
    auto_certificate: bool = False

    @property
    def ok(self) -> bool:
        return not self.violations

    def raise_for_violations(self) -> None:
        if self.violations:
            raise ModelRejected(self.violations)

    def as_dict(self) -> Dict[str, Any]:
        return {
            "ok": self.ok,
            "violations": [v.as_dict() for v in self.violations],
            "auto_certificate": self.auto_certificate,
            "certificate": self.certificate.as_dict() if self.certificate else None,
        }


def _locate(kind: str, mask: np.ndarray, message: str) -> List[Violation]:
    found = []
    for idx in np.argwhere(mask):
        idx = [int(x) for x in idx]
        keys = ("state", "a", "b", "j")[: len(idx)]
        found.append(Violation(kind, message, **dict(zip(keys, idx))))
    return found


def _exceeds(lhs: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    return lhs > rhs + CERTIFICATE_RTOL * (1.0 + np.abs(rhs))


def check_certificate(
    model: GameModel, cert: LyapunovCertificate
) -> List[Violation]:
    """Re-check every drift and growth inequality of a certificate."""
    found: List[Violation] = []
    w, W, Wt = cert.w, cert.W, cert.W_tilde
    n = model.num_states
    if w.shape[1] != n or Wt.shape != (n,):
        return [Violation("certificate", "certificate functions have wrong length")]
    for name, value in (("M", cert.M), ("c", cert.c), ("c_tilde", cert.c_tilde)):
        if not value > 0:
            found.append(Violation("certificate", f"constant {name} must be positive"))
    found += _locate("certificate", (w < 0).any(axis=0), "negative w_n")
    found += _locate("certificate", Wt < 0, "negative W_tilde")

    for k in range(w.shape[0]):
        drift = np.einsum("iabj,j->iab", model.rates, w[k])
        bound = w[k + 1][:, None, None] if k + 1 < w.shape[0] else np.zeros_like(drift)
        found += _locate(
            "drift",
            _exceeds(drift, np.broadcast_to(bound, drift.shape)),
            f"sum_j q(j|i,a,b) w_{k + 1}(j) exceeds its bound",
        )

    found += _locate("stable", _exceeds(model.exit_rates, cert.c * W), "q(i) > c W(i)")
    found += _locate(
        "growth", _exceeds(model.reward, cert.M * W[:, None, None]), "r > M W"
    )
    found += _locate("growth", _exceeds(model.psi1, cert.M * W), "psi1 > M W")
    found += _locate(
        "growth", _exceeds(model.exit_rates * W, cert.M * Wt), "q(i) W(i) > M W_tilde(i)"
    )
    drift_t = np.einsum("iabj,j->iab", model.rates, Wt)
    found += _locate(
        "drift",
        _exceeds(drift_t, (cert.c * Wt + cert.c_tilde)[:, None, None]),
        "sum_j q W_tilde(j) > c W_tilde(i) + c_tilde",
    )
    return found


def trivial_certificate(model: GameModel) -> LyapunovCertificate:
    """Certificate with constant weights, always available on finite models.

    A constant is annihilated by every conservative row, so every drift
    inequality holds with equality.
    """
    kappa = max(1.0, float(model.psi1.max(initial=0.0)), float(model.reward.max(initial=0.0)))
    q_max = float(model.exit_rates.max(initial=0.0))
    n = model.num_states
    return LyapunovCertificate(
        w=np.full((1, n), kappa),
        W_tilde=np.full(n, max(1.0, q_max * kappa)),
        M=1.0,
        c=max(1.0, q_max / kappa),
        c_tilde=1.0,
    )


def validate_model(
    model: GameModel,
    cert: Optional[LyapunovCertificate] = None,
    strict: bool = True,
) -> ValidationReport:
    """Check the standing assumptions on a finite model.

    :param GameModel model: The model to check.
    :param LyapunovCertificate cert: (Optional) Certificate to verify; a
        constant-weight certificate is built when absent.
    :param bool strict: Raise :class:`ModelRejected` on any violation
        instead of only reporting it.
    :rtype: :class:`ValidationReport <ValidationReport>`
    """
    report = ValidationReport()
    v = report.violations
    if not (np.isfinite(model.alpha) and model.alpha > 0):
        v.append(Violation("discount", f"alpha must be positive, got {model.alpha}"))
    for name in ("rates", "reward", "psi1", "psi2"):
        v += _locate("finite", ~np.isfinite(getattr(model, name)), f"{name} not finite")

    off = model.rates.copy()
    idx = np.arange(model.num_states)
    off[idx, :, :, idx] = 0.0
    v += _locate("rate_sign", off < 0, "negative off-diagonal rate")
    row_sums = model.rates.sum(axis=3)
    v += _locate(
        "conservative",
        np.abs(row_sums) > CONSERVATIVE_TOL,
        "row of q does not sum to zero",
    )
    v += _locate("nonnegative", model.reward < 0, "negative reward rate")
    v += _locate("nonnegative", model.psi1 < 0, "negative psi1")
    v += _locate("nonnegative", model.psi2 < 0, "negative psi2")
    v += _locate("separation", ~(model.psi2 < model.psi1), "psi2 >= psi1")

    if cert is not None:
        v += check_certificate(model, cert)
        report.certificate = cert
    elif not v:
        report.certificate = trivial_certificate(model)
        report.auto_certificate = True
        v += check_certificate(model, report.certificate)

    if v:
        logger.info("model rejected with %d violation(s)", len(v))
        if strict:
            report.raise_for_violations()
    else:
        logger.info("model with %d states validated", model.num_states)
    return report
