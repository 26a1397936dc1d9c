"""
Built-in model generators and the model, spec and solution file formats.
"""
import json
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Mapping, Optional

import numpy as np

from stopgame.dpi_solver import (
    DEFAULT_THETA,
    DEFAULT_TOL,
    EquilibriumSolution,
    StateClass,
    equilibrium_from_values,
    uniformize,
)
from stopgame.exceptions import ModelError, ModelFileError
from stopgame.game_model import (
    CountableModelSpec,
    GameModel,
    LyapunovCertificate,
    truncate_model,
    validate_model,
)
from stopgame.helpers import canonical_json


logger = logging.getLogger(__name__)


def _constant(value: float) -> Callable[[int], float]:
    return lambda i: value


@dataclass
class QueueSpec:
    """Single-server queue where player I buys service speed and player II
    buys arrivals.

    ``h`` maps player I's action labels to the service boost and ``g``
    maps player II's labels to the arrival boost. State ``i`` is the
    number of customers; ``arrival(i)`` and ``service(i)`` are the base
    rates (``service(0)`` is never used).
    """

    arrival: Callable[[int], float] = _constant(1.0)
    service: Callable[[int], float] = _constant(1.5)
    h: Mapping[str, float] = field(default_factory=lambda: {"base": 0.0, "fast": 1.0})
    g: Mapping[str, float] = field(default_factory=lambda: {"base": 0.0, "promote": 0.5})
    c: float = 0.05
    r_lin: float = 1.0
    c1: Optional[Callable[[int, str], float]] = None
    c2: Optional[Callable[[int, str], float]] = None
    c_bar: float = 8.0
    R: Callable[[int], float] = lambda i: 0.1 * i
    c_prime: float = 0.5
    alpha: float = 1.0
    s_max: int = 50

    def __post_init__(self):
        if self.c1 is None:
            self.c1 = lambda i, a: 0.2 * self.h[a]
        if self.c2 is None:
            self.c2 = lambda i, b: 0.1 * self.g[b]

    def reward(self, i: int, a: str, b: str) -> float:
        return self.c + self.r_lin * i + self.c1(i, a) - self.c2(i, b)

    def rate(self, i: int, a: str, b: str) -> Dict[int, float]:
        row = {i + 1: self.arrival(i) + self.g[b]}
        if i > 0:
            row[i - 1] = self.service(i) + self.h[a]
        return row

    def countable(self) -> CountableModelSpec:
        return CountableModelSpec(
            alpha=self.alpha,
            actions_p1=tuple(self.h),
            actions_p2=tuple(self.g),
            rate=self.rate,
            reward=self.reward,
            psi1=lambda i: self.c_bar + self.R(i),
            psi2=lambda i: self.c_prime,
        )

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any], path: str = "<spec>") -> "QueueSpec":
        """Read a JSON spec block.

        ``lambda``/``mu`` are a constant or a per-state list, ``h``/``g``
        map action labels to boosts, ``c1``/``c2`` map action labels to
        state-independent cost rates, and ``R`` is a per-state list or
        ``R_slope`` a linear coefficient.
        """
        known = {
            "lambda", "mu", "h", "g", "c", "r_lin", "c1", "c2", "c_bar",
            "R", "R_slope", "c_prime", "alpha", "s_max",
        }
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ModelFileError(path, unknown[0], "unknown queue parameter")

        kwargs: Dict[str, Any] = {}
        for key, name in (("lambda", "arrival"), ("mu", "service")):
            if key in doc:
                kwargs[name] = _state_rule(doc[key], key, path)
        for key in ("h", "g"):
            if key in doc:
                kwargs[key] = _label_map(doc[key], key, path)
        for key in ("c", "r_lin", "c_bar", "c_prime", "alpha"):
            if key in doc:
                kwargs[key] = _number(doc[key], key, path)
        if "s_max" in doc:
            if not isinstance(doc["s_max"], int) or doc["s_max"] < 1:
                raise ModelFileError(path, "s_max", "must be a positive integer")
            kwargs["s_max"] = doc["s_max"]
        if "R" in doc:
            kwargs["R"] = _state_rule(doc["R"], "R", path)
        elif "R_slope" in doc:
            slope = _number(doc["R_slope"], "R_slope", path)
            kwargs["R"] = lambda i: slope * i
        for key in ("c1", "c2"):
            if key in doc:
                costs = _label_map(doc[key], key, path)
                kwargs[key] = lambda i, label, costs=costs: costs[label]
        spec = cls(**kwargs)
        for key, costs, labels in (("c1", doc.get("c1"), spec.h), ("c2", doc.get("c2"), spec.g)):
            if costs is not None and set(costs) != set(labels):
                raise ModelFileError(path, key, "cost labels do not match the action labels")
        return spec


def _number(value: Any, key: str, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ModelFileError(path, key, "must be a number")
    return float(value)


def _state_rule(value: Any, key: str, path: str) -> Callable[[int], float]:
    if isinstance(value, list):
        values = [_number(v, key, path) for v in value]

        def rule(i: int) -> float:
            if i >= len(values):
                raise ModelFileError(path, key, f"no value for state {i}")
            return values[i]

        return rule
    return _constant(_number(value, key, path))


def _label_map(value: Any, key: str, path: str) -> Dict[str, float]:
    if not isinstance(value, dict) or not value:
        raise ModelFileError(path, key, "must map action labels to numbers")
    return {str(k): _number(v, key, path) for k, v in value.items()}


def default_queue_spec(**overrides: Any) -> QueueSpec:
    return QueueSpec(**overrides)


def queue_certificate(model: GameModel, kappa: float = 1.0) -> LyapunovCertificate:
    """Two-level linear certificate for birth-death style models.

    w_1(i) = kappa (1 + i) and w_2 = kappa d, where d bounds the drift of
    1 + i from above, so W(i) = kappa (1 + i) + kappa d.
    """
    if not kappa > 0:
        raise ModelError(f"kappa must be positive, got {kappa}")
    n = model.num_states
    lin = 1.0 + np.arange(n)
    drift = np.einsum("iabj,j->iab", model.rates, lin)
    d = max(0.0, float(drift.max()))
    w = kappa * np.vstack([lin, np.full(n, d)])
    W = w.sum(axis=0)
    q_max = float(model.exit_rates.max(initial=0.0))
    spread = max(1.0, q_max)
    M = max(
        1.0,
        float((model.reward / W[:, None, None]).max()),
        float((model.psi1 / W).max()),
    )
    return LyapunovCertificate(
        w=w,
        W_tilde=spread * W,
        M=M,
        c=max(1.0, float((model.exit_rates / W).max())),
        c_tilde=max(1.0, spread * kappa * d),
    )


def build_queueing_model(spec: Optional[QueueSpec] = None, validate: bool = True) -> GameModel:
    """Truncate the queue at ``spec.s_max`` and validate it against its
    linear certificate.
    :param bool validate: (Optional) Skip validation when False.
    :raises ModelRejected: When a reward rate is negative or the stop
        payoffs are not separated.
    """
    spec = spec or default_queue_spec()
    model = truncate_model(spec.countable(), spec.s_max)
    if validate:
        validate_model(model)
        validate_model(model, queue_certificate(model))
    logger.info("queue model with s_max=%d built", spec.s_max)
    return model


def random_model(
    rng: np.random.Generator,
    max_states: int = 8,
    max_actions: int = 3,
    max_rate: float = 5.0,
    alpha_range=(0.2, 2.0),
    density: float = 0.7,
) -> GameModel:
    """Random validated model for property tests and benchmarks.

    Off-diagonal rates are uniform on [0, max_rate] and kept with
    probability ``density``; rewards lie in [0, 2] and psi2 < psi1.
    """
    n = int(rng.integers(1, max_states + 1))
    nu = int(rng.integers(1, max_actions + 1))
    nv = int(rng.integers(1, max_actions + 1))
    q = rng.uniform(0.0, max_rate, (n, nu, nv, n))
    q *= rng.random((n, nu, nv, n)) < density
    idx = np.arange(n)
    q[idx, :, :, idx] = 0.0
    q[idx, :, :, idx] = -q.sum(axis=3)
    reward = rng.uniform(0.0, 2.0, (n, nu, nv))
    psi2 = rng.uniform(0.0, 1.0, n)
    psi1 = psi2 + rng.uniform(0.1, 2.0, n)
    alpha = float(rng.uniform(*alpha_range))
    model = GameModel(
        alpha,
        [f"a{k}" for k in range(nu)],
        [f"b{k}" for k in range(nv)],
        q, reward, psi1, psi2,
    )
    validate_model(model)
    return model


def _read_json(path: str) -> Any:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as err:
        raise ModelFileError(path, "<document>", err.msg, line=err.lineno) from err
    except OSError as err:
        raise ModelFileError(path, "<document>", err.strerror or str(err)) from err


def _require(doc: Mapping[str, Any], key: str, path: str) -> Any:
    if key not in doc:
        raise ModelFileError(path, key, "missing")
    return doc[key]


def _known_action(actions: list, label: Any) -> bool:
    # same rule as GameModel.from_sparse: a label, or a positional index
    if label in actions:
        return True
    return isinstance(label, int) and not isinstance(label, bool) and 0 <= label < len(actions)


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def load_model(path: str, validate: bool = True) -> GameModel:
    """Read a model file written by :func:`save_model`.
    :raises ModelFileError: On a malformed document.
    :raises ModelRejected: When the model fails validation.
    """
    doc = _read_json(path)
    if not isinstance(doc, dict):
        raise ModelFileError(path, "<document>", "expected a JSON object")
    fields = {
        key: _require(doc, key, path)
        for key in ("alpha", "states", "actions_p1", "actions_p2", "rates", "psi1", "psi2")
    }
    states = fields["states"]
    if not isinstance(states, int) or states < 1:
        raise ModelFileError(path, "states", "must be a positive integer")
    for key in ("psi1", "psi2"):
        if not isinstance(fields[key], list) or len(fields[key]) != states:
            raise ModelFileError(path, key, f"must be a list of {states} numbers")
    for key in ("actions_p1", "actions_p2"):
        if not isinstance(fields[key], list) or not fields[key]:
            raise ModelFileError(path, key, "must be a non-empty list of labels")
    for key, width in (("rates", 5), ("rewards", 4)):
        for pos, entry in enumerate(doc.get(key, [])):
            if not isinstance(entry, list) or len(entry) != width:
                raise ModelFileError(path, f"{key}[{pos}]", f"expected {width} entries")
            for k in (0, 3) if width == 5 else (0,):
                if not isinstance(entry[k], int) or not 0 <= entry[k] < states:
                    raise ModelFileError(path, f"{key}[{pos}]", "state out of range")
            if not (_known_action(fields["actions_p1"], entry[1])
                    and _known_action(fields["actions_p2"], entry[2])):
                raise ModelFileError(path, f"{key}[{pos}]", "unknown action label")
    try:
        model = GameModel.from_sparse(
            fields["alpha"], states, fields["actions_p1"], fields["actions_p2"],
            fields["rates"], doc.get("rewards", []), fields["psi1"], fields["psi2"],
        )
    except (TypeError, ValueError, ModelError) as err:
        raise ModelFileError(path, "<document>", str(err)) from err
    if validate:
        validate_model(model)
    return model


def save_model(model: GameModel, path: str) -> None:
    # full float precision, so that loading gives back the same model
    _write(path, json.dumps(model.to_document(), indent=2, sort_keys=True) + "\n")


def load_queue_spec(path: str) -> QueueSpec:
    """Read a queue spec block, bare or under a ``"queue"`` key."""
    doc = _read_json(path)
    if isinstance(doc, dict) and isinstance(doc.get("queue"), dict):
        doc = doc["queue"]
    if not isinstance(doc, dict):
        raise ModelFileError(path, "<document>", "expected a JSON object")
    return QueueSpec.from_dict(doc, path)


def save_solution(solution: EquilibriumSolution, path: str) -> None:
    _write(path, canonical_json(solution.as_document()))


def load_solution(
    path: str,
    model: GameModel,
    theta: float = DEFAULT_THETA,
    tol: float = DEFAULT_TOL,
) -> EquilibriumSolution:
    """Rebuild a solution from its values (and classification, when given)
    for verification against ``model``.
    """
    doc = _read_json(path)
    if not isinstance(doc, dict):
        raise ModelFileError(path, "<document>", "expected a JSON object")
    values = _require(doc, "u_star", path)
    if not isinstance(values, list) or len(values) != model.num_states:
        raise ModelFileError(path, "u_star", f"must be a list of {model.num_states} numbers")
    values = [_number(v, "u_star", path) for v in values]
    tags = doc.get("classification")
    if tags is not None:
        try:
            tags = [StateClass(t) for t in tags]
        except (TypeError, ValueError) as err:
            raise ModelFileError(path, "classification", str(err)) from err
        if len(tags) != model.num_states:
            raise ModelFileError(path, "classification", "wrong number of states")
    return equilibrium_from_values(uniformize(model, theta), values, tol, tags)
