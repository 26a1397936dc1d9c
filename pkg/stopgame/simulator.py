"""
Monte-Carlo simulation of the controlled chain under a fixed profile.

Each path owns a counter-based Philox stream keyed by ``(master_seed,
path index)``, so a path set does not depend on thread scheduling.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from stopgame.dpi_solver import DEFAULT_THETA
from stopgame.evaluator import Method, PayoffEstimate, StrategyProfile
from stopgame.exceptions import InvalidProfile, SimulationConfigError
from stopgame.game_model import GameModel
from stopgame.helpers import thread_count


logger = logging.getLogger(__name__)

DEFAULT_BIAS = 1e-6
SAMPLING = ("uniformized", "sojourn")
_CHUNK = 256


class StopReason(str, Enum):
    P1_STOP = "P1_STOP"
    P2_STOP = "P2_STOP"
    HORIZON = "HORIZON"


def _tail_scale(model: GameModel) -> float:
    return float(model.reward.max()) / model.alpha + float(model.psi1.max())


@dataclass(frozen=True)
class SimulationConfig:
    """Path count, seed and truncation settings of a simulation run.

    ``horizon_cap`` left as ``None`` is derived from ``bias``; an explicit
    cap must keep the truncation bias below ``bias``.
    """

    num_paths: int
    master_seed: int = 0
    horizon_cap: Optional[float] = None
    bias: float = DEFAULT_BIAS
    sampling: str = "uniformized"
    theta: float = DEFAULT_THETA

    def __post_init__(self):
        if int(self.num_paths) < 1:
            raise SimulationConfigError(f"num_paths must be positive, got {self.num_paths}")
        if not self.bias > 0:
            raise SimulationConfigError(f"bias must be positive, got {self.bias}")
        if self.horizon_cap is not None and not self.horizon_cap > 0:
            raise SimulationConfigError(f"horizon_cap must be positive, got {self.horizon_cap}")
        if self.sampling not in SAMPLING:
            raise SimulationConfigError(f"unknown sampling {self.sampling!r}")
        if not self.theta > 0:
            raise SimulationConfigError(f"theta must be positive, got {self.theta}")

    def horizon(self, model: GameModel) -> float:
        """Simulation horizon for ``model``.
        :raises SimulationConfigError:
            When an explicit cap leaves more than ``bias`` of the payoff
            beyond the horizon.
        """
        tail = _tail_scale(model)
        if self.horizon_cap is None:
            return max(math.log(max(tail / self.bias, 1.0)), 1.0) / model.alpha
        left = math.exp(-model.alpha * self.horizon_cap) * tail
        if left > self.bias:
            raise SimulationConfigError(
                f"horizon_cap {self.horizon_cap} leaves bias {left:.3e} > {self.bias:.1e}"
            )
        return float(self.horizon_cap)


@dataclass
class PathRecord:
    """One simulated trajectory.

    ``times[k]`` starts segment ``k`` spent in ``states[k]`` under
    ``actions[k]``. A stopped path ends with the stopping state, which
    has no action; ``end_time`` is the stopping or horizon time.
    """

    times: List[float]
    states: List[int]
    actions: List[Tuple[int, int]]
    stop_reason: StopReason
    end_time: float

    @property
    def initial(self) -> int:
        return self.states[0]

    def payoff(self, model: GameModel) -> float:
        """Discounted reward integral plus discounted terminal payoff."""
        alpha = model.alpha
        bounds = self.times[1:len(self.actions)] + [self.end_time]
        total = 0.0
        for start, end, state, (a, b) in zip(self.times, bounds, self.states, self.actions):
            total += model.reward[state, a, b] * (math.exp(-alpha * start) - math.exp(-alpha * end)) / alpha
        if self.stop_reason is StopReason.P1_STOP:
            total += math.exp(-alpha * self.end_time) * model.psi1[self.states[-1]]
        elif self.stop_reason is StopReason.P2_STOP:
            total += math.exp(-alpha * self.end_time) * model.psi2[self.states[-1]]
        return total


def path_generator(master_seed: int, index: int) -> np.random.Generator:
    seq = np.random.SeedSequence(master_seed, spawn_key=(index,))
    return np.random.Generator(np.random.Philox(seq))


class _PathSampler:
    def __init__(self, model: GameModel, profile: StrategyProfile, cfg: SimulationConfig):
        self.model = model
        self.horizon = cfg.horizon(model)
        self.uniformized = cfg.sampling == "uniformized"
        n = model.num_states
        off = np.array(model.rates)
        off[np.arange(n), :, :, np.arange(n)] = 0.0
        self.jumps = np.cumsum(off, axis=3)
        self.outflow = self.jumps[..., -1]
        self.clock = model.exit_rates + cfg.theta
        self.stop1, self.stop2 = profile.stopping_masks()
        self.phi_cdf = np.cumsum(profile.phi, axis=1)
        self.psi_cdf = np.cumsum(profile.psi, axis=1)

    @staticmethod
    def _draw(cdf: np.ndarray, u: float) -> int:
        return min(int(np.searchsorted(cdf, u * cdf[-1], side="right")), len(cdf) - 1)

    def run(self, initial: int, rng: np.random.Generator) -> PathRecord:
        t, i = 0.0, initial
        times, states, actions = [0.0], [initial], []
        while True:
            if self.stop2[i]:
                return PathRecord(times, states, actions, StopReason.P2_STOP, t)
            if self.stop1[i]:
                return PathRecord(times, states, actions, StopReason.P1_STOP, t)
            a = self._draw(self.phi_cdf[i], rng.random())
            b = self._draw(self.psi_cdf[i], rng.random())
            actions.append((a, b))
            rate = self.clock[i] if self.uniformized else self.outflow[i, a, b]
            if rate <= 0.0:
                logger.debug("state %d has no outflow, holding to the horizon", i)
                return PathRecord(times, states, actions, StopReason.HORIZON, self.horizon)
            t += rng.exponential(1.0 / rate)
            if t >= self.horizon:
                return PathRecord(times, states, actions, StopReason.HORIZON, self.horizon)
            # thinning: mass above the true outflow keeps the chain in place
            u = rng.random() * rate
            row = self.jumps[i, a, b]
            if u < row[-1]:
                i = int(np.searchsorted(row, u, side="right"))
            times.append(t)
            states.append(i)


def simulate_paths(
    model: GameModel,
    profile: StrategyProfile,
    cfg: SimulationConfig,
    initial: int,
    on_progress: Optional[Callable[[int, int], None]] = None,
) -> List[PathRecord]:
    """Simulate ``cfg.num_paths`` paths from ``initial``.
    :param func on_progress: (Optional) Called as ``(paths_done, num_paths)``
        after each block of paths.
    :rtype: list of :class:`PathRecord <PathRecord>` ordered by path index.
    """
    if profile.num_states != model.num_states:
        raise InvalidProfile("profile and model have different state counts")
    if not 0 <= initial < model.num_states:
        raise SimulationConfigError(f"initial state {initial} is not a model state")
    sampler = _PathSampler(model, profile, cfg)
    total = int(cfg.num_paths)
    blocks = [range(k, min(k + _CHUNK, total)) for k in range(0, total, _CHUNK)]

    def run_block(block: range) -> List[PathRecord]:
        return [sampler.run(initial, path_generator(cfg.master_seed, k)) for k in block]

    logger.info("simulating %d paths from state %d (horizon %.3f, %s sampling)",
                total, initial, sampler.horizon, cfg.sampling)
    paths: List[PathRecord] = []
    workers = thread_count()
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        results = pool.map(run_block, blocks) if pool is not None else map(run_block, blocks)
        for chunk in results:
            paths.extend(chunk)
            if on_progress is not None:
                on_progress(len(paths), total)
    finally:
        if pool is not None:
            pool.shutdown()
    return paths


def estimate_payoff(
    paths: Sequence[PathRecord], model: GameModel, profile: StrategyProfile
) -> PayoffEstimate:
    """Sample mean and standard error of the path payoffs per initial state.

    States without simulated paths carry NaN.
    :rtype: :class:`PayoffEstimate <PayoffEstimate>`
    """
    stop1, stop2 = profile.stopping_masks()
    n = model.num_states
    samples: List[List[float]] = [[] for _ in range(n)]
    for path in paths:
        last = path.states[-1]
        if (path.stop_reason is StopReason.P2_STOP and not stop2[last]) or (
            path.stop_reason is StopReason.P1_STOP and not stop1[last]
        ):
            raise InvalidProfile("path was not generated under this profile")
        samples[path.initial].append(path.payoff(model))

    values = np.full(n, np.nan)
    stderr = np.full(n, np.nan)
    counts = np.zeros(n, dtype=int)
    for i, xs in enumerate(samples):
        if not xs:
            continue
        size = len(xs)
        counts[i] = size
        if min(xs) == max(xs):
            values[i], stderr[i] = xs[0], 0.0
            continue
        mean = math.fsum(xs) / size
        values[i] = mean
        spread = math.fsum((x - mean) ** 2 for x in xs) / (size - 1)
        stderr[i] = math.sqrt(spread / size)
    return PayoffEstimate(values, Method.MONTE_CARLO, stderr=stderr, counts=counts)
