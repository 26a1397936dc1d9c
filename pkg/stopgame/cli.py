"""A command line application to solve and verify stopping games."""
import sys
import time
import shutil
import logging
import argparse
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

from stopgame import __version__, models, reports
from stopgame.dpi_solver import (
    DEFAULT_MAX_ITER,
    DEFAULT_THETA,
    DEFAULT_TOL,
    EquilibriumSolution,
    uniformize,
    value_iterate,
    verify_dpi,
)
from stopgame.evaluator import equilibrium_profile, exact_value, saddle_certificate
from stopgame.exceptions import StopGameError
from stopgame.game_model import GameModel, validate_model
from stopgame.helpers import canonical_json, errors_as_dict, setup_logger
from stopgame.simulator import SAMPLING, SimulationConfig, estimate_payoff, simulate_paths


logger = logging.getLogger(__name__)

COMMANDS = ("validate", "solve", "verify", "simulate", "bench", "queue-demo")
EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_ERROR = 2
# agreement band between the Monte-Carlo estimate and the exact payoff
SE_BAND = 3.5
BENCH_GRID = (10, 25, 50)


@dataclass
class RunConfig:
    """Everything one CLI run needs."""

    command: str
    model_path: Optional[str] = None
    queue_spec: Optional[str] = None
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    theta: float = DEFAULT_THETA
    seed: int = 0
    paths: int = 10000
    smax: List[int] = field(default_factory=list)
    out: Optional[str] = None
    formats: Sequence[str] = ("json", "csv")
    solution_path: Optional[str] = None
    initial: int = 0
    sampling: str = "uniformized"

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.paths < 1:
            raise ValueError("paths must be at least 1")


def main(args: Optional[List[str]] = None):
    """Command line application to solve zero-sum games with control and stopping."""
    # noinspection PyTypeChecker
    parser = argparse.ArgumentParser(description=main.__doc__)
    ns = _parse_args(parser, args)
    if ns.verbose:
        setup_logger(logging.DEBUG, log_filename=ns.logfile)
        logger.debug(f'stopgame version: {__version__}')
    elif ns.logfile:
        setup_logger(logging.INFO, log_filename=ns.logfile)

    try:
        config = RunConfig(
            command=ns.command,
            model_path=ns.model,
            queue_spec=ns.queue_spec,
            tol=ns.tol,
            max_iter=ns.max_iter,
            theta=ns.theta,
            seed=ns.seed,
            paths=ns.paths,
            smax=ns.smax or [],
            out=ns.out,
            formats=ns.format,
            solution_path=ns.solution,
            initial=ns.initial,
            sampling=ns.sampling,
        )
    except ValueError as err:
        parser.error(str(err))
    sys.exit(run(config))


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _parse_args(
    parser: argparse.ArgumentParser, args: Optional[List] = None
) -> argparse.Namespace:
    parser.add_argument("command", choices=COMMANDS, help="What to run")
    parser.add_argument(
        "--version", action="version", version="%(prog)s " + __version__,
    )
    parser.add_argument("--model", help="Path of a model JSON file")
    parser.add_argument(
        "--queue-spec",
        help="Path of a queue parameter block (JSON); builds the queue model",
    )
    parser.add_argument(
        "--tol", type=_positive_float, default=DEFAULT_TOL,
        help="Convergence tolerance of value iteration",
    )
    parser.add_argument(
        "--max-iter", type=_positive_int, default=DEFAULT_MAX_ITER,
        help="Maximum number of value iteration sweeps",
    )
    parser.add_argument(
        "--theta", type=_positive_float, default=DEFAULT_THETA,
        help="Uniformization constant",
    )
    parser.add_argument("--seed", type=int, default=0, help="Master seed")
    parser.add_argument(
        "--paths", type=_positive_int, default=10000,
        help="Number of simulated paths",
    )
    parser.add_argument(
        "--smax", type=_positive_int, nargs="+",
        help="Queue truncation level; several levels form the bench grid",
    )
    parser.add_argument(
        "--out",
        help=(
            "The output directory for artifacts. "
            "Default is current working directory"
        ),
    )
    parser.add_argument(
        "--format", nargs="+", choices=("json", "csv"), default=["json", "csv"],
        help="Artifact formats to write",
    )
    parser.add_argument(
        "--solution", help="Verify this solution file instead of solving",
    )
    parser.add_argument(
        "--initial", type=int, default=0, help="Initial state for simulate",
    )
    parser.add_argument(
        "--sampling", choices=SAMPLING, default="uniformized",
        help="How simulated paths resample randomized actions",
    )
    parser.add_argument(
        "-v",
        "--verbose",
        action="store_true",
        dest="verbose",
        help="Set logger output to verbose output.",
    )
    parser.add_argument(
        "--logfile",
        action="store",
        help="logging debug and error messages into a log file",
    )
    return parser.parse_args(args)


def display_progress_bar(
    done: int, total: int, ch: str = "█", scale: float = 0.55
) -> None:
    """Display a simple, pretty progress bar on stderr.
    :param int done: Work units finished.
    :param int total: Total work units.
    :param str ch: Character to use for presenting progress segment.
    :param float scale: Scale multiplier to reduce progress bar size.
    """
    columns = shutil.get_terminal_size().columns
    max_width = int(columns * scale)

    filled = int(round(max_width * done / float(total)))
    remaining = max_width - filled
    progress_bar = ch * filled + " " * remaining
    percent = round(100.0 * done / float(total), 1)
    sys.stderr.write(f" ↳ |{progress_bar}| {percent}%\r")
    if done >= total:
        sys.stderr.write("\n")
    sys.stderr.flush()


def _load_model(config: RunConfig, s_max: Optional[int] = None) -> GameModel:
    if config.model_path and config.command != "queue-demo":
        return models.load_model(config.model_path, validate=config.command != "validate")
    spec = (
        models.load_queue_spec(config.queue_spec)
        if config.queue_spec
        else models.default_queue_spec()
    )
    if s_max is None and config.smax:
        s_max = config.smax[0]
    if s_max is not None:
        spec.s_max = s_max
    return models.build_queueing_model(spec, validate=config.command != "validate")


def _solve(config: RunConfig, model: GameModel) -> EquilibriumSolution:
    um = uniformize(model, config.theta)
    return value_iterate(um, config.tol, config.max_iter)


def _validate(config: RunConfig) -> Dict[str, Any]:
    model = _load_model(config)
    report = validate_model(model, strict=False)
    if report.ok and config.model_path is None:
        cert_report = validate_model(model, models.queue_certificate(model), strict=False)
        if cert_report.ok:
            report = cert_report
    doc = report.as_dict()
    return {"passed": report.ok, "artifacts": {"validation.json": doc}}


def _solve_command(config: RunConfig) -> Dict[str, Any]:
    model = _load_model(config)
    solution = _solve(config, model)
    written = reports.write_solution_artifacts(model, solution, config.out, config.formats)
    return {
        "passed": True,
        "artifacts": {},
        "written": written,
        "iterations": solution.iterations,
    }


def _verify(config: RunConfig) -> Dict[str, Any]:
    model = _load_model(config)
    if config.solution_path:
        solution = models.load_solution(config.solution_path, model, config.theta, config.tol)
    else:
        solution = _solve(config, model)
    dpi = verify_dpi(uniformize(model, config.theta), solution)
    saddle = saddle_certificate(model, solution, seed=config.seed, theta=config.theta)
    return {
        "passed": dpi.passed and saddle.passed,
        "artifacts": {
            "dpi_report.json": dpi.as_dict(),
            "saddle_report.json": saddle.as_dict(),
        },
    }


def _simulate(config: RunConfig) -> Dict[str, Any]:
    model = _load_model(config)
    solution = _solve(config, model)
    profile = equilibrium_profile(solution)
    cfg = SimulationConfig(
        config.paths, config.seed, sampling=config.sampling, theta=config.theta
    )
    paths = simulate_paths(model, profile, cfg, config.initial, on_progress=display_progress_bar)
    estimate = estimate_payoff(paths, model, profile)
    exact = exact_value(model, profile)
    i = config.initial
    deviation = abs(estimate.values[i] - exact.values[i])
    passed = deviation <= SE_BAND * estimate.stderr[i] + 1e-9
    doc = {
        "initial": i,
        "estimate": estimate.as_dict(),
        "exact": float(exact.values[i]),
        "u_star": float(solution.values[i]),
        "deviation": deviation,
        "num_paths": config.paths,
        "seed": config.seed,
        "sampling": config.sampling,
    }
    artifacts: Dict[str, Any] = {"payoff.json": doc}
    if "csv" in config.formats:
        artifacts["paths.csv"] = reports.path_table(paths)
    return {"passed": bool(passed), "artifacts": artifacts}


def _bench(config: RunConfig) -> Dict[str, Any]:
    runs = []
    grid = [None] if config.model_path else (config.smax or list(BENCH_GRID))
    for s_max in grid:
        model = _load_model(config, s_max)
        start = time.perf_counter()
        solution = _solve(config, model)
        runs.append({
            "s_max": s_max,
            "states": model.num_states,
            "iterations": solution.iterations,
            "residual": solution.residual,
            "seconds": time.perf_counter() - start,
        })
        logger.info("bench s_max=%s took %.3fs", s_max, runs[-1]["seconds"])
    return {"passed": True, "artifacts": {"bench.json": {"runs": runs}}}


def _queue_demo(config: RunConfig) -> Dict[str, Any]:
    model = _load_model(config)
    solution = _solve(config, model)
    dpi = verify_dpi(uniformize(model, config.theta), solution)
    written = reports.write_solution_artifacts(model, solution, config.out)
    return {
        "passed": dpi.passed,
        "artifacts": {"dpi_report.json": dpi.as_dict()},
        "written": written,
        "A1": sorted(solution.region_A1),
        "A2": sorted(solution.region_A2),
        "iterations": solution.iterations,
    }


_HANDLERS = {
    "validate": _validate,
    "solve": _solve_command,
    "verify": _verify,
    "simulate": _simulate,
    "bench": _bench,
    "queue-demo": _queue_demo,
}


def run(config: RunConfig) -> int:
    """Execute one command, write its artifacts and print a JSON summary.
    :rtype: int
    :returns: Exit status, 0 only when every check passed.
    """
    try:
        outcome = _HANDLERS[config.command](config)
    except StopGameError as err:
        logger.error("%s failed: %s", config.command, err)
        record = errors_as_dict(err)
        reports.write_json(record, "error.json", config.out)
        sys.stdout.write(canonical_json(record))
        return EXIT_ERROR

    # some handlers write their own files
    written = outcome.pop("written", [])
    for name, content in outcome.pop("artifacts").items():
        if name.endswith(".json"):
            written.append(reports.write_json(content, name, config.out))
        else:
            written.append(reports.write_artifact(content, name, config.out))
    summary = {"command": config.command, "artifacts": written, **outcome}
    sys.stdout.write(canonical_json(summary))
    return EXIT_OK if outcome["passed"] else EXIT_CHECK_FAILED


if __name__ == "__main__":
    main()
