"""Artifact writers: per-state tables, plot data and JSON reports."""
import io
import os
import csv
import logging
from typing import Any, Iterable, List, Optional, Sequence

from stopgame.dpi_solver import EquilibriumSolution
from stopgame.game_model import GameModel
from stopgame.helpers import canonical_json, format_float, target_directory
from stopgame.simulator import PathRecord


logger = logging.getLogger(__name__)


def _cell(value: Any) -> Any:
    if isinstance(value, float):
        rounded = format_float(value)
        return "nan" if rounded is None else repr(rounded)
    return value


def _csv_text(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buffer.getvalue()


def state_table(model: GameModel, solution: EquilibriumSolution) -> str:
    """Per-state CSV: value, obstacles, classification and both controls.

    :rtype: str
    """
    header = ["i", "u_star", "psi1", "psi2", "classification"]
    header += [f"phi_{a}" for a in model.actions_p1]
    header += [f"psi_{b}" for b in model.actions_p2]

    def rows():
        for i in range(model.num_states):
            yield (
                [i, float(solution.values[i]), float(model.psi1[i]),
                 float(model.psi2[i]), solution.classification[i].value]
                + [float(p) for p in solution.phi_star[i]]
                + [float(p) for p in solution.psi_star[i]]
            )

    return _csv_text(header, rows())


def plot_table(model: GameModel, solution: EquilibriumSolution) -> str:
    """u* against both obstacles, one row per state, ready for plotting."""
    return _csv_text(
        ["i", "u_star", "psi1", "psi2"],
        (
            [i, float(solution.values[i]), float(model.psi1[i]), float(model.psi2[i])]
            for i in range(model.num_states)
        ),
    )


def path_table(paths: Sequence[PathRecord]) -> str:
    """Every segment of every path; the stop reason is on each path's last row."""
    def rows():
        for path_id, path in enumerate(paths):
            last = len(path.states) - 1
            for k, (t, state) in enumerate(zip(path.times, path.states)):
                a, b = path.actions[k] if k < len(path.actions) else ("", "")
                reason = path.stop_reason.value if k == last else ""
                yield [path_id, float(t), state, a, b, reason]

    return _csv_text(
        ["path_id", "jump_time", "state", "action_p1", "action_p2", "stop_reason"], rows()
    )


def write_artifact(
    text: str, filename: str, output_path: Optional[str] = None
) -> str:
    """Write an artifact below ``output_path``.
    :param str text: File contents.
    :param str filename: Name of the file.
    :param output_path: (optional) Output directory, defaults to the
        current working directory.
    :rtype: str
    :returns: Path of the written file.
    """
    file_path = os.path.join(target_directory(output_path), filename)
    with open(file_path, "w", encoding="utf-8") as file_handle:
        file_handle.write(text)
    logger.debug("wrote %s", file_path)
    return file_path


def write_json(obj: Any, filename: str, output_path: Optional[str] = None) -> str:
    return write_artifact(canonical_json(obj), filename, output_path)


def write_solution_artifacts(
    model: GameModel,
    solution: EquilibriumSolution,
    output_path: Optional[str] = None,
    formats: Sequence[str] = ("json", "csv"),
) -> List[str]:
    """Solution JSON, per-state CSV and plot CSV, as selected by ``formats``."""
    written = []
    if "json" in formats:
        written.append(write_json(solution.as_document(), "solution.json", output_path))
    if "csv" in formats:
        written.append(write_artifact(state_table(model, solution), "states.csv", output_path))
        written.append(write_artifact(plot_table(model, solution), "plot.csv", output_path))
    return written
