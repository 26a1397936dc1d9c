from unittest import mock

import numpy as np
import pytest

from stopgame import StoppingGame
from stopgame.dpi_solver import StateClass
from stopgame.exceptions import ModelRejected
from stopgame.evaluator import Method
from stopgame.models import QueueSpec, save_model
from tests.conftest import single_state_model


@pytest.fixture
def game(flip):
    return StoppingGame(flip)


def test_repr(game):
    assert repr(game).startswith("<stopgame.__main__.StoppingGame object:")


def test_rejects_invalid_model_on_construction():
    with pytest.raises(ModelRejected):
        StoppingGame(single_state_model(psi1=1.0, psi2=1.0))


def test_results_are_cached(game):
    assert game.uniformized is game.uniformized
    assert game.solution is game.solution
    assert game.dpi_report is game.dpi_report


def test_solution_verifies(game):
    assert game.validation.ok
    assert game.dpi_report.passed
    assert game.saddle_report.passed
    assert len(game.solution.classification) == 2


def test_evaluate_equilibrium_matches_value(game):
    est = game.evaluate()
    assert est.method is Method.EXACT
    np.testing.assert_allclose(est.values, game.values, atol=1e-7)


def test_register_on_progress_callback(flip):
    game = StoppingGame(flip)
    on_progress = mock.MagicMock()
    game.register_on_progress_callback(on_progress)
    game.solution
    assert on_progress.call_count == game.solution.iterations + 1


def test_from_file(tmp_path, flip):
    path = str(tmp_path / "flip.json")
    save_model(flip, path)
    game = StoppingGame.from_file(path, tol=1e-10)
    assert game.model == flip
    assert game.tol == 1e-10


def test_from_queue_builds_truncated_queue():
    game = StoppingGame.from_queue(QueueSpec(s_max=10))
    assert game.model.num_states == 11
    assert game.solution.classification[0] is not StateClass.STOP_P1


def test_simulate_absorbing_state():
    game = StoppingGame(single_state_model(rho=1.0, alpha=0.5))
    est = game.simulate(initial=0, num_paths=10, seed=1)
    assert est.values[0] == pytest.approx(2.0, abs=1e-6)
    assert est.counts[0] == 10


def test_simulate_paths_reports_progress(flip):
    on_progress = mock.Mock()
    game = StoppingGame(flip, on_progress_callback=on_progress)
    paths = game.simulate_paths(initial=1, num_paths=20, seed=3, sampling="sojourn")
    assert len(paths) == 20
    on_progress.assert_called_with(20, 20)
