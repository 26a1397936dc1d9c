import numpy as np
import pytest

from stopgame import GameModel
from stopgame.dpi_solver import uniformize, value_iterate
from stopgame.models import QueueSpec, build_queueing_model, random_model


def single_state_model(rho=1.0, alpha=0.5, psi1=10.0, psi2=0.0):
    """One absorbing state paying ``rho`` per unit time."""
    return GameModel(
        alpha, ["x"], ["y"],
        np.zeros((1, 1, 1, 1)), np.full((1, 1, 1), rho), [psi1], [psi2],
    )


def death_chain(rate=1.0, alpha=1.0):
    """State 1 falls to state 0 at ``rate``; nothing else moves."""
    q = np.zeros((2, 1, 1, 2))
    q[1, 0, 0, 0] = rate
    q[1, 0, 0, 1] = -rate
    return GameModel(alpha, ["x"], ["y"], q, np.zeros((2, 1, 1)), [2.0, 2.0], [1.0, 1.0])


def flip_model():
    """Two states, two actions each; player I slows the flip from 0 to 1,
    player II speeds it up, and state 1 pays more.
    """
    q = np.zeros((2, 2, 2, 2))
    for a in range(2):
        for b in range(2):
            up = 1.0 + b - 0.5 * a
            down = 1.0 + a
            q[0, a, b, 1], q[0, a, b, 0] = up, -up
            q[1, a, b, 0], q[1, a, b, 1] = down, -down
    reward = np.array([
        [[0.5, 0.2], [0.8, 0.4]],
        [[2.0, 1.5], [2.5, 2.2]],
    ])
    return GameModel(1.0, ["slow", "hold"], ["push", "wait"], q, reward, [3.0, 4.0], [0.2, 1.8])


@pytest.fixture
def absorbing():
    return single_state_model()


@pytest.fixture
def death():
    return death_chain()


@pytest.fixture
def flip():
    return flip_model()


@pytest.fixture(scope="session")
def small_queue():
    """Default queue parameters on a short truncation."""
    return build_queueing_model(QueueSpec(s_max=12))


@pytest.fixture(scope="session")
def queue_model():
    return build_queueing_model(QueueSpec())


def make_random_models(count, seed, **kwargs):
    rng = np.random.default_rng(seed)
    return [random_model(rng, **kwargs) for _ in range(count)]


@pytest.fixture(scope="session")
def random_models():
    """Seeded random instances with |S| <= 8 and up to 3 actions per player."""
    return make_random_models(200, seed=20240611)


@pytest.fixture(scope="session")
def solved_random_models(random_models):
    """(model, uniformized model, solution) for every random instance."""
    solved = []
    for model in random_models:
        um = uniformize(model)
        solved.append((model, um, value_iterate(um, tol=1e-10, keep_history=True)))
    return solved


def pytest_addoption(parser):
    parser.addoption(
        "--runslow", action="store_true", default=False,
        help="Also run the full-scale simulation checks",
    )


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-scale check, needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)
