from unittest import mock

import numpy as np
import pytest

from stopgame import GameModel, ValueFunction, weighted_norm
from stopgame.dpi_solver import (
    StateClass,
    apply_T,
    classify,
    contact_tolerance,
    equilibrium_from_values,
    hamiltonian,
    stage_matrices,
    stage_payoff_matrix,
    uniformize,
    value_iterate,
    verify_dpi,
)
from stopgame.exceptions import MaxIterExceeded, ModelError
from stopgame.matrix_game import game_value
from tests.conftest import death_chain, make_random_models, single_state_model


def test_uniformized_kernel_is_stochastic(flip):
    um = uniformize(flip, theta=0.5)
    np.testing.assert_allclose(um.kernel.sum(axis=3), 1.0, atol=1e-12)
    assert um.kernel.min() >= 0.0
    assert np.all(um.stage_discount < 1.0)
    np.testing.assert_allclose(um.scale, 1.0 + flip.exit_rates + 0.5)


def test_uniformize_rejects_bad_theta(flip):
    with pytest.raises(ModelError):
        uniformize(flip, theta=0.0)


def test_uniformize_copies_weight(flip):
    weight = np.array([1.0, 2.0])
    um = uniformize(flip, weight=weight)
    weight[0] = 5.0
    assert um.weight[0] == 1.0


def symmetric_flip(rate, alpha=0.5):
    """Two states swapping at ``rate`` whatever the players do."""
    q = np.zeros((2, 1, 1, 2))
    for i in range(2):
        q[i, 0, 0, 1 - i], q[i, 0, 0, i] = rate, -rate
    return GameModel(alpha, ["x"], ["y"], q, np.ones((2, 1, 1)), [5.0, 5.0], [0.0, 0.0])


def test_stage_discount_from_exit_rate():
    um = uniformize(symmetric_flip(3.0, alpha=0.5), theta=1.0)
    np.testing.assert_allclose(um.stage_discount, [8 / 9, 8 / 9])


def test_flip_kernel():
    um = uniformize(symmetric_flip(2.0), theta=1.0)
    assert um.kernel[0, 0, 0, 1] == pytest.approx(2 / 3)
    assert um.kernel[0, 0, 0, 0] == pytest.approx(1 / 3)
    assert um.kernel[1, 0, 0, 0] == pytest.approx(2 / 3)


def test_absorbing_kernel_is_point_mass():
    um = uniformize(single_state_model(alpha=0.5), theta=1.0)
    assert um.kernel[0, 0, 0, 0] == 1.0
    assert um.stage_discount[0] == pytest.approx(1 / 1.5)


def test_stage_payoff_matrix_without_continuation_is_stage_reward(flip):
    um = uniformize(flip)
    zero = ValueFunction(np.zeros(2), um.weight)
    for i in range(2):
        np.testing.assert_allclose(stage_payoff_matrix(um, i, zero).payoff, um.stage_reward[i])


@pytest.mark.parametrize(("rho", "x"), [(1.0, 0.0), (2.0, 3.0), (0.0, 4.5)])
def test_stage_payoff_matrix_on_absorbing_state(rho, x):
    um = uniformize(single_state_model(rho=rho, alpha=0.5), theta=1.0)
    game = stage_payoff_matrix(um, 0, ValueFunction(np.array([x]), um.weight))
    np.testing.assert_allclose(game.payoff, [[(rho + x) / 1.5]])


def test_stage_payoff_matrix_single_action_is_scalar_bellman():
    # state 1 falls to 0 at rate 1: q(1) + theta = 2, kernel (1/2, 1/2)
    um = uniformize(death_chain(rate=1.0, alpha=1.0), theta=1.0)
    game = stage_payoff_matrix(um, 1, ValueFunction(np.array([1.0, 3.0]), um.weight))
    assert game.payoff.shape == (1, 1)
    assert game.payoff[0, 0] == pytest.approx(2 / 3 * (0.5 * 1.0 + 0.5 * 3.0))


def test_stage_payoff_matrix_matches_batched_form(flip):
    um = uniformize(flip, theta=0.7)
    phi = ValueFunction(np.array([1.3, 2.1]), um.weight)
    batched = stage_matrices(um, phi.values)
    for i in range(2):
        np.testing.assert_allclose(stage_payoff_matrix(um, i, phi).payoff, batched[i])


def test_apply_T_on_absorbing_state():
    um = uniformize(single_state_model(rho=1.0, alpha=0.5, psi1=10.0, psi2=0.0), theta=1.0)
    Tphi, sols = apply_T(um, ValueFunction(np.zeros(1), um.weight))
    assert Tphi.values[0] == pytest.approx(2 / 3)
    assert sols[0].value == pytest.approx(2 / 3)
    clamped, _ = apply_T(um, ValueFunction(np.array([100.0]), um.weight))
    assert clamped.values[0] == 10.0


def test_apply_T_from_lower_obstacle(flip):
    um = uniformize(flip)
    Tphi, _ = apply_T(um, ValueFunction(flip.psi2, um.weight))
    assert np.all(Tphi.values >= flip.psi2)


def test_absorbing_continuation_value():
    um = uniformize(single_state_model(rho=1.0, alpha=0.5))
    sol = value_iterate(um)
    assert sol.values[0] == pytest.approx(2.0, abs=1e-7)
    assert sol.classification == (StateClass.CONTINUATION,)
    assert verify_dpi(um, sol).passed


@pytest.mark.parametrize(
    ("rho", "expected", "tag"),
    [
        (10.0, 3.0, StateClass.STOP_P1),
        (0.1, 1.0, StateClass.STOP_P2),
    ],
)
def test_obstacles_bind(rho, expected, tag):
    um = uniformize(single_state_model(rho=rho, alpha=1.0, psi1=3.0, psi2=1.0))
    sol = value_iterate(um)
    assert sol.values[0] == pytest.approx(expected)
    assert sol.classification == (tag,)
    region = sol.region_A1 if tag is StateClass.STOP_P1 else sol.region_A2
    assert region == frozenset({0})


def test_iterates_are_monotone_and_sandwiched(solved_random_models):
    for model, _, sol in solved_random_models:
        history = np.array(sol.history)
        steps = np.diff(history, axis=0)
        assert steps.min(initial=0.0) >= -1e-12 * (1.0 + np.abs(history).max())
        for u in history[1:]:
            assert np.all(u >= model.psi2) and np.all(u <= model.psi1)


def test_fixed_point_residual(solved_random_models):
    for _, um, sol in solved_random_models:
        Tu, _ = apply_T(um, sol.u_star)
        assert weighted_norm(ValueFunction(Tu.values - sol.values, um.weight)) <= 1e-8


def test_dpi_holds_on_random_models(solved_random_models):
    for _, um, sol in solved_random_models:
        report = verify_dpi(um, sol, tol=1e-7)
        assert report.passed, report.violations
        assert report.forms_max_diff <= 1e-9


def test_stage_strategies_are_distributions(solved_random_models):
    for model, _, sol in solved_random_models:
        assert sol.phi_star.shape == (model.num_states, len(model.actions_p1))
        np.testing.assert_allclose(sol.phi_star.sum(axis=1), 1.0)
        np.testing.assert_allclose(sol.psi_star.sum(axis=1), 1.0)


def test_unique_fixed_point_from_above_and_other_theta():
    for model in make_random_models(50, seed=99):
        base = value_iterate(uniformize(model), tol=1e-10).values
        upper = value_iterate(uniformize(model), tol=1e-10, start="upper").values
        other = value_iterate(uniformize(model, theta=2.0), tol=1e-10).values
        assert np.abs(upper - base).max() <= 1e-6
        assert np.abs(other - base).max() <= 1e-6


def test_operator_is_monotone(flip):
    um = uniformize(flip)
    low = ValueFunction(np.array([0.5, 2.0]), um.weight)
    high = ValueFunction(np.array([1.0, 2.5]), um.weight)
    assert np.all(apply_T(um, low)[0].values <= apply_T(um, high)[0].values)


def test_rate_form_matches_uniformized_form(flip):
    um = uniformize(flip, theta=0.7)
    phi = np.array([1.3, 2.1])
    I = np.array([game_value(m) for m in stage_matrices(um, phi)])
    for i in range(2):
        lhs = flip.alpha * phi[i] - hamiltonian(flip, i, phi)
        assert lhs == pytest.approx(um.scale[i] * (phi[i] - I[i]), abs=1e-9)


def test_max_iter_exceeded(flip):
    with pytest.raises(MaxIterExceeded) as exc_info:
        value_iterate(uniformize(flip), max_iter=2)
    assert exc_info.value.iterations == 2


def test_invalid_arguments(flip):
    um = uniformize(flip)
    with pytest.raises(ValueError):
        value_iterate(um, start="middle")
    with pytest.raises(ValueError):
        value_iterate(um, tol=0.0)


def test_progress_callback_receives_steps(flip):
    on_progress = mock.Mock()
    sol = value_iterate(uniformize(flip), on_progress=on_progress)
    assert on_progress.call_count == sol.iterations + 1
    n, step = on_progress.call_args[0]
    assert n == sol.iterations + 1
    assert step <= 1e-8


def test_threads_do_not_change_the_result(flip, monkeypatch):
    serial = value_iterate(uniformize(flip)).values
    monkeypatch.setenv("STOPGAME_THREADS", "3")
    threaded = value_iterate(uniformize(flip)).values
    np.testing.assert_array_equal(serial, threaded)


def test_contact_tolerance():
    eps = contact_tolerance(1e-8, np.array([0.0, 1e4]))
    np.testing.assert_allclose(eps, [1e-7, 1e-9 * (1 + 1e4)])


def test_contact_beats_continuation(flip):
    um = uniformize(flip)
    values = flip.psi1 - np.array([1e-9, 0.5])
    tags, a1, a2 = classify(um, values, tol=1e-8)
    assert tags[0] is StateClass.STOP_P1
    assert a1 == frozenset({0}) and a2 == frozenset()


def test_perturbed_values_fail_verification(solved_random_models):
    _, um, sol = solved_random_models[0]
    values = sol.values.copy()
    values[0] += 1.0
    fake = equilibrium_from_values(um, values, classification=sol.classification)
    report = verify_dpi(um, fake)
    assert not report.passed
    assert 0 in {v.state for v in report.violations}


def test_document_keys(flip):
    sol = value_iterate(uniformize(flip))
    doc = sol.as_document()
    assert set(doc) == {
        "u_star", "phi_star", "psi_star", "A1", "A2",
        "classification", "iterations", "residual",
    }
