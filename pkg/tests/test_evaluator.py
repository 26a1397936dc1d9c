import numpy as np
import pytest

from stopgame.dpi_solver import uniformize, value_iterate
from stopgame.evaluator import (
    Method,
    Player,
    PlayerStrategy,
    StrategyProfile,
    best_response,
    equilibrium_profile,
    exact_value,
    mixed_extension,
    saddle_certificate,
)
from stopgame.exceptions import InvalidProfile
from stopgame import GameModel
from tests.conftest import single_state_model


def uniform_profile(model, stop1=(), stop2=()):
    n, nu, nv = model.shape
    return StrategyProfile(np.full((n, nu), 1.0 / nu), np.full((n, nv), 1.0 / nv), stop1, stop2)


def test_absorbing_continuation_value():
    model = single_state_model(rho=1.5, alpha=0.5)
    est = exact_value(model, uniform_profile(model))
    assert est.method is Method.EXACT
    assert est.values[0] == pytest.approx(3.0)
    assert est.residual <= 1e-10


def test_stop2_state_pays_psi2_regardless_of_rates(flip):
    model = GameModel(
        flip.alpha, flip.actions_p1, flip.actions_p2, flip.rates, flip.reward,
        [9.0, 9.0], [7.0, 1.0],
    )
    est = exact_value(model, uniform_profile(model, stop2={0}))
    assert est.values[0] == pytest.approx(7.0)


def test_simultaneous_stop_pays_psi2(flip):
    est = exact_value(flip, uniform_profile(flip, stop1={0, 1}, stop2={1}))
    np.testing.assert_allclose(est.values, [flip.psi1[0], flip.psi2[1]])


def test_mixed_extension_averages_rates(flip):
    profile = uniform_profile(flip)
    r, q = mixed_extension(flip, profile)
    assert r[0] == pytest.approx(flip.reward[0].mean())
    np.testing.assert_allclose(q, flip.rates.mean(axis=(1, 2)))
    np.testing.assert_allclose(q.sum(axis=1), 0.0, atol=1e-12)


def test_exact_value_is_monotone_in_reward(flip):
    profile = uniform_profile(flip)
    base = exact_value(flip, profile).values
    richer = GameModel(
        flip.alpha, flip.actions_p1, flip.actions_p2, flip.rates, flip.reward + 0.3,
        flip.psi1, flip.psi2,
    )
    assert np.all(exact_value(richer, profile).values >= base)


@pytest.mark.parametrize(
    "phi",
    [
        [[0.7, 0.7], [0.5, 0.5]],
        [[1.2, -0.2], [0.5, 0.5]],
    ],
)
def test_invalid_controls_rejected(phi):
    with pytest.raises(InvalidProfile):
        StrategyProfile(phi, [[1.0, 0.0], [0.0, 1.0]])


def test_unknown_stop_state_rejected():
    with pytest.raises(InvalidProfile):
        StrategyProfile([[1.0]], [[1.0]], stop1={3})


def test_halves_round_trip(flip):
    profile = uniform_profile(flip, stop1={0}, stop2={1})
    p1, p2 = profile.half(Player.P1), profile.half(Player.P2)
    assert p1.stop == frozenset({0}) and p2.player is Player.P2
    again = StrategyProfile.from_halves(p1, p2)
    assert again.stop1 == profile.stop1 and again.stop2 == profile.stop2
    swapped = profile.with_half(PlayerStrategy(Player.P2, p2.control, frozenset()))
    assert swapped.stop2 == frozenset()


def test_best_response_without_freedom_equals_exact_value():
    model = single_state_model(rho=1.0, alpha=0.5, psi1=10.0, psi2=0.0)
    profile = uniform_profile(model)
    exact = exact_value(model, profile).values
    for fixed in (Player.P1, Player.P2):
        value, strategy = best_response(model, fixed, profile.half(fixed))
        assert value.values[0] == pytest.approx(exact[0], abs=1e-9)
        assert strategy.stop == frozenset()


def test_best_response_takes_profitable_stop():
    # continuing is worth 1, player II can quit for 2 at once
    model = single_state_model(rho=0.5, alpha=0.5, psi1=3.0, psi2=2.0)
    profile = uniform_profile(model)
    value, strategy = best_response(model, Player.P1, profile.half(Player.P1))
    assert value.values[0] == pytest.approx(2.0)
    assert strategy.player is Player.P2
    assert strategy.stop == frozenset({0})


def test_best_responses_bracket_the_value(solved_random_models):
    for model, _, sol in solved_random_models[:50]:
        profile = equilibrium_profile(sol)
        br2, _ = best_response(model, Player.P1, profile.half(Player.P1))
        br1, _ = best_response(model, Player.P2, profile.half(Player.P2))
        assert np.all(br2.values <= sol.values + 1e-6)
        assert np.all(br1.values >= sol.values - 1e-6)


def test_equilibrium_profile_reproduces_value(solved_random_models):
    for model, _, sol in solved_random_models:
        exact = exact_value(model, equilibrium_profile(sol)).values
        assert np.abs(exact - sol.values).max() <= 10 * 1e-8 + 1e-9 * (1 + np.abs(sol.values).max())


def test_saddle_certificate_on_random_models(solved_random_models):
    for model, _, sol in solved_random_models[:50]:
        report = saddle_certificate(model, sol, tol=1e-6, num_random=100, seed=5)
        assert report.passed, report.as_dict()
        assert report.deviations_checked == 200 + 2 * model.num_states


def test_saddle_certificate_catches_a_wrong_value(flip):
    um = uniformize(flip)
    sol = value_iterate(um)
    sol.u_star.values = sol.values + 0.5
    report = saddle_certificate(flip, sol, num_random=5)
    assert not report.passed
    assert report.consistency == pytest.approx(0.5, abs=1e-6)


def test_confidence_interval_of_exact_estimate(flip):
    est = exact_value(flip, uniform_profile(flip))
    low, high = est.confidence_interval(0)
    assert low == high == est.values[0]
    assert est.as_dict()["method"] == "EXACT"
