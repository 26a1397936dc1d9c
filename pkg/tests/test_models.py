import json

import numpy as np
import pytest

from stopgame import validate_model
from stopgame.dpi_solver import StateClass, uniformize, value_iterate, verify_dpi
from stopgame.exceptions import ModelFileError, ModelRejected
from stopgame.models import (
    QueueSpec,
    build_queueing_model,
    load_model,
    load_queue_spec,
    load_solution,
    queue_certificate,
    random_model,
    save_model,
    save_solution,
)


def test_empty_queue_has_no_service(small_queue):
    row = small_queue.rates[0]
    assert np.all(row[:, :, 1] > 0)
    assert not row[:, :, 2:].any()
    np.testing.assert_allclose(row[:, :, 0], -row[:, :, 1])


def test_interior_rows_are_conservative(small_queue):
    assert np.abs(small_queue.rates.sum(axis=3)).max() <= 1e-12


def test_service_boost_enters_downward_rate():
    spec = QueueSpec(service=lambda i: 2.0, g={"base": 0.0}, s_max=8)
    model = build_queueing_model(spec)
    down = model.rates[5, :, 0, 4]
    assert sorted(down.tolist()) == [2.0, 3.0]
    assert model.rates[5, 0, 0, 6] == 1.0


def test_truncated_top_has_no_arrivals(small_queue):
    top = small_queue.num_states - 1
    assert small_queue.rates[top, :, :, top].max() < 0
    assert np.all(small_queue.rates[top, :, :, top] == -small_queue.rates[top, :, :, top - 1])


def test_queue_rewards_and_obstacles(small_queue):
    spec = QueueSpec(s_max=12)
    i = 4
    assert small_queue.reward[i, 1, 1] == pytest.approx(spec.c + i + 0.2 * 1.0 - 0.1 * 0.5)
    assert small_queue.psi1[i] == pytest.approx(8.0 + 0.4)
    assert np.all(small_queue.psi2 == 0.5)
    assert small_queue.actions_p1 == ("base", "fast")


def test_negative_reward_rejected():
    with pytest.raises(ModelRejected) as exc_info:
        build_queueing_model(QueueSpec(c=0.0, s_max=5))
    kinds = {(v.kind, v.state) for v in exc_info.value.violations}
    assert ("nonnegative", 0) in kinds


def test_separation_failure_rejected():
    with pytest.raises(ModelRejected) as exc_info:
        build_queueing_model(QueueSpec(c_prime=8.15, s_max=5))
    states = {v.state for v in exc_info.value.violations if v.kind == "separation"}
    assert states == {0, 1}


def test_queue_certificate_is_linear(queue_model):
    cert = queue_certificate(queue_model, kappa=2.0)
    report = validate_model(queue_model, cert)
    assert report.ok
    d = cert.w[1, 0] / 2.0
    np.testing.assert_allclose(cert.W, 2.0 * (1.0 + np.arange(51)) + 2.0 * d)
    # arrivals at most 1.5 in the default queue
    assert d == pytest.approx(1.5)


def test_random_models_pass_validation():
    rng = np.random.default_rng(0)
    for _ in range(20):
        model = random_model(rng)
        assert model.num_states <= 8
        assert max(len(model.actions_p1), len(model.actions_p2)) <= 3
        assert 0.2 <= model.alpha <= 2.0
        assert np.all(model.psi2 < model.psi1)
        assert validate_model(model, queue_certificate(model)).ok


def test_model_round_trip(tmp_path, small_queue):
    path = str(tmp_path / "queue.json")
    save_model(small_queue, path)
    assert load_model(path) == small_queue


def test_missing_field_is_named(tmp_path, flip):
    doc = flip.to_document()
    del doc["psi2"]
    path = tmp_path / "model.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(ModelFileError) as exc_info:
        load_model(str(path))
    assert exc_info.value.field == "psi2"


def test_syntax_error_reports_line(tmp_path):
    path = tmp_path / "model.json"
    path.write_text('{\n  "alpha": 1.0,\n  "states": \n}\n')
    with pytest.raises(ModelFileError) as exc_info:
        load_model(str(path))
    assert exc_info.value.line == 4


def test_negative_off_diagonal_rejected_on_load(tmp_path, flip):
    doc = flip.to_document()
    doc["rates"] = [
        [0, "slow", "push", 1, -1.0],
        [0, "slow", "push", 0, 1.0],
    ]
    path = tmp_path / "model.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(ModelRejected):
        load_model(str(path))


def test_out_of_range_state_in_triplet(tmp_path, flip):
    doc = flip.to_document()
    doc["rates"].append([0, "slow", "push", 7, 1.0])
    path = tmp_path / "model.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(ModelFileError) as exc_info:
        load_model(str(path))
    assert exc_info.value.field.startswith("rates[")


@pytest.mark.parametrize(
    ("key", "entry", "field"),
    [
        ("rates", [0, "zz", "push", 1, 1.0], "rates[{n}]"),
        ("rates", [0, "slow", "zz", 1, 1.0], "rates[{n}]"),
        ("rewards", [1, "hold", "zz", 2.0], "rewards[{n}]"),
    ],
)
def test_unknown_action_label_in_triplet(tmp_path, flip, key, entry, field):
    doc = flip.to_document()
    n = len(doc.get(key, []))
    doc.setdefault(key, []).append(entry)
    path = tmp_path / "model.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(ModelFileError) as exc_info:
        load_model(str(path))
    assert exc_info.value.field == field.format(n=n)
    assert exc_info.value.reason == "unknown action label"
    assert exc_info.value.path == str(path)


@pytest.mark.parametrize("key", ["actions_p1", "actions_p2"])
def test_empty_action_list_is_named(tmp_path, flip, key):
    doc = flip.to_document()
    doc[key] = []
    path = tmp_path / "model.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(ModelFileError) as exc_info:
        load_model(str(path))
    assert exc_info.value.field == key


def test_queue_spec_block(tmp_path):
    path = tmp_path / "spec.json"
    path.write_text(json.dumps({
        "queue": {
            "lambda": 0.8,
            "mu": [2.0] * 11,
            "h": {"idle": 0.0, "rush": 0.5},
            "g": {"none": 0.0},
            "c1": {"idle": 0.0, "rush": 0.3},
            "c2": {"none": 0.0},
            "R_slope": 0.2,
            "s_max": 10,
        }
    }))
    spec = load_queue_spec(str(path))
    model = build_queueing_model(spec)
    assert model.num_states == 11
    assert model.rates[3, 1, 0, 2] == pytest.approx(2.5)
    assert model.reward[0, 1, 0] == pytest.approx(spec.c + 0.3)
    assert model.psi1[5] == pytest.approx(9.0)


def test_queue_spec_rejects_unknown_keys():
    with pytest.raises(ModelFileError) as exc_info:
        QueueSpec.from_dict({"lambda": 1.0, "servers": 2})
    assert exc_info.value.field == "servers"


def test_queue_spec_cost_labels_must_match():
    with pytest.raises(ModelFileError):
        QueueSpec.from_dict({"c1": {"other": 0.1}})


def test_solution_round_trip(tmp_path, flip):
    um = uniformize(flip)
    sol = value_iterate(um)
    path = str(tmp_path / "solution.json")
    save_solution(sol, path)
    again = load_solution(path, flip)
    np.testing.assert_allclose(again.values, sol.values, rtol=1e-11)
    assert again.classification == sol.classification
    assert verify_dpi(um, again).passed


def test_solution_with_wrong_length(tmp_path, flip):
    path = tmp_path / "solution.json"
    path.write_text(json.dumps({"u_star": [1.0]}))
    with pytest.raises(ModelFileError):
        load_solution(str(path), flip)


@pytest.fixture(scope="module")
def queue_solution(queue_model):
    um = uniformize(queue_model)
    return um, value_iterate(um)


def test_queue_demo_converges_and_verifies(queue_solution):
    um, sol = queue_solution
    report = verify_dpi(um, sol)
    assert report.passed
    stops = {t for t in sol.classification if t is not StateClass.CONTINUATION}
    if not sol.region_A1 and not sol.region_A2:
        assert not stops


def test_queue_value_grows_with_congestion(queue_solution):
    _, sol = queue_solution
    assert np.all(np.diff(sol.values) >= -1e-9)


def test_truncation_level_barely_moves_small_states(queue_solution):
    _, sol = queue_solution
    bigger = value_iterate(uniformize(build_queueing_model(QueueSpec(s_max=100))))
    assert np.abs(bigger.values[:11] - sol.values[:11]).max() <= 1e-4
