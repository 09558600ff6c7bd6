import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import brute_force_joint, random_model, random_simplex, sample_trajectory, two_state_example
from iscpomdp.errors import ImpossibleObservation
from iscpomdp.model import (
    TabularModel,
    filter_update,
    load_model,
    obs_likelihood,
    predict,
    save_model,
    validate_model,
)


def test_valid_model_passes(rng):
    report = validate_model(random_model(rng, 3, 2, 2))
    assert report.ok
    assert str(report) == "pass"


def test_transition_row_sum_failure_names_control_and_source(rng):
    m = random_model(rng, 3, 2, 2)
    T = np.array(m.transition)
    T[1, 2] *= 0.9
    report = validate_model(TabularModel(T, m.observation, m.initial_belief))
    assert not report.ok
    assert [(k, i) for k, i, _ in report.problems] == [("transition_row_sum", (1, 2))]


def test_negative_observation_names_full_index(rng):
    m = random_model(rng, 3, 2, 3)
    O = np.array(m.observation)
    O[0, 1, 2] = -0.1
    O[0, 1, 0] += 0.1
    report = validate_model(TabularModel(m.transition, O, m.initial_belief))
    assert ("observation_negative", (0, 1, 2)) in [(k, i) for k, i, _ in report.problems]


def test_bad_initial_belief_and_discount(rng):
    m = random_model(rng, 2, 1, 2)
    report = validate_model(TabularModel(m.transition, m.observation, [0.7, 0.7], 1.0))
    kinds = {k for k, _, _ in report.problems}
    assert kinds == {"initial_sum", "discount"}


def test_obs_likelihood_uniform_sensor(rng):
    m = random_model(rng, 4, 2, 5)
    m = TabularModel(m.transition, np.full((2, 4, 5), 0.2), m.initial_belief)
    for y in range(5):
        assert obs_likelihood(m, random_simplex(rng, 4), 1, y) == pytest.approx(0.2, abs=1e-12)


def test_obs_likelihood_two_state_example():
    m = two_state_example()
    # oracle: sum the joint p(x1, y1=0) over all (x0, x1) pairs
    joint = sum(
        m.initial_belief[a] * m.transition[0, a, b] * m.observation[0, b, 0]
        for a, b in itertools.product(range(2), repeat=2)
    )
    assert joint == pytest.approx(0.6, abs=1e-15)
    assert obs_likelihood(m, m.initial_belief, 0, 0) == pytest.approx(joint, abs=1e-15)


def test_obs_likelihood_degenerate_belief(rng):
    m = random_model(rng, 3, 2, 4)
    T = np.array(m.transition)
    T[:, 1] = np.eye(3)[1]
    m = TabularModel(T, m.observation, m.initial_belief)
    got = [obs_likelihood(m, np.eye(3)[1], 0, y) for y in range(4)]
    np.testing.assert_allclose(got, m.observation[0, 1], atol=1e-15)


def test_filter_two_state_example():
    m = two_state_example()
    post = filter_update(m, m.initial_belief, 0, 0)
    oracle = brute_force_joint(m, [0], [0]).sum(axis=0)
    np.testing.assert_allclose(oracle, [2 / 3, 1 / 3], atol=1e-15)
    np.testing.assert_allclose(post, oracle, atol=1e-15)


def test_filter_uniform_sensor_is_prediction(rng):
    m = random_model(rng, 4, 3, 2)
    m = TabularModel(m.transition, np.full((3, 4, 2), 0.5), m.initial_belief)
    b = random_simplex(rng, 4)
    np.testing.assert_allclose(filter_update(m, b, 2, 1), predict(m, b, 2), atol=1e-15)


def test_filter_fixed_point_on_absorbing_state():
    T = np.array([[[1.0, 0.0], [0.5, 0.5]]])
    O = np.array([[[1.0, 0.0], [0.0, 1.0]]])
    m = TabularModel(T, O, [1.0, 0.0])
    np.testing.assert_array_equal(filter_update(m, [1.0, 0.0], 0, 0), [1.0, 0.0])


def test_impossible_observation_raises():
    T = np.eye(2)[None]
    O = np.array([[[1.0, 0.0], [1.0, 0.0]]])
    m = TabularModel(T, O, [0.5, 0.5])
    with pytest.raises(ImpossibleObservation):
        filter_update(m, [0.5, 0.5], 0, 1)


def test_filter_matches_path_enumeration():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(100):
        nx, nu, ny = rng.integers(1, 5), rng.integers(1, 4), rng.integers(1, 4)
        m = random_model(rng, nx, nu, ny, sparse=bool(rng.integers(2)))
        us, ys = sample_trajectory(m, rng, int(rng.integers(1, 6)))
        b = m.initial_belief
        for k in range(len(us)):
            b = filter_update(m, b, us[k], ys[k])
            oracle = brute_force_joint(m, us[: k + 1], ys[: k + 1]).sum(axis=0)
            worst = max(worst, np.abs(b - oracle).max())
            assert abs(b.sum() - 1) < 1e-9 and b.min() >= 0
    assert worst <= 1e-9


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5), st.integers(1, 3), st.integers(1, 4))
def test_obs_likelihood_sums_to_one(seed, nx, nu, ny):
    rng = np.random.default_rng(seed)
    m = random_model(rng, nx, nu, ny)
    b = random_simplex(rng, nx)
    u = int(rng.integers(nu))
    assert sum(obs_likelihood(m, b, u, y) for y in range(ny)) == pytest.approx(1.0, abs=1e-9)


def test_destination_first_transposition_round_trip(rng):
    m = random_model(rng, 4, 2, 3)
    dest_first = m.transition.transpose(0, 2, 1)
    # A^{x, xbar}: column xbar sums to one in the destination-first layout
    np.testing.assert_allclose(dest_first.sum(axis=1), 1.0)
    again = TabularModel.from_destination_first(dest_first, m.observation, m.initial_belief, m.discount)
    np.testing.assert_array_equal(again.transition, m.transition)


def test_save_load_bit_identical(rng, tmp_path):
    m = random_model(rng, 5, 3, 4, discount=0.9)
    save_model(m, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    for name in ("transition", "observation", "initial_belief"):
        assert getattr(back, name).tobytes() == getattr(m, name).tobytes()
    assert back.discount == m.discount
    assert back.fingerprint() == m.fingerprint()


def test_tables_are_immutable(rng):
    m = random_model(rng, 2, 1, 2)
    with pytest.raises(ValueError):
        m.transition[0, 0, 0] = 0.3
