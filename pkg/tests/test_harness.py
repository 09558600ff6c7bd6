from dataclasses import replace

import numpy as np
import pytest

from conftest import toy_stay_swap
from iscpomdp.augmentation import augment, smoother_update
from iscpomdp.costs import InitialStateCost, StateControlCost
from iscpomdp.errors import ConfigMismatch, DimensionMismatch
from iscpomdp.gridworld import GridExperiment, build_experiment, default_spec
from iscpomdp.harness import (
    TrajectoryRecord,
    RunConfig,
    compare,
    goal_reached,
    monte_carlo,
    read_runs,
    report,
    run_rng,
    simulate_run,
    write_runs,
)
from iscpomdp.model import filter_update
from iscpomdp.solver import SolveParams, solve_point_based

SMALL = SolveParams(max_belief_points=60)


class FixedStart:
    """Stand-in generator that pins the initial state and centres every other draw."""

    def __init__(self, x0, n):
        self.x0, self.n = x0, n

    def random(self, size):
        d = np.full(size, 0.5)
        d[0] = (self.x0 + 0.5) / self.n
        return d


@pytest.fixture(scope="module")
def exp():
    return build_experiment()


@pytest.fixture(scope="module")
def policies(exp):
    isc = solve_point_based(augment(exp.model), exp.isc_cost, params=SMALL)
    base = solve_point_based(exp.model, exp.baseline_cost, params=SMALL)
    return isc, base


def toy_experiment():
    m = toy_stay_swap()
    c = np.ones((2, 2, 2))
    c[0, 0] = c[1, 1] = 0.0
    return GridExperiment(m, InitialStateCost(c), StateControlCost(np.zeros((2, 2))), {0: 0, 1: 1})


def test_single_step_toy():
    exp = toy_experiment()
    pol = solve_point_based(augment(exp.model), exp.isc_cost, params=SMALL)
    for seed in range(6):
        rec = simulate_run(exp, pol, "augmented", 1, np.random.default_rng(seed))
        assert len(rec.controls) == 1 and len(rec.observations) == 1 and len(rec.states) == 2
        x0, u = rec.true_x0, rec.controls[0]
        assert rec.step_costs == [exp.isc_cost.table[x0, x0, u]]
        assert rec.discounted_cost == rec.step_costs[0]
        # staying is optimal and the sensor is exact
        assert u == 0 and rec.discounted_cost == 0.0 and rec.goal_reached


def test_same_seed_same_record(exp, policies):
    isc, _ = policies
    a = simulate_run(exp, isc, "augmented", 10, run_rng(3, 17), 17)
    b = simulate_run(exp, isc, "augmented", 10, run_rng(3, 17), 17)
    assert a.to_dict() == b.to_dict()


def test_noiseless_no_slip_reaches_every_goal():
    spec = replace(default_spec(), slip_prob=0.0, detect_given_wall=1.0, detect_given_no_wall=0.0)
    exp = build_experiment(spec)
    pol = solve_point_based(augment(exp.model), exp.isc_cost, params=SolveParams(max_belief_points=100))
    for x0 in range(16):
        rec = simulate_run(exp, pol, "augmented", 10, FixedStart(x0, 16))
        assert rec.true_x0 == x0
        assert rec.states[-1] == exp.goal_map[x0]
        assert rec.goal_reached


def record(x0, states):
    T = len(states) - 1
    return TrajectoryRecord(0, x0, states, [4] * T, [0] * T, [0.0] * T, 0.0,
                            np.zeros(256), None, np.zeros(T + 1), np.zeros(T + 1))


def test_goal_reached_cases(exp):
    # one-based: end at 1 from x0=6 is a success, end at 4 is not
    assert goal_reached(record(5, [5, 1, 0]), exp)
    assert not goal_reached(record(5, [5, 4, 3]), exp)
    # only the terminal state counts
    assert not goal_reached(record(5, [5, 0, 1]), exp)
    assert goal_reached(record(0, [0]), exp)


def test_discounted_cost_audit(exp, policies):
    isc, base = policies
    c = exp.isc_cost.table
    for i in range(100):
        pol, arm = (isc, "augmented") if i % 2 == 0 else (base, "base")
        rec = simulate_run(exp, pol, arm, 10, run_rng(99, i), i)
        x0 = rec.true_x0
        audit = sum(0.95**k * c[x0, rec.states[k], rec.controls[k]] for k in range(10))
        assert abs(audit - rec.discounted_cost) <= 1e-12
        assert len(rec.states) == 11 and len(rec.observations) == 10


@pytest.mark.parametrize("arm", ["augmented", "base"])
def test_shadow_belief_parity(exp, policies, arm):
    pol = policies[0] if arm == "augmented" else policies[1]
    aug = augment(exp.model)
    for i in range(5):
        rec = simulate_run(exp, pol, arm, 10, run_rng(1, i), i)
        xi, pi = aug.aug_initial, exp.model.initial_belief
        for u, y in zip(rec.controls, rec.observations):
            xi = smoother_update(aug, xi, u, y)
            pi = filter_update(exp.model, pi, u, y)
        assert np.array_equal(xi, rec.final_xi)
        if arm == "base":
            assert np.array_equal(pi, rec.final_pi)


def test_arm_dimension_mismatch(exp, policies):
    isc, base = policies
    with pytest.raises(DimensionMismatch):
        simulate_run(exp, isc, "base", 3, run_rng(0, 0))
    with pytest.raises(DimensionMismatch):
        simulate_run(exp, base, "augmented", 3, run_rng(0, 0))


def test_single_run_summary(exp, policies):
    isc, _ = policies
    s, recs = monte_carlo(RunConfig(exp, isc, "augmented", 10, 1, 4), return_records=True)
    r = recs[0]
    assert s.avg_discounted_cost == r.discounted_cost
    assert s.goals_reached == int(r.goal_reached)
    assert s.avg_final_initial_entropy == r.entropy_curve[-1]
    assert s.avg_final_prob_at_true_x0 == r.prob_curve[-1]
    np.testing.assert_array_equal(s.entropy_curve, r.entropy_curve)


def test_prior_entropy_point(exp, policies):
    isc, base = policies
    for pol, arm in ((isc, "augmented"), (base, "base")):
        s = monte_carlo(RunConfig(exp, pol, arm, 4, 20, 0))
        assert s.entropy_curve[0] == pytest.approx(np.log(16), abs=1e-12)
        assert s.prob_curve[0] == pytest.approx(1 / 16, abs=1e-15)
        assert 0 <= s.goals_reached <= 20
        assert np.all((s.prob_curve >= 0) & (s.prob_curve <= 1))


def test_identical_arms_have_zero_deltas(exp, policies, tmp_path):
    isc, _ = policies
    a = monte_carlo(RunConfig(exp, isc, "augmented", 6, 30, 2))
    b = monte_carlo(RunConfig(exp, isc, "augmented", 6, 30, 2))
    rows, curves = report(a, b, tmp_path / "t.csv")
    assert all(r["delta"] == 0 for r in rows)
    assert all(r["delta_se"] == 0 for r in rows)
    assert len(curves) == 7
    lines = [l for l in (tmp_path / "t_curves.csv").read_text().splitlines() if not l.startswith("#")]
    assert len(lines) == 1 + 7


def test_report_embeds_reference_values(exp, policies, tmp_path):
    isc, base = policies
    a = monte_carlo(RunConfig(exp, isc, "augmented", 3, 10, 2))
    b = monte_carlo(RunConfig(exp, base, "base", 3, 10, 2))
    rows, _ = report(a, b, tmp_path / "t.csv")
    ref = {r["criterion"]: (r["reference_isc"], r["reference_baseline"]) for r in rows}
    assert ref == {
        "discounted_cost": (6.26, 7.91),
        "goals_reached": (8031, 4116),
        "final_initial_entropy": (1.54, 1.72),
        "final_prob_true_x0": (0.296, 0.245),
    }
    text = (tmp_path / "t.csv").read_text()
    assert "isc.seed=2" in text and "baseline.policy=" in text


def test_config_mismatch(exp, policies):
    isc, base = policies
    a = monte_carlo(RunConfig(exp, isc, "augmented", 3, 10, 0))
    with pytest.raises(ConfigMismatch):
        compare(a, monte_carlo(RunConfig(exp, base, "base", 4, 10, 0)))
    with pytest.raises(ConfigMismatch):
        compare(a, monte_carlo(RunConfig(exp, base, "base", 3, 10, 1)))
    other = build_experiment(replace(default_spec(), slip_prob=0.1))
    with pytest.raises(ConfigMismatch):
        compare(a, monte_carlo(RunConfig(other, base, "base", 3, 10, 0)))


def test_run_files_are_byte_identical_and_readable(exp, policies, tmp_path):
    _, base = policies
    s1 = monte_carlo(RunConfig(exp, base, "base", 5, 25, 8))
    s2 = monte_carlo(RunConfig(exp, base, "base", 5, 25, 8))
    write_runs(s1, tmp_path / "a.csv")
    write_runs(s2, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    back = read_runs(tmp_path / "a.csv")
    for key in s1.per_run:
        np.testing.assert_array_equal(back.per_run[key], s1.per_run[key])
    np.testing.assert_allclose(back.prob_curve, s1.prob_curve, rtol=0, atol=1e-15)
    assert back.meta["arm"] == "base"


def test_parallel_workers_match_serial(exp, policies, tmp_path):
    isc, _ = policies
    s1 = monte_carlo(RunConfig(exp, isc, "augmented", 4, 12, 5, workers=1))
    s2 = monte_carlo(RunConfig(exp, isc, "augmented", 4, 12, 5, workers=2))
    write_runs(s1, tmp_path / "a.csv")
    write_runs(s2, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_paired_arms_share_initial_states(exp, policies):
    isc, base = policies
    a = monte_carlo(RunConfig(exp, isc, "augmented", 3, 40, 6))
    b = monte_carlo(RunConfig(exp, base, "base", 3, 40, 6))
    np.testing.assert_array_equal(a.per_run["true_x0"], b.per_run["true_x0"])


def test_invalid_run_config(exp, policies):
    with pytest.raises(ValueError):
        RunConfig(exp, policies[0], "augmented", 0, 10)
    with pytest.raises(ValueError):
        RunConfig(exp, policies[0], "augmented", 10, 0)
    with pytest.raises(ValueError):
        RunConfig(exp, policies[0], "other", 10, 10)
