import itertools

import numpy as np
import pytest

from iscpomdp.model import TabularModel

ACCEPTANCE_RESULTS = []


def random_model(rng, nx, nu, ny, discount=0.95, sparse=False):
    T = rng.random((nu, nx, nx)) + 0.05
    O = rng.random((nu, nx, ny)) + 0.05
    if sparse:
        T *= rng.random(T.shape) < 0.6
        T[:, np.arange(nx), np.arange(nx)] += 0.1
    T /= T.sum(axis=2, keepdims=True)
    O /= O.sum(axis=2, keepdims=True)
    pi0 = rng.random(nx) + 0.01
    return TabularModel(T, O, pi0 / pi0.sum(), discount)


def random_simplex(rng, n, size=None):
    shape = (n,) if size is None else (size, n)
    return rng.dirichlet(np.ones(n) * rng.choice([0.2, 1.0, 5.0]), size=size).reshape(shape)


def brute_force_joint(model, controls, observations):
    """p(x0, xk | y^k, u^{k-1}) by summing over every state path; indexed [x0, xk]."""
    nx = model.n_states
    k = len(controls)
    joint = np.zeros((nx, nx))
    for path in itertools.product(range(nx), repeat=k + 1):
        p = model.initial_belief[path[0]]
        for j in range(k):
            u, y = controls[j], observations[j]
            p *= model.transition[u, path[j], path[j + 1]] * model.observation[u, path[j + 1], y]
        joint[path[0], path[-1]] += p
    z = joint.sum()
    return joint / z if z > 0 else joint


def sample_trajectory(model, rng, length):
    """Controls and observations generated by the model itself (so none are impossible)."""
    x = rng.choice(model.n_states, p=model.initial_belief)
    us, ys = [], []
    for _ in range(length):
        u = int(rng.integers(model.n_controls))
        x = rng.choice(model.n_states, p=model.transition[u, x])
        ys.append(int(rng.choice(model.n_obs, p=model.observation[u, x])))
        us.append(u)
    return us, ys


def two_state_example():
    """Identity dynamics; y=0 has likelihood 0.8 in state 0 and 0.4 in state 1."""
    T = np.eye(2)[None]
    O = np.array([[[0.8, 0.2], [0.4, 0.6]]])
    return TabularModel(T, O, [0.5, 0.5], 0.95)


def toy_stay_swap(discount=0.95):
    """Two states, control 0 stays and control 1 swaps; the sensor reports the state."""
    T = np.stack([np.eye(2), np.eye(2)[::-1]])
    O = np.stack([np.eye(2), np.eye(2)])
    return TabularModel(T, O, [0.5, 0.5], discount)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def record_acceptance(number, title, passed, detail=""):
    ACCEPTANCE_RESULTS.append((number, title, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(ACCEPTANCE_RESULTS, key=lambda r: r[0]):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {number}. {title}: {detail}")
