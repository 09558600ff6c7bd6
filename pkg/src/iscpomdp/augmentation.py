"""Augmented (initial state, current state) model and the fixed-point smoother.

An augmented state ``s`` encodes the pair ``(x0, xk)`` as ``s = x0 + n * xk``
(zero-based), so an augmented belief ``xi`` of length ``n**2`` reshapes to an
``(n, n)`` matrix indexed ``[xk, x0]``. Rows are current states, columns are
initial states.

The augmented transition matrix is block diagonal in ``x0`` with every block
equal to the base transition matrix, so nothing here ever materialises the
``n**2 x n**2`` table except :meth:`AugmentedModel.to_tabular`, which exists
for differential testing on small models.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from iscpomdp.errors import ImpossibleObservation, OutOfRange
from iscpomdp.model import UNDERFLOW, TabularModel, filter_update


def lin_index(x0: int, xk: int, n_base: int) -> int:
    """Augmented index of the pair ``(x0, xk)``."""
    for v in (x0, xk):
        if not 0 <= v < n_base:
            raise OutOfRange(f"base state {v} outside 0..{n_base - 1}")
    return x0 + n_base * xk


def inv_index(s: int, n_base: int) -> tuple[int, int]:
    """Inverse of :func:`lin_index`, returning ``(x0, xk)``."""
    if not 0 <= s < n_base * n_base:
        raise OutOfRange(f"augmented state {s} outside 0..{n_base * n_base - 1}")
    x0 = s - n_base * (s // n_base)
    return x0, (s - x0) // n_base


def as_matrix(xi, n_base: int) -> np.ndarray:
    """View an augmented belief (or alpha vector) as an ``[xk, x0]`` matrix."""
    return np.asarray(xi).reshape(n_base, n_base)


@dataclass(frozen=True, eq=False)
class AugmentedModel:
    base: TabularModel

    @property
    def n_base(self) -> int:
        return self.base.n_states

    @property
    def n_aug_states(self) -> int:
        return self.base.n_states ** 2

    @property
    def n_controls(self) -> int:
        return self.base.n_controls

    @property
    def n_obs(self) -> int:
        return self.base.n_obs

    @property
    def discount(self) -> float:
        return self.base.discount

    @cached_property
    def aug_initial(self) -> np.ndarray:
        n = self.n_base
        xi0 = np.zeros(n * n)
        xi0[np.arange(n) * (n + 1)] = self.base.initial_belief
        xi0.setflags(write=False)
        return xi0

    @property
    def initial_belief(self) -> np.ndarray:
        return self.aug_initial

    def aug_transition(self, u: int, s_from: int, s_to: int) -> float:
        """``p(s_to | s_from, u)``, zero across initial-state blocks."""
        a, xbar = inv_index(s_from, self.n_base)
        b, x = inv_index(s_to, self.n_base)
        if a != b:
            return 0.0
        return float(self.base.transition[u, xbar, x])

    def aug_observation(self, u: int, s: int) -> np.ndarray:
        """Observation row of augmented state ``s``: the base row of its current state."""
        _, x = inv_index(s, self.n_base)
        return self.base.observation[u, x]

    @cached_property
    def dense(self) -> TabularModel:
        n = self.n_base
        eye = np.eye(n)
        # [u, (xbar, a), (x, b)] with s = a + n*x  ->  kron(A_u, I)
        trans = np.stack([np.kron(self.base.transition[u], eye) for u in range(self.n_controls)])
        obs = np.repeat(self.base.observation, n, axis=1)
        return TabularModel(trans, obs, self.aug_initial, self.discount)

    def to_tabular(self) -> TabularModel:
        """Materialise the augmented model densely (small models only)."""
        return self.dense


def augment(model: TabularModel) -> AugmentedModel:
    return AugmentedModel(model)


def _unnormalised(aug: AugmentedModel, xi, u: int, y: int) -> np.ndarray:
    n = aug.n_base
    pred = aug.base.transition[u].T @ as_matrix(xi, n)
    return pred * aug.base.observation[u, :, y][:, None]


def aug_obs_likelihood(aug: AugmentedModel, xi, u: int, y: int) -> float:
    """``p(y | xi, u)``, the normaliser of the smoother update."""
    return float(_unnormalised(aug, xi, u, y).sum())


def smoother_update(aug: AugmentedModel, xi, u: int, y: int) -> np.ndarray:
    """Recursive fixed-point smoother step for the joint posterior of ``(x0, xk)``.

    Costs ``O(n**3)`` per update: each initial-state column is propagated
    through the base transition matrix independently.
    """
    unnorm = _unnormalised(aug, xi, u, y)
    z = unnorm.sum()
    if not z > UNDERFLOW:
        raise ImpossibleObservation(f"observation {y} has probability {z!r} under control {u}")
    return (unnorm / z).ravel()


def smoother_update_dense(aug: AugmentedModel, xi, u: int, y: int) -> np.ndarray:
    """Same update, run as a plain Bayesian filter on the dense augmented model."""
    return filter_update(aug.to_tabular(), xi, u, y)


def marginal_initial(xi, n_base: int | None = None) -> np.ndarray:
    """Posterior over the initial state, summing out the current state."""
    xi = np.asarray(xi)
    n = n_base or _side(xi)
    return as_matrix(xi, n).sum(axis=0)


def marginal_current(xi, n_base: int | None = None) -> np.ndarray:
    xi = np.asarray(xi)
    n = n_base or _side(xi)
    return as_matrix(xi, n).sum(axis=1)


def entropy(p) -> float:
    """Shannon entropy in nats with ``0 log 0 = 0``."""
    p = np.asarray(p, dtype=float)
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def initial_entropy(xi, n_base: int | None = None) -> float:
    """Entropy (nats) of the initial-state posterior encoded in ``xi``."""
    return entropy(marginal_initial(xi, n_base))


def _side(xi) -> int:
    n = int(round(np.sqrt(xi.size)))
    if n * n != xi.size:
        raise ValueError(f"augmented belief length {xi.size} is not a perfect square")
    return n
