"""Tabular POMDP model and the standard Bayesian filter.

Indexing is zero-based throughout. Tables are stored as

* ``transition[u, x_from, x_to]`` (row-stochastic in the last axis),
* ``observation[u, x, y]`` with ``y`` the observation received after
  applying ``u`` and landing in ``x``.

Beliefs are plain 1-d float arrays on the probability simplex.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from iscpomdp.errors import ImpossibleObservation, InvalidModel

STOCHASTIC_TOL = 1e-9
# normalizers at or below this are treated as structurally impossible observations
UNDERFLOW = 1e-300


def _frozen(a, ndim):
    arr = np.array(a, dtype=float)
    if arr.ndim != ndim:
        raise InvalidModel(f"expected a {ndim}-d table, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TabularModel:
    """A finite discounted POMDP.

    Parameters
    ----------
    transition : array_like, shape (n_controls, n_states, n_states)
        ``transition[u, x_from, x_to] = p(x_to | x_from, u)``.
    observation : array_like, shape (n_controls, n_states, n_obs)
        ``observation[u, x, y] = p(y | x, u)``.
    initial_belief : array_like, shape (n_states,)
    discount : float in (0, 1)
    """

    transition: np.ndarray
    observation: np.ndarray
    initial_belief: np.ndarray
    discount: float = 0.95

    def __post_init__(self):
        object.__setattr__(self, "transition", _frozen(self.transition, 3))
        object.__setattr__(self, "observation", _frozen(self.observation, 3))
        object.__setattr__(self, "initial_belief", _frozen(self.initial_belief, 1))
        object.__setattr__(self, "discount", float(self.discount))
        nu, nx, nx2 = self.transition.shape
        if nx != nx2:
            raise InvalidModel(f"transition must be square per control, got {self.transition.shape}")
        if self.observation.shape[:2] != (nu, nx):
            raise InvalidModel(
                f"observation shape {self.observation.shape} inconsistent with "
                f"{nu} controls and {nx} states"
            )
        if self.initial_belief.shape != (nx,):
            raise InvalidModel(f"initial_belief must have length {nx}")

    @property
    def n_states(self) -> int:
        return self.transition.shape[1]

    @property
    def n_controls(self) -> int:
        return self.transition.shape[0]

    @property
    def n_obs(self) -> int:
        return self.observation.shape[2]

    @classmethod
    def from_destination_first(cls, transition, observation, initial_belief, discount=0.95):
        """Build from a table indexed ``[u][x_to][x_from]``.

        This is the layout ``A^{x, xbar}(u)`` in which the destination state
        comes first. It is transposed once here; everything else in the
        package works with ``[u][x_from][x_to]``.
        """
        t = np.asarray(transition, dtype=float).transpose(0, 2, 1)
        return cls(t, observation, initial_belief, discount)

    def to_dict(self) -> dict:
        return {
            "n_states": self.n_states,
            "n_controls": self.n_controls,
            "n_obs": self.n_obs,
            "discount": self.discount,
            "initial_belief": self.initial_belief.tolist(),
            "transition": self.transition.tolist(),
            "observation": self.observation.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TabularModel":
        model = cls(d["transition"], d["observation"], d["initial_belief"], d["discount"])
        dims = (model.n_states, model.n_controls, model.n_obs)
        declared = (d["n_states"], d["n_controls"], d["n_obs"])
        if dims != tuple(declared):
            raise InvalidModel(f"declared dimensions {declared} do not match tables {dims}")
        return model

    def fingerprint(self) -> str:
        """Short content hash used to tag output files."""
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class ValidationReport:
    problems: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.problems

    def __bool__(self):
        return self.ok

    def __str__(self):
        if self.ok:
            return "pass"
        return "\n".join(f"{kind} at {idx}: {msg}" for kind, idx, msg in self.problems)


def validate_model(model: TabularModel, tol: float = STOCHASTIC_TOL) -> ValidationReport:
    """Check sign, range and stochasticity constraints of every table.

    Each problem is a ``(kind, index, message)`` triple where ``index`` names
    the offending ``(u, x_from)``, ``(u, x, y)`` etc.
    """
    report = ValidationReport()
    add = report.problems.append

    if not 0.0 < model.discount < 1.0:
        add(("discount", (), f"discount {model.discount} not in (0, 1)"))

    for name, table in (("transition", model.transition), ("observation", model.observation)):
        for idx in zip(*np.nonzero(~np.isfinite(table))):
            add((f"{name}_nonfinite", tuple(int(i) for i in idx), "entry is not finite"))
        for idx in zip(*np.nonzero(table < 0)):
            idx = tuple(int(i) for i in idx)
            add((f"{name}_negative", idx, f"entry {table[idx]!r} < 0"))
        sums = table.sum(axis=2)
        for idx in zip(*np.nonzero(np.abs(sums - 1.0) > tol)):
            idx = tuple(int(i) for i in idx)
            add((f"{name}_row_sum", idx, f"row sums to {sums[idx]!r}"))

    pi0 = model.initial_belief
    for i in np.nonzero(pi0 < 0)[0]:
        add(("initial_negative", (int(i),), f"entry {pi0[i]!r} < 0"))
    if abs(pi0.sum() - 1.0) > tol:
        add(("initial_sum", (), f"initial belief sums to {pi0.sum()!r}"))
    return report


def predict(model: TabularModel, belief, u: int) -> np.ndarray:
    """One-step prediction ``sum_xbar p(x | xbar, u) belief(xbar)``."""
    return np.asarray(belief) @ model.transition[u]


def obs_likelihood(model: TabularModel, belief, u: int, y: int) -> float:
    """Probability of observing ``y`` after applying ``u`` from ``belief``."""
    return float(predict(model, belief, u) @ model.observation[u, :, y])


def filter_update(model: TabularModel, belief, u: int, y: int) -> np.ndarray:
    """Bayesian filter step: posterior over the next state given ``(u, y)``.

    Raises
    ------
    ImpossibleObservation
        If ``y`` has probability (numerically) zero under ``belief`` and ``u``.
    """
    unnorm = predict(model, belief, u) * model.observation[u, :, y]
    z = unnorm.sum()
    if not z > UNDERFLOW:
        raise ImpossibleObservation(f"observation {y} has probability {z!r} under control {u}")
    return unnorm / z


def save_model(model: TabularModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=1) + "\n")


def load_model(path) -> TabularModel:
    return TabularModel.from_dict(json.loads(Path(path).read_text()))
