"""Stage costs: state costs, initial-state costs and belief-dependent costs.

Belief-dependent costs enter the solver only through tangent-plane (PWLC)
upper approximations; exact evaluation is kept for reporting and the
finite-horizon oracle.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from iscpomdp.augmentation import AugmentedModel, entropy, marginal_initial, smoother_update
from iscpomdp.errors import EmptyBasePoints, ImpossibleObservation, InvalidModel

# marginal entries below this are raised to it before taking logs
CLAMP = 1e-12


@dataclass(frozen=True, eq=False)
class StateControlCost:
    """``kappa[x, u]``: cost depending on the current state only."""

    table: np.ndarray

    def __post_init__(self):
        t = np.array(self.table, dtype=float)
        if t.ndim != 2 or not np.all(np.isfinite(t)):
            raise InvalidModel("state cost must be a finite (n_states, n_controls) table")
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    @property
    def matrix(self) -> np.ndarray:
        """Cost per (belief-state, control) as used by the solver."""
        return self.table


@dataclass(frozen=True, eq=False)
class InitialStateCost:
    """``c[x0, x, u]``: cost depending on the initial and the current state."""

    table: np.ndarray

    def __post_init__(self):
        t = np.array(self.table, dtype=float)
        if t.ndim != 3 or t.shape[0] != t.shape[1] or not np.all(np.isfinite(t)):
            raise InvalidModel("initial-state cost must be a finite (n, n, n_controls) table")
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    @classmethod
    def from_state_cost(cls, kappa: StateControlCost) -> "InitialStateCost":
        k = kappa.table
        return cls(np.broadcast_to(k, (k.shape[0],) + k.shape))

    @property
    def augmented(self) -> np.ndarray:
        """Re-indexed view ``c[s, u]`` with ``s = x0 + n * x``."""
        n, _, nu = self.table.shape
        return self.table.transpose(1, 0, 2).reshape(n * n, nu)

    matrix = augmented


@dataclass(frozen=True, eq=False)
class BeliefCost:
    """Belief-dependent cost ``psi``.

    ``kind`` is one of ``"none"``, ``"initial_entropy"`` (weight times the
    initial-state entropy in nats) or ``"tangent_set"`` (minimum over the
    rows of ``planes``).
    """

    kind: str = "none"
    weight: float = 0.0
    planes: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("none", "initial_entropy", "tangent_set"):
            raise ValueError(f"unknown belief cost kind {self.kind!r}")
        if self.kind == "initial_entropy" and not self.weight >= 0:
            raise ValueError("entropy weight must be non-negative")
        if self.kind == "tangent_set":
            p = np.atleast_2d(np.asarray(self.planes, dtype=float))
            object.__setattr__(self, "planes", p)

    @classmethod
    def none(cls) -> "BeliefCost":
        return cls("none")

    @classmethod
    def initial_entropy(cls, weight: float = 1.0) -> "BeliefCost":
        return cls("initial_entropy", float(weight))

    @classmethod
    def tangent_set(cls, planes) -> "BeliefCost":
        return cls("tangent_set", 1.0, planes)

    @property
    def is_zero(self) -> bool:
        return self.kind == "none" or (self.kind == "initial_entropy" and self.weight == 0)

    def __call__(self, xi, u: int | None = None) -> float:
        if self.kind == "none":
            return 0.0
        if self.kind == "initial_entropy":
            return self.weight * entropy(marginal_initial(xi))
        return float(np.min(self.planes @ np.asarray(xi)))

    def to_dict(self) -> dict:
        if self.kind == "tangent_set":
            return {"tag": self.kind, "planes": self.planes.tolist()}
        return {"tag": self.kind, "weight": self.weight}

    @classmethod
    def from_dict(cls, d: dict | None) -> "BeliefCost":
        if not d:
            return cls.none()
        if d["tag"] == "tangent_set":
            return cls.tangent_set(d["planes"])
        return cls(d["tag"], float(d.get("weight", 0.0)))

    @classmethod
    def parse(cls, text: str) -> "BeliefCost":
        """Parse ``"none"`` or ``"entropy:<weight>"``."""
        if text in ("", "none"):
            return cls.none()
        tag, _, w = text.partition(":")
        if tag not in ("entropy", "initial_entropy"):
            raise ValueError(f"unrecognised belief cost {text!r}")
        return cls.initial_entropy(float(w) if w else 1.0)


@dataclass(frozen=True, eq=False)
class PwlcApprox:
    """Minimum of tangent planes; an upper bound on a concave belief cost."""

    planes: np.ndarray
    base_points: np.ndarray

    def __call__(self, xi) -> float:
        return float(np.min(self.planes @ np.asarray(xi)))

    def values(self, beliefs) -> np.ndarray:
        """Evaluate at each row of ``beliefs``."""
        return (np.asarray(beliefs) @ self.planes.T).min(axis=1)

    def active_planes(self, beliefs) -> np.ndarray:
        """Minimising plane at each row of ``beliefs`` (lowest index on ties)."""
        idx = np.argmin(np.asarray(beliefs) @ self.planes.T, axis=1)
        return self.planes[idx]

    @property
    def upper_bound(self) -> float:
        """A constant that bounds the approximation from above on the simplex."""
        return float(self.planes.max(axis=1).min())


def expected_state_cost(kappa: StateControlCost, belief, u: int) -> float:
    return float(np.asarray(belief) @ kappa.table[:, u])


def expected_aug_cost(c: InitialStateCost, xi, u: int) -> float:
    return float(np.asarray(xi) @ c.augmented[:, u])


def rho_bar(c: InitialStateCost, psi: BeliefCost, xi, u: int) -> float:
    """Augmented-belief stage cost: belief cost plus expected initial-state cost."""
    return psi(xi, u) + expected_aug_cost(c, xi, u)


def entropy_tangent(xi_base) -> np.ndarray:
    """Tangent plane of the initial-state entropy at ``xi_base``.

    ``g[s] = -log m(x0(s))`` where ``m`` is the initial-state marginal of
    ``xi_base``. By Gibbs' inequality ``g @ xi`` (a cross-entropy) bounds the
    entropy of ``xi`` from above, with equality at ``xi_base``.
    """
    xi_base = np.asarray(xi_base, dtype=float)
    m = marginal_initial(xi_base)
    n = m.size
    g0 = -np.log(np.maximum(m, CLAMP))
    # s = x0 + n*xk, so the plane repeats the x0 pattern once per current state
    return np.tile(g0, n)


def build_pwlc(psi: BeliefCost, base_points) -> PwlcApprox:
    if psi.kind != "initial_entropy":
        raise ValueError("tangent construction is implemented for the initial-state entropy")
    pts = np.atleast_2d(np.asarray(base_points, dtype=float))
    if pts.size == 0 or pts.shape[0] == 0:
        raise EmptyBasePoints("at least one base point is required")
    planes = psi.weight * np.stack([entropy_tangent(b) for b in pts])
    return PwlcApprox(planes, pts)


def default_base_points(aug: AugmentedModel, depth: int = 2) -> np.ndarray:
    """Uniform belief, the prior and every belief reachable in ``depth`` steps.

    Points sharing an initial-state marginal give the same tangent plane, so
    only one representative per marginal (rounded to 12 decimals) is kept.
    """
    n = aug.n_aug_states
    points = [np.full(n, 1.0 / n), np.array(aug.aug_initial)]
    frontier = [np.array(aug.aug_initial)]
    for _ in range(depth):
        nxt = []
        for xi in frontier:
            for u in range(aug.n_controls):
                for y in range(aug.n_obs):
                    try:
                        nxt.append(smoother_update(aug, xi, u, y))
                    except ImpossibleObservation:
                        continue
        points.extend(nxt)
        frontier = nxt
    seen = {}
    for p in points:
        key = np.round(marginal_initial(p), 12).tobytes()
        seen.setdefault(key, p)
    return np.stack(list(seen.values()))


def save_cost(path, cost, psi: BeliefCost | None = None) -> None:
    """Write a cost file.

    ``kappa`` is stored with index order ``[x][u]``; ``c`` with ``[x0][x][u]``.
    """
    doc = {}
    if isinstance(cost, InitialStateCost):
        doc["c"] = cost.table.tolist()
    else:
        doc["kappa"] = cost.table.tolist()
    doc["psi"] = (psi or BeliefCost.none()).to_dict()
    Path(path).write_text(json.dumps(doc) + "\n")


def load_cost(path):
    """Return ``(cost, psi)`` from a cost file."""
    doc = json.loads(Path(path).read_text())
    if "c" in doc:
        cost = InitialStateCost(doc["c"])
    elif "kappa" in doc:
        cost = StateControlCost(doc["kappa"])
    else:
        raise InvalidModel(f"{path}: cost file needs a 'c' or 'kappa' table")
    return cost, BeliefCost.from_dict(doc.get("psi"))
