"""Point-based value iteration for cost-minimising (augmented) belief MDPs.

The value function is the lower envelope ``min_i <alpha_i, b>`` of a set of
alpha vectors, initialised from a single constant pessimistic vector so every
vector in the set is the cost of some executable policy (an upper bound on the
optimal cost) and values at tracked belief points never increase.

Both plain POMDPs (:class:`~iscpomdp.model.TabularModel`) and augmented models
(:class:`~iscpomdp.augmentation.AugmentedModel`) are supported. A belief or
alpha vector is handled as an ``(n, k)`` matrix, with ``n`` the base state
count and ``k`` either 1 (plain) or ``n`` (augmented, one column per initial
state). Since the augmented transition matrix is block diagonal, propagating a
column through the base matrix is all that is ever needed.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from iscpomdp.augmentation import AugmentedModel, aug_obs_likelihood, smoother_update
from iscpomdp.costs import (
    BeliefCost,
    InitialStateCost,
    PwlcApprox,
    StateControlCost,
    build_pwlc,
    default_base_points,
)
from iscpomdp.errors import BudgetTooSmall, DimensionMismatch, TreeTooLarge
from iscpomdp.model import UNDERFLOW, TabularModel, filter_update, obs_likelihood

log = logging.getLogger(__name__)

CHUNK = 256


@dataclass(frozen=True)
class AlphaVector:
    values: np.ndarray
    action: int


@dataclass
class SolveParams:
    time_budget: float = 300.0
    max_belief_points: int = 500
    epsilon: float = 1e-3
    rng_seed: int = 0
    horizon_bound: int = 10
    sweeps_per_round: int = 25
    max_sweeps: int = 5000

    def __post_init__(self):
        if not self.time_budget > 0:
            raise ValueError("time_budget must be positive")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_belief_points < 1:
            raise ValueError("max_belief_points must be at least 1")


@dataclass
class SolveStats:
    sweeps: int = 0
    rounds: int = 0
    n_points: int = 0
    n_alphas_before_prune: int = 0
    converged: bool = False
    budget_exhausted: bool = False
    elapsed: float = 0.0
    last_delta: float = float("inf")

    def deterministic(self) -> dict:
        """Fields that do not depend on wall-clock timing."""
        d = asdict(self)
        del d["elapsed"]
        return d


@dataclass(eq=False)
class AlphaPolicy:
    """Lower envelope of alpha vectors plus what is needed to act on it.

    ``planning_cost[s, u]`` and ``psi`` are the stage costs the policy was
    computed for; :func:`policy_action` uses them by default.
    """

    alphas: np.ndarray
    actions: np.ndarray
    discount: float
    n_controls: int
    planning_cost: np.ndarray | None = None
    psi: BeliefCost = field(default_factory=BeliefCost.none)
    params: dict = field(default_factory=dict)
    stats: SolveStats | None = None

    def __post_init__(self):
        self.alphas = np.atleast_2d(np.asarray(self.alphas, dtype=float))
        self.actions = np.asarray(self.actions, dtype=int).reshape(-1)
        if len(self.alphas) == 0:
            raise ValueError("an alpha policy needs at least one vector")
        if len(self.actions) != len(self.alphas):
            raise ValueError("one action per alpha vector is required")

    @property
    def n_states(self) -> int:
        return self.alphas.shape[1]

    def __len__(self):
        return len(self.alphas)

    def __iter__(self):
        for a, u in zip(self.alphas, self.actions):
            yield AlphaVector(a, int(u))

    def value(self, xi) -> float:
        return float(np.min(self.alphas @ np.asarray(xi)))

    def values(self, beliefs) -> np.ndarray:
        return (np.asarray(beliefs) @ self.alphas.T).min(axis=1)

    def action(self, xi) -> int:
        """Action attached to the minimising alpha (no lookahead)."""
        return int(self.actions[np.argmin(self.alphas @ np.asarray(xi))])

    def to_dict(self) -> dict:
        return {
            "n_aug_states": self.n_states,
            "n_controls": self.n_controls,
            "discount": self.discount,
            "params": self.params,
            "psi": self.psi.to_dict(),
            "planning_cost": None if self.planning_cost is None else self.planning_cost.tolist(),
            "stats": None if self.stats is None else self.stats.deterministic(),
            "alphas": [
                {"action": int(u), "values": a.tolist()} for a, u in zip(self.alphas, self.actions)
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AlphaPolicy":
        pc = d.get("planning_cost")
        policy = cls(
            alphas=[r["values"] for r in d["alphas"]],
            actions=[r["action"] for r in d["alphas"]],
            discount=d["discount"],
            n_controls=d["n_controls"],
            planning_cost=None if pc is None else np.asarray(pc, dtype=float),
            psi=BeliefCost.from_dict(d.get("psi")),
            params=d.get("params", {}),
            stats=None if d.get("stats") is None else SolveStats(**d["stats"]),
        )
        if policy.n_states != d["n_aug_states"]:
            raise DimensionMismatch("header state count does not match alpha vectors")
        return policy

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path) -> "AlphaPolicy":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _base_and_blocks(model) -> tuple[TabularModel, int]:
    if isinstance(model, AugmentedModel):
        return model.base, model.n_base
    return model, 1


def cost_matrix(model, cost) -> np.ndarray:
    """Stage cost table ``[belief-state, control]`` matching ``model``."""
    if isinstance(model, AugmentedModel):
        if isinstance(cost, StateControlCost):
            cost = InitialStateCost.from_state_cost(cost)
        m = cost.augmented if isinstance(cost, InitialStateCost) else np.asarray(cost, float)
    else:
        if isinstance(cost, InitialStateCost):
            raise DimensionMismatch("an initial-state cost needs an augmented model")
        m = cost.table if isinstance(cost, StateControlCost) else np.asarray(cost, float)
    base, k = _base_and_blocks(model)
    if m.shape != (base.n_states * k, base.n_controls):
        raise DimensionMismatch(f"cost table shape {m.shape} does not match the model")
    return m


class _Kernel:
    """Batched successor and back-projection operators for one model."""

    def __init__(self, model):
        base, k = _base_and_blocks(model)
        self.A = base.transition
        self.B = base.observation
        self.n, self.k = base.n_states, k
        self.ns = self.n * k
        self.n_controls, self.n_obs = base.n_controls, base.n_obs
        self.discount = base.discount
        # AB[u, y, xbar, x] = p(x | xbar, u) p(y | x, u)
        self.AB = self.A[:, None, :, :] * self.B.transpose(0, 2, 1)[:, :, None, :]

    def successors(self, beliefs: np.ndarray, u: int) -> np.ndarray:
        """Unnormalised next beliefs, shape ``(n_obs, P, ns)``."""
        P = len(beliefs)
        M = beliefs.reshape(P, self.n, self.k)
        pred = np.einsum("ab,pak->pbk", self.A[u], M)
        out = pred[None, :, :, :] * self.B[u].T[:, None, :, None]
        return out.reshape(self.n_obs, P, self.ns)

    def backproject(self, chosen: np.ndarray, u: int) -> np.ndarray:
        """``sum_y AB[u, y] @ alpha_y`` for chosen alphas of shape ``(n_obs, P, ns)``."""
        Y, P, _ = chosen.shape
        mats = chosen.reshape(Y, P, self.n, self.k)
        return np.einsum("yax,ypxk->pak", self.AB[u], mats).reshape(P, self.ns)


def _lookahead(kernel: _Kernel, alphas: np.ndarray, beliefs: np.ndarray, stage: np.ndarray):
    """Q-values and the minimising next-step alpha index for every (u, y, point)."""
    P = len(beliefs)
    Q = np.empty((P, kernel.n_controls))
    choice = np.empty((kernel.n_controls, kernel.n_obs, P), dtype=np.intp)
    aT = alphas.T
    for lo in range(0, P, CHUNK):
        sl = slice(lo, min(lo + CHUNK, P))
        b = beliefs[sl]
        for u in range(kernel.n_controls):
            un = kernel.successors(b, u)
            vals = un.reshape(-1, kernel.ns) @ aT
            idx = np.argmin(vals, axis=1)
            mins = vals[np.arange(len(idx)), idx].reshape(kernel.n_obs, -1)
            Q[sl, u] = stage[sl, u] + kernel.discount * mins.sum(axis=0)
            choice[u, :, sl] = idx.reshape(kernel.n_obs, -1)
    return Q, choice


def _stage_costs(kernel, cmat, pwlc, beliefs):
    stage = beliefs @ cmat
    planes = None
    if pwlc is not None:
        planes = pwlc.active_planes(beliefs)
        stage = stage + np.einsum("ps,ps->p", planes, beliefs)[:, None]
    return stage, planes


def _point_backups(kernel: _Kernel, cmat, pwlc, alphas, beliefs):
    """Backed-up alpha vector, action and value at every belief point."""
    stage, planes = _stage_costs(kernel, cmat, pwlc, beliefs)
    Q, choice = _lookahead(kernel, alphas, beliefs, stage)
    ustar = np.argmin(Q, axis=1)
    new = np.empty_like(beliefs)
    for u in np.unique(ustar):
        sel = np.nonzero(ustar == u)[0]
        chosen = alphas[choice[u][:, sel]]
        new[sel] = cmat[:, u] + kernel.discount * kernel.backproject(chosen, u)
    if planes is not None:
        new += planes
    return new, ustar, Q[np.arange(len(beliefs)), ustar]


def backup(model, c, psi_hat: PwlcApprox | None, alphas: AlphaPolicy, xi) -> AlphaVector:
    """One point-based Bellman backup at ``xi``.

    ``<alpha, xi>`` equals the minimal one-step lookahead value; at any other
    belief the returned vector bounds the cost of taking its action and then
    following the continuation vectors chosen at ``xi``.
    """
    kernel = _Kernel(model)
    xi = np.asarray(xi, dtype=float)[None, :]
    new, ustar, _ = _point_backups(kernel, cost_matrix(model, c), psi_hat, alphas.alphas, xi)
    return AlphaVector(new[0], int(ustar[0]))


def q_values(policy: AlphaPolicy, model, c=None, psi: BeliefCost | None = None, xi=None):
    """One-step lookahead values of every control at ``xi`` (exact ``psi``)."""
    kernel = _Kernel(model)
    cmat = policy.planning_cost if c is None else cost_matrix(model, c)
    psi = policy.psi if psi is None else psi
    xi = np.asarray(xi, dtype=float)
    stage = (xi @ cmat)[None, :] + psi(xi)
    Q, _ = _lookahead(kernel, policy.alphas, xi[None, :], stage)
    return Q[0]


def policy_action(policy: AlphaPolicy, model, c=None, psi: BeliefCost | None = None, xi=None) -> int:
    """Greedy control under one-step lookahead; ties go to the lowest index."""
    if xi is None:
        raise ValueError("a belief is required")
    if np.asarray(xi).size != policy.n_states:
        raise DimensionMismatch(
            f"belief of length {np.asarray(xi).size} for a policy over {policy.n_states} states"
        )
    return int(np.argmin(q_values(policy, model, c, psi, xi)))


def prune_dominated(alphas: np.ndarray, actions: np.ndarray, tol: float = 0.0):
    """Drop vectors that are componentwise no better than another vector.

    Pruning never changes ``min_i <alpha_i, b>`` on the simplex. Among exact
    duplicates the lowest index is kept.
    """
    K = len(alphas)
    keep = np.ones(K, dtype=bool)
    for j in range(K):
        others = keep.copy()
        others[j] = False
        if not others.any():
            continue
        le = np.all(alphas[others] <= alphas[j] + tol, axis=1)
        if not le.any():
            continue
        idx = np.nonzero(others)[0][le]
        strictly = np.any(alphas[idx] < alphas[j] - tol, axis=1)
        # equal vectors: only the higher index goes
        if strictly.any() or np.any(idx < j):
            keep[j] = False
    return alphas[keep], actions[keep]


class _PointSet:
    """Belief points with farthest-point (L1) admission."""

    def __init__(self, first, cap, min_dist=1e-9):
        self.points = [np.asarray(first, dtype=float)]
        self.depth = [0]
        self.cap = cap
        self.min_dist = min_dist

    def __len__(self):
        return len(self.points)

    def array(self):
        return np.stack(self.points)

    def admit(self, candidates, depths) -> int:
        room = self.cap - len(self.points)
        if room <= 0 or not candidates:
            return 0
        C = np.stack(candidates)
        S = self.array()
        dist = np.abs(C[:, None, :] - S[None, :, :]).sum(axis=2).min(axis=1)
        added = 0
        while added < room:
            j = int(np.argmax(dist))
            if dist[j] <= self.min_dist:
                break
            self.points.append(C[j])
            self.depth.append(depths[j])
            added += 1
            dist = np.minimum(dist, np.abs(C - C[j]).sum(axis=1))
        return added


def _sample(p, rng) -> int:
    c = np.cumsum(p)
    return int(min(np.searchsorted(c, rng.random() * c[-1], side="right"), len(p) - 1))


def _expand(kernel, cmat, pwlc, alphas, pts: _PointSet, rng, horizon_bound) -> int:
    """Propose a random-action child and a greedy child for every shallow point."""
    todo = [i for i, d in enumerate(pts.depth) if d < horizon_bound]
    if not todo:
        return 0
    B = np.stack([pts.points[i] for i in todo])
    stage, _ = _stage_costs(kernel, cmat, pwlc, B)
    Q, _ = _lookahead(kernel, alphas, B, stage)
    greedy = np.argmin(Q, axis=1)
    cands, depths = [], []
    for row, i in enumerate(todo):
        b = B[row : row + 1]
        u = int(rng.integers(kernel.n_controls))
        un = kernel.successors(b, u)[:, 0, :]
        p = un.sum(axis=1)
        y = _sample(p, rng)
        cands.append(un[y] / p[y])
        depths.append(pts.depth[i] + 1)
        u = int(greedy[row])
        un = kernel.successors(b, u)[:, 0, :]
        p = un.sum(axis=1)
        y = int(np.argmax(p))
        cands.append(un[y] / p[y])
        depths.append(pts.depth[i] + 1)
    return pts.admit(cands, depths)


def solve_point_based(
    model,
    c,
    psi: BeliefCost | None = None,
    params: SolveParams | None = None,
    *,
    pwlc: PwlcApprox | None = None,
    callback: Callable | None = None,
) -> AlphaPolicy:
    """Anytime point-based value iteration from the model's initial belief.

    Rounds alternate value sweeps over the current belief points with an
    expansion step that proposes children of every point shallower than
    ``horizon_bound``. The loop stops once the
    sweeps have converged and no point can be added, or when ``max_sweeps``
    or the time budget runs out. Without a time-out the result depends only on
    the inputs and ``params.rng_seed``.

    ``callback(sweep, points, values)`` is called after every sweep.
    """
    params = params or SolveParams()
    psi = psi or BeliefCost.none()
    start = time.perf_counter()
    kernel = _Kernel(model)
    cmat = cost_matrix(model, c)
    if pwlc is None and not psi.is_zero:
        if not isinstance(model, AugmentedModel):
            raise DimensionMismatch("belief-dependent costs need an augmented model")
        pwlc = build_pwlc(psi, default_base_points(model))
    rng = np.random.default_rng(params.rng_seed)
    gamma = kernel.discount

    bound = cmat.max() + (pwlc.upper_bound if pwlc is not None else 0.0)
    alphas = np.full((1, kernel.ns), bound / (1.0 - gamma))
    actions = np.zeros(1, dtype=int)
    pts = _PointSet(model.initial_belief, params.max_belief_points)
    stats = SolveStats()

    def out_of_time():
        return time.perf_counter() - start > params.time_budget

    done = False
    while not done:
        B = pts.array()
        old = (B @ alphas.T).min(axis=1)
        converged = False
        for _ in range(params.sweeps_per_round):
            new, ustar, val = _point_backups(kernel, cmat, pwlc, alphas, B)
            # keep the previous best vector wherever the backup did not improve
            best_old = np.argmin(B @ alphas.T, axis=1)
            worse = val > old
            new[worse] = alphas[best_old[worse]]
            ustar[worse] = actions[best_old[worse]]
            val = np.where(worse, old, val)
            alphas, first = np.unique(new, axis=0, return_index=True)
            actions = ustar[first]
            stats.sweeps += 1
            stats.last_delta = float(np.max(np.abs(old - val)))
            old = val
            if callback is not None:
                callback(stats.sweeps, B, val)
            if stats.sweeps == 1 and out_of_time():
                raise BudgetTooSmall(
                    f"first sweep took longer than the {params.time_budget}s budget"
                )
            if stats.last_delta < params.epsilon:
                converged = True
                break
            if out_of_time() or stats.sweeps >= params.max_sweeps:
                break
        stats.rounds += 1
        if out_of_time():
            stats.budget_exhausted = True
            break
        if stats.sweeps >= params.max_sweeps:
            break
        added = _expand(kernel, cmat, pwlc, alphas, pts, rng, params.horizon_bound)
        log.debug("round %d: %d sweeps, %d points (+%d), delta %.3g",
                  stats.rounds, stats.sweeps, len(pts), added, stats.last_delta)
        if added == 0 and converged:
            stats.converged = True
            done = True

    stats.n_points = len(pts)
    stats.n_alphas_before_prune = len(alphas)
    alphas, actions = prune_dominated(alphas, actions)
    stats.elapsed = time.perf_counter() - start
    saved = {k: v for k, v in asdict(params).items() if k != "time_budget"}
    saved["time_budget"] = params.time_budget
    return AlphaPolicy(
        alphas=alphas,
        actions=actions,
        discount=gamma,
        n_controls=kernel.n_controls,
        planning_cost=np.array(cmat),
        psi=psi,
        params=saved,
        stats=stats,
    )


def solve_exact_finite_horizon(
    model, c, psi: BeliefCost | None, xi, horizon: int, node_cap: int = 10**7
) -> float:
    """Optimal discounted cost over ``horizon`` stages by belief-tree search.

    Uses the exact smoother (or filter, for a plain model), exact belief
    costs and exact observation probabilities. Beliefs that agree to 12
    decimals at the same depth share one subtree.
    """
    if horizon < 0:
        raise ValueError("horizon must be non-negative")
    psi = psi or BeliefCost.none()
    cmat = cost_matrix(model, c)
    if isinstance(model, AugmentedModel):
        update, lik = smoother_update, aug_obs_likelihood
    else:
        update, lik = filter_update, obs_likelihood
    gamma = model.discount
    memo: dict = {}
    nodes = 0

    def value(b, h):
        nonlocal nodes
        if h == 0:
            return 0.0
        key = (h, np.round(b, 12).tobytes())
        if key in memo:
            return memo[key]
        nodes += 1
        if nodes > node_cap:
            raise TreeTooLarge(f"belief tree exceeded {node_cap} nodes")
        psi_b = psi(b)
        best = np.inf
        for u in range(model.n_controls):
            total = psi_b + float(b @ cmat[:, u])
            if h > 1:
                for y in range(model.n_obs):
                    p = lik(model, b, u, y)
                    if p > UNDERFLOW:
                        total += gamma * p * value(update(model, b, u, y), h - 1)
            best = min(best, total)
        memo[key] = best
        return best

    return value(np.asarray(xi, dtype=float), horizon)
