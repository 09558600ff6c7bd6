"""Monte Carlo evaluation of policies on an ISC experiment and result files.

Every run draws all of its randomness up front from a generator seeded with
``(master_seed, run_id)``: one uniform for the initial state, then one for
each transition and one for each observation. Two arms run with the same
master seed therefore face the same initial state and the same noise
sequence, which makes their comparison paired.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from iscpomdp.augmentation import augment, initial_entropy, marginal_initial, smoother_update
from iscpomdp.errors import ConfigMismatch, DimensionMismatch
from iscpomdp.model import filter_update
from iscpomdp.solver import AlphaPolicy, _Kernel, _lookahead

ARMS = ("augmented", "base")

# published results of the original grid experiment: (initial-state cost, corner baseline)
REFERENCE_TABLE = {
    "discounted_cost": (6.26, 7.91),
    "goals_reached": (8031, 4116),
    "final_initial_entropy": (1.54, 1.72),
    "final_prob_true_x0": (0.296, 0.245),
}


@dataclass
class TrajectoryRecord:
    run_id: int
    true_x0: int
    states: list
    controls: list
    observations: list
    step_costs: list
    discounted_cost: float
    final_xi: np.ndarray
    final_pi: np.ndarray | None
    entropy_curve: np.ndarray
    prob_curve: np.ndarray
    goal_reached: bool = False

    @property
    def horizon(self) -> int:
        return len(self.controls)

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "true_x0": self.true_x0,
            "states": self.states,
            "controls": self.controls,
            "observations": self.observations,
            "step_costs": self.step_costs,
            "discounted_cost": self.discounted_cost,
            "goal_reached": self.goal_reached,
            "final_xi": self.final_xi.tolist(),
            "final_pi": None if self.final_pi is None else self.final_pi.tolist(),
        }


def _draw(p, v) -> int:
    """Inverse-CDF sample of ``p`` at uniform ``v``."""
    c = np.cumsum(p)
    return int(min(np.searchsorted(c, v * c[-1], side="right"), len(p) - 1))


class _Actor:
    """One-step lookahead controller bound to a policy and its belief space."""

    def __init__(self, policy: AlphaPolicy, model):
        self.policy = policy
        self.kernel = _Kernel(model)
        if policy.n_states != self.kernel.ns:
            raise DimensionMismatch(
                f"policy over {policy.n_states} states used on a {self.kernel.ns}-state belief"
            )
        if policy.planning_cost is None:
            raise DimensionMismatch("policy carries no planning cost; cannot look ahead")

    def __call__(self, belief) -> int:
        b = belief[None, :]
        stage = b @ self.policy.planning_cost + self.policy.psi(belief)
        Q, _ = _lookahead(self.kernel, self.policy.alphas, b, stage)
        return int(np.argmin(Q[0]))


def goal_reached(record: TrajectoryRecord, experiment) -> bool:
    """True when the final state is the goal assigned to the true initial state."""
    return record.states[-1] == experiment.goal_map[record.true_x0]


def simulate_run(experiment, policy: AlphaPolicy, arm: str, T: int, rng, run_id: int = 0,
                 _actor=None) -> TrajectoryRecord:
    """Simulate one episode of length ``T`` and score it with the ISC cost."""
    if arm not in ARMS:
        raise ValueError(f"arm must be one of {ARMS}")
    model = experiment.model
    aug = augment(model)
    actor = _actor or _Actor(policy, aug if arm == "augmented" else model)
    c = experiment.isc_cost.table
    gamma = model.discount
    draws = rng.random(1 + 2 * T)

    x0 = _draw(model.initial_belief, draws[0])
    xi = np.array(aug.aug_initial)
    pi = np.array(model.initial_belief) if arm == "base" else None
    states, controls, obs, costs = [x0], [], [], []
    ent = [initial_entropy(xi)]
    prob = [marginal_initial(xi)[x0]]
    x = x0
    for k in range(T):
        u = actor(xi if arm == "augmented" else pi)
        costs.append(float(c[x0, x, u]))
        x = _draw(model.transition[u, x], draws[1 + 2 * k])
        y = _draw(model.observation[u, x], draws[2 + 2 * k])
        xi = smoother_update(aug, xi, u, y)
        if pi is not None:
            pi = filter_update(model, pi, u, y)
        states.append(x)
        controls.append(u)
        obs.append(y)
        ent.append(initial_entropy(xi))
        prob.append(marginal_initial(xi)[x0])

    disc = 0.0
    for k, ck in enumerate(costs):
        disc += gamma ** k * ck
    rec = TrajectoryRecord(
        run_id=run_id,
        true_x0=x0,
        states=states,
        controls=controls,
        observations=obs,
        step_costs=costs,
        discounted_cost=disc,
        final_xi=xi,
        final_pi=pi,
        entropy_curve=np.array(ent),
        prob_curve=np.array(prob, dtype=float),
    )
    rec.goal_reached = goal_reached(rec, experiment)
    return rec


def run_rng(seed: int, run_id: int) -> np.random.Generator:
    return np.random.default_rng([seed, run_id])


@dataclass
class RunConfig:
    experiment: object
    policy: AlphaPolicy
    arm: str = "augmented"
    horizon: int = 10
    num_runs: int = 10_000
    rng_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.horizon < 1 or self.num_runs < 1:
            raise ValueError("horizon and num_runs must be at least 1")
        if self.arm not in ARMS:
            raise ValueError(f"arm must be one of {ARMS}")


@dataclass
class MetricsSummary:
    arm: str
    num_runs: int
    horizon: int
    avg_discounted_cost: float
    se_discounted_cost: float
    goals_reached: int
    avg_final_initial_entropy: float
    se_final_initial_entropy: float
    avg_final_prob_at_true_x0: float
    se_final_prob_at_true_x0: float
    entropy_curve: np.ndarray
    entropy_curve_se: np.ndarray
    prob_curve: np.ndarray
    prob_curve_se: np.ndarray
    meta: dict = field(default_factory=dict)
    per_run: dict = field(default_factory=dict, repr=False)


def _se(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if len(a) < 2:
        return np.zeros(a.shape[1:]) if a.ndim > 1 else 0.0
    return a.std(axis=0, ddof=1) / np.sqrt(len(a))


def summarize(rows: dict, arm: str, horizon: int, meta: dict | None = None) -> MetricsSummary:
    """Aggregate per-run arrays (keys as produced by :func:`records_to_columns`)."""
    cost = rows["discounted_cost"]
    fe = rows["final_entropy"]
    fp = rows["final_prob"]
    H, P = rows["entropy_curve"], rows["prob_curve"]
    return MetricsSummary(
        arm=arm,
        num_runs=len(cost),
        horizon=horizon,
        avg_discounted_cost=float(cost.mean()),
        se_discounted_cost=float(_se(cost)),
        goals_reached=int(rows["goal_reached"].sum()),
        avg_final_initial_entropy=float(fe.mean()),
        se_final_initial_entropy=float(_se(fe)),
        avg_final_prob_at_true_x0=float(fp.mean()),
        se_final_prob_at_true_x0=float(_se(fp)),
        entropy_curve=H.mean(axis=0),
        entropy_curve_se=_se(H),
        prob_curve=P.mean(axis=0),
        prob_curve_se=_se(P),
        meta=dict(meta or {}),
        per_run=rows,
    )


def records_to_columns(records) -> dict:
    return {
        "run_id": np.array([r.run_id for r in records]),
        "true_x0": np.array([r.true_x0 for r in records]),
        "discounted_cost": np.array([r.discounted_cost for r in records]),
        "goal_reached": np.array([r.goal_reached for r in records], dtype=bool),
        "final_entropy": np.array([r.entropy_curve[-1] for r in records]),
        "final_prob": np.array([r.prob_curve[-1] for r in records]),
        "entropy_curve": np.stack([r.entropy_curve for r in records]),
        "prob_curve": np.stack([r.prob_curve for r in records]),
    }


def _policy_fingerprint(policy: AlphaPolicy) -> str:
    blob = json.dumps(policy.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _run_block(args):
    experiment, policy, arm, T, seed, ids = args
    model = experiment.model
    actor = _Actor(policy, augment(model) if arm == "augmented" else model)
    return [simulate_run(experiment, policy, arm, T, run_rng(seed, i), i, _actor=actor) for i in ids]


def monte_carlo(config: RunConfig, return_records: bool = False):
    """Run ``num_runs`` seeded episodes and aggregate them in run order."""
    ids = list(range(config.num_runs))
    exp, pol = config.experiment, config.policy
    if config.workers > 1:
        blocks = [ids[i::config.workers] for i in range(config.workers)]
        with ProcessPoolExecutor(config.workers) as ex:
            parts = ex.map(_run_block, [(exp, pol, config.arm, config.horizon, config.rng_seed, b)
                                        for b in blocks])
            records = sorted((r for part in parts for r in part), key=lambda r: r.run_id)
    else:
        records = _run_block((exp, pol, config.arm, config.horizon, config.rng_seed, ids))
    meta = {
        "arm": config.arm,
        "horizon": config.horizon,
        "num_runs": config.num_runs,
        "seed": config.rng_seed,
        "discount": exp.model.discount,
        "model": exp.model.fingerprint(),
        "policy": _policy_fingerprint(pol),
    }
    summary = summarize(records_to_columns(records), config.arm, config.horizon, meta)
    return (summary, records) if return_records else summary


def write_runs(summary: MetricsSummary, path) -> None:
    """One row per run; header comments carry the run configuration."""
    rows = summary.per_run
    T = summary.horizon
    buf = io.StringIO()
    for k in sorted(summary.meta):
        buf.write(f"# {k}={summary.meta[k]}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["run_id", "true_x0", "discounted_cost", "goal_reached", "final_entropy",
                "final_prob"] + [f"entropy_{k}" for k in range(T + 1)]
               + [f"prob_{k}" for k in range(T + 1)])
    for i in range(len(rows["run_id"])):
        w.writerow([int(rows["run_id"][i]), int(rows["true_x0"][i]),
                    repr(float(rows["discounted_cost"][i])), int(rows["goal_reached"][i]),
                    repr(float(rows["final_entropy"][i])), repr(float(rows["final_prob"][i]))]
                   + [repr(float(v)) for v in rows["entropy_curve"][i]]
                   + [repr(float(v)) for v in rows["prob_curve"][i]])
    Path(path).write_text(buf.getvalue())


def read_runs(path) -> MetricsSummary:
    meta, lines = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            k, _, v = line[1:].strip().partition("=")
            meta[k] = v
        elif line:
            lines.append(line)
    reader = csv.reader(lines)
    header = next(reader)
    data = list(reader)
    T = sum(h.startswith("entropy_") for h in header) - 1
    col = {h: i for i, h in enumerate(header)}
    arr = np.array([[float(v) for v in r] for r in data])
    rows = {
        "run_id": arr[:, col["run_id"]].astype(int),
        "true_x0": arr[:, col["true_x0"]].astype(int),
        "discounted_cost": arr[:, col["discounted_cost"]],
        "goal_reached": arr[:, col["goal_reached"]].astype(bool),
        "final_entropy": arr[:, col["final_entropy"]],
        "final_prob": arr[:, col["final_prob"]],
        "entropy_curve": arr[:, [col[f"entropy_{k}"] for k in range(T + 1)]],
        "prob_curve": arr[:, [col[f"prob_{k}"] for k in range(T + 1)]],
    }
    return summarize(rows, meta.get("arm", "?"), T, meta)


def write_trajectories(records, path) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict()) + "\n")


CRITERIA = (
    ("discounted_cost", "avg_discounted_cost", "se_discounted_cost"),
    ("goals_reached", "goals_reached", None),
    ("final_initial_entropy", "avg_final_initial_entropy", "se_final_initial_entropy"),
    ("final_prob_true_x0", "avg_final_prob_at_true_x0", "se_final_prob_at_true_x0"),
)


def _paired_se(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    if a.shape == b.shape:
        return _se(a - b)
    return np.sqrt(_se(a) ** 2 + _se(b) ** 2)


def compare(isc: MetricsSummary, base: MetricsSummary) -> list[dict]:
    """Four comparison rows with per-arm values, their difference and its standard error."""
    for key in ("horizon", "num_runs"):
        if getattr(isc, key) != getattr(base, key):
            raise ConfigMismatch(f"arms differ in {key}: {getattr(isc, key)} vs {getattr(base, key)}")
    for key in ("model", "seed", "discount"):
        a, b = isc.meta.get(key), base.meta.get(key)
        if a is not None and b is not None and str(a) != str(b):
            raise ConfigMismatch(f"arms differ in {key}: {a} vs {b}")
    per_run_key = {
        "discounted_cost": "discounted_cost",
        "goals_reached": "goal_reached",
        "final_initial_entropy": "final_entropy",
        "final_prob_true_x0": "final_prob",
    }
    out = []
    for name, attr, se_attr in CRITERIA:
        a, b = getattr(isc, attr), getattr(base, attr)
        k = per_run_key[name]
        se = float(_paired_se(isc.per_run[k], base.per_run[k])) if isc.per_run and base.per_run else float("nan")
        if name == "goals_reached":
            se *= isc.num_runs
        out.append({
            "criterion": name,
            "isc": a,
            "isc_se": getattr(isc, se_attr) if se_attr else "",
            "baseline": b,
            "baseline_se": getattr(base, se_attr) if se_attr else "",
            "delta": a - b,
            "delta_se": se,
            "reference_isc": REFERENCE_TABLE[name][0],
            "reference_baseline": REFERENCE_TABLE[name][1],
        })
    return out


def curve_rows(isc: MetricsSummary, base: MetricsSummary) -> list[dict]:
    """Per-step mean curves of both arms, ``horizon + 1`` rows."""
    rows = []
    for k in range(isc.horizon + 1):
        rows.append({
            "k": k,
            "isc_entropy": float(isc.entropy_curve[k]),
            "isc_entropy_se": float(isc.entropy_curve_se[k]),
            "baseline_entropy": float(base.entropy_curve[k]),
            "baseline_entropy_se": float(base.entropy_curve_se[k]),
            "isc_prob": float(isc.prob_curve[k]),
            "isc_prob_se": float(isc.prob_curve_se[k]),
            "baseline_prob": float(base.prob_curve[k]),
            "baseline_prob_se": float(base.prob_curve_se[k]),
        })
    return rows


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_table(path, rows, meta_lines):
    buf = io.StringIO()
    for line in meta_lines:
        buf.write(f"# {line}\n")
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt(v) for k, v in r.items()})
    Path(path).write_text(buf.getvalue())


def report(isc: MetricsSummary, base: MetricsSummary, out=None):
    """Comparison table and per-step curves for an ISC arm and a baseline arm.

    With ``out`` set, writes ``out`` (the table) and ``<out stem>_curves.csv``
    next to it. Returns ``(table_rows, curve_rows)``.
    """
    table = compare(isc, base)
    curves = curve_rows(isc, base)
    if out is not None:
        out = Path(out)
        meta_lines = [f"isc.{k}={v}" for k, v in sorted(isc.meta.items())]
        meta_lines += [f"baseline.{k}={v}" for k, v in sorted(base.meta.items())]
        meta_lines.append("reference columns: published values of the original experiment (static)")
        _write_table(out, table, meta_lines)
        _write_table(out.with_name(out.stem + "_curves.csv"), curves, meta_lines)
    return table, curves
