"""Point-based planning against an exact tree search on small problems.

Run with ``python demos/toy_solve.py``.
"""
# %% A 2x2 grid whose wall sensor is exact. The cost asks the agent to end
# up in the corner diagonally opposite to where it started, which it only
# knows after sensing.
import numpy as np

from iscpomdp import InitialStateCost, SolveParams, augment, solve_exact_finite_horizon, solve_point_based
from iscpomdp.gridworld import GridSpec, build_grid_model, render

spec = GridSpec.with_walls(2, 2, slip_prob=0.2, detect_given_wall=1.0, detect_given_no_wall=0.0)
print(render(spec))
aug = augment(build_grid_model(spec))
c = np.ones((4, 4, 5))
for x0 in range(4):
    c[x0, 3 - x0] = 0.0
cost = InitialStateCost(c)

# %% Solve, then compare with the exact optimum over 20 and 60 stages.
policy = solve_point_based(aug, cost, params=SolveParams(epsilon=1e-9))
print(policy.stats)
print(f"point-based value at the prior: {policy.value(aug.aug_initial):.6f}")
for H in (5, 20, 60):
    print(f"exact {H:>2}-stage value:          {solve_exact_finite_horizon(aug, cost, None, aug.aug_initial, H):.6f}")

# %% The envelope is a pointwise minimum of linear functions, hence concave.
rng = np.random.default_rng(0)
a, b = rng.dirichlet(np.ones(16), size=(2, 500))
mid = policy.values((a + b) / 2)
print("concavity holds:", bool(np.all(mid >= (policy.values(a) + policy.values(b)) / 2 - 1e-12)))
