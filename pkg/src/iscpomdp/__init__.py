"""Initial-state cost POMDPs: augmentation, fixed-point smoothing and point-based solving."""
from iscpomdp.augmentation import (
    AugmentedModel,
    aug_obs_likelihood,
    augment,
    initial_entropy,
    inv_index,
    lin_index,
    marginal_current,
    marginal_initial,
    smoother_update,
)
from iscpomdp.costs import (
    BeliefCost,
    InitialStateCost,
    PwlcApprox,
    StateControlCost,
    build_pwlc,
    entropy_tangent,
    expected_aug_cost,
    expected_state_cost,
    rho_bar,
)
from iscpomdp.model import TabularModel, filter_update, obs_likelihood, validate_model
from iscpomdp.solver import (
    AlphaPolicy,
    SolveParams,
    backup,
    policy_action,
    solve_exact_finite_horizon,
    solve_point_based,
)

__version__ = "0.1.0"
