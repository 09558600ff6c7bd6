"""Fixed-point smoothing of the initial state on a two-cell toy.

Run with ``python demos/smoother_walkthrough.py``.
"""
# %% A two-state model: the state never moves, the sensor is noisy.
import numpy as np

from iscpomdp import TabularModel, augment, filter_update
from iscpomdp.augmentation import as_matrix, initial_entropy, marginal_current, marginal_initial, smoother_update

T = np.eye(2)[None]
O = np.array([[[0.8, 0.2], [0.4, 0.6]]])
model = TabularModel(T, O, [0.5, 0.5])
aug = augment(model)

# %% The augmented prior puts the base prior on the diagonal (x0 == x).
print("prior over (x0, x):")
print(as_matrix(aug.aug_initial, 2))  # rows: current state, columns: initial state

# %% Feed a few observations. The smoother tracks the joint posterior, so
# both the initial-state marginal and the ordinary filter come out of it.
xi, pi = aug.aug_initial, model.initial_belief
for k, y in enumerate([0, 0, 1, 0], start=1):
    xi = smoother_update(aug, xi, 0, y)
    pi = filter_update(model, pi, 0, y)
    print(f"k={k} y={y}  p(x0)={np.round(marginal_initial(xi), 4)}  "
          f"H(x0)={initial_entropy(xi):.4f}  filter agrees: {np.allclose(marginal_current(xi), pi)}")

# %% With a mobile state the two marginals separate: x0 stays put in the
# posterior while x keeps moving.
T = np.array([[[0.1, 0.9], [0.9, 0.1]]])
moving = augment(TabularModel(T, O, [0.5, 0.5]))
xi = moving.aug_initial
for y in [0, 0, 0]:
    xi = smoother_update(moving, xi, 0, y)
print("moving state:  p(x0) =", np.round(marginal_initial(xi), 4), " p(x) =", np.round(marginal_current(xi), 4))
