"""Grid navigation POMDP with walls, slip noise and wall-proximity sensing.

Cells are numbered column by column, top to bottom within a column
(``state = row + rows * col``, zero-based). Controls are ``N, E, S, W, stay``
(0..4). Observation ``y`` is a 4-bit pattern, bit ``d`` set when a wall is
reported in direction ``d`` (order N, E, S, W).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from iscpomdp.costs import InitialStateCost, StateControlCost
from iscpomdp.errors import InvalidSpec, UnsupportedGrid
from iscpomdp.model import TabularModel

DIRECTIONS = ("N", "E", "S", "W")
STAY = 4
N_CONTROLS = 5
_STEP = {"N": (-1, 0), "E": (0, 1), "S": (1, 0), "W": (0, -1)}
_OPPOSITE = {"N": "S", "S": "N", "E": "W", "W": "E"}


def _boundary(rows, cols):
    walls = set()
    for c in range(cols):
        walls.add(((0, c), "N"))
        walls.add(((rows - 1, c), "S"))
    for r in range(rows):
        walls.add(((r, 0), "W"))
        walls.add(((r, cols - 1), "E"))
    return walls


def _mirror(cell, d):
    r, c = cell
    dr, dc = _STEP[d]
    return (r + dr, c + dc), _OPPOSITE[d]


@dataclass(frozen=True)
class GridSpec:
    """Grid geometry and noise levels.

    ``walls`` holds ``((row, col), direction)`` segments and must contain the
    outer boundary and both sides of every interior wall. Use
    :meth:`with_walls` to have those filled in.
    """

    rows: int
    cols: int
    walls: frozenset = field(default_factory=frozenset)
    slip_prob: float = 0.2
    detect_given_wall: float = 0.8
    detect_given_no_wall: float = 0.2
    layout: str = "custom"
    discount: float = 0.95

    def __post_init__(self):
        object.__setattr__(self, "walls", frozenset((tuple(c), d) for c, d in self.walls))
        if self.rows < 1 or self.cols < 1:
            raise InvalidSpec("grid needs at least one row and one column")
        if not 0.0 <= self.slip_prob < 1.0:
            raise InvalidSpec(f"slip_prob {self.slip_prob} not in [0, 1)")
        for name in ("detect_given_wall", "detect_given_no_wall"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise InvalidSpec(f"{name} {p} not in [0, 1]")
        for (r, c), d in self.walls:
            if d not in _STEP or not (0 <= r < self.rows and 0 <= c < self.cols):
                raise InvalidSpec(f"bad wall segment {((r, c), d)}")
        missing = _boundary(self.rows, self.cols) - self.walls
        if missing:
            raise InvalidSpec(f"boundary walls missing: {sorted(missing)[:4]}")
        for cell, d in self.walls:
            other = _mirror(cell, d)
            if self._inside(other[0]) and other not in self.walls:
                raise InvalidSpec(f"wall {(cell, d)} has no mirror {other}")

    def _inside(self, cell):
        r, c = cell
        return 0 <= r < self.rows and 0 <= c < self.cols

    @classmethod
    def with_walls(cls, rows, cols, interior=(), **kw) -> "GridSpec":
        """Spec with boundary walls and mirrored copies of ``interior`` added."""
        walls = _boundary(rows, cols)
        for cell, d in interior:
            cell = tuple(cell)
            walls.add((cell, d))
            other = _mirror(cell, d)
            if 0 <= other[0][0] < rows and 0 <= other[0][1] < cols:
                walls.add(other)
        return cls(rows, cols, frozenset(walls), **kw)

    @property
    def n_states(self) -> int:
        return self.rows * self.cols

    def state(self, row: int, col: int) -> int:
        return row + self.rows * col

    def cell(self, state: int) -> tuple[int, int]:
        return state % self.rows, state // self.rows

    def has_wall(self, state: int, d: str) -> bool:
        return (self.cell(state), d) in self.walls

    def interior_walls(self):
        """Interior segments, one side each (N or W)."""
        boundary = _boundary(self.rows, self.cols)
        return sorted((c, d) for c, d in self.walls - boundary if d in ("S", "E"))

    def to_dict(self) -> dict:
        return {
            "rows": self.rows,
            "cols": self.cols,
            "walls": [[list(c), d] for c, d in self.interior_walls()],
            "slip_prob": self.slip_prob,
            "detect_given_wall": self.detect_given_wall,
            "detect_given_no_wall": self.detect_given_no_wall,
            "layout": self.layout,
            "discount": self.discount,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        kw = {k: d[k] for k in ("slip_prob", "detect_given_wall", "detect_given_no_wall",
                                "layout", "discount") if k in d}
        return cls.with_walls(d["rows"], d["cols"], [(tuple(c), w) for c, w in d["walls"]], **kw)


def load_grid_config(path) -> GridSpec:
    return GridSpec.from_dict(json.loads(Path(path).read_text()))


def save_grid_config(spec: GridSpec, path) -> None:
    Path(path).write_text(json.dumps(spec.to_dict(), indent=1) + "\n")


def default_spec() -> GridSpec:
    """The shipped ``fig1-approx`` 4x4 layout."""
    text = resources.files("iscpomdp").joinpath("data/fig1_approx.json").read_text()
    return GridSpec.from_dict(json.loads(text))


def obs_index(bits) -> int:
    """Observation index of a wall-bit tuple ordered (N, E, S, W)."""
    return sum(int(b) << d for d, b in enumerate(bits))


def obs_bits(y: int) -> tuple[int, int, int, int]:
    return tuple((y >> d) & 1 for d in range(4))


def build_grid_model(spec: GridSpec) -> TabularModel:
    n = spec.n_states
    T = np.zeros((N_CONTROLS, n, n))
    for x in range(n):
        r, c = spec.cell(x)
        T[STAY, x, x] = 1.0
        for u, d in enumerate(DIRECTIONS):
            if spec.has_wall(x, d):
                T[u, x, x] = 1.0
                continue
            dr, dc = _STEP[d]
            T[u, x, spec.state(r + dr, c + dc)] += 1.0 - spec.slip_prob
            T[u, x, x] += spec.slip_prob

    O = np.ones((n, 16))
    for x in range(n):
        for y in range(16):
            for d, bit in zip(DIRECTIONS, obs_bits(y)):
                p = spec.detect_given_wall if spec.has_wall(x, d) else spec.detect_given_no_wall
                O[x, y] *= p if bit else 1.0 - p
    O = np.broadcast_to(O, (N_CONTROLS, n, 16))
    return TabularModel(T, O, np.full(n, 1.0 / n), spec.discount)


def quadrant_goal(x0: int, spec: GridSpec | None = None) -> int:
    """Corner cell of the quadrant containing ``x0``.

    Defined for grids with an even number of rows and columns; on the 4x4
    grid this is the four-way split into 2x2 blocks.
    """
    rows, cols = (4, 4) if spec is None else (spec.rows, spec.cols)
    if rows % 2 or cols % 2:
        raise UnsupportedGrid(f"quadrants need even dimensions, got {rows}x{cols}")
    if not 0 <= x0 < rows * cols:
        raise UnsupportedGrid(f"state {x0} outside the {rows}x{cols} grid")
    r, c = x0 % rows, x0 // rows
    gr = 0 if r < rows // 2 else rows - 1
    gc = 0 if c < cols // 2 else cols - 1
    return gr + rows * gc


def build_isc_cost(spec: GridSpec) -> InitialStateCost:
    """``c[x0, x, u] = 1`` unless ``x`` is the quadrant goal of ``x0``."""
    n = spec.n_states
    c = np.ones((n, n, N_CONTROLS))
    for x0 in range(n):
        c[x0, quadrant_goal(x0, spec), :] = 0.0
    return InitialStateCost(c)


def corner_states(spec: GridSpec) -> list[int]:
    return sorted({spec.state(r, c) for r in (0, spec.rows - 1) for c in (0, spec.cols - 1)})


def build_baseline_cost(spec: GridSpec) -> StateControlCost:
    """``kappa[x, u] = 1`` unless ``x`` is a corner cell."""
    if spec.rows % 2 or spec.cols % 2:
        raise UnsupportedGrid(f"quadrants need even dimensions, got {spec.rows}x{spec.cols}")
    k = np.ones((spec.n_states, N_CONTROLS))
    k[corner_states(spec), :] = 0.0
    return StateControlCost(k)


@dataclass(frozen=True, eq=False)
class GridExperiment:
    model: TabularModel
    isc_cost: InitialStateCost
    baseline_cost: StateControlCost
    goal_map: dict
    spec: GridSpec | None = None


def build_experiment(spec: GridSpec | None = None) -> GridExperiment:
    spec = spec or default_spec()
    return GridExperiment(
        model=build_grid_model(spec),
        isc_cost=build_isc_cost(spec),
        baseline_cost=build_baseline_cost(spec),
        goal_map={x0: quadrant_goal(x0, spec) for x0 in range(spec.n_states)},
        spec=spec,
    )


def render(spec: GridSpec) -> str:
    """ASCII drawing of the layout with state numbers."""
    lines = []
    for r in range(spec.rows):
        top = "+"
        mid = ""
        for c in range(spec.cols):
            x = spec.state(r, c)
            top += ("---" if spec.has_wall(x, "N") else "   ") + "+"
            mid += ("|" if spec.has_wall(x, "W") else " ") + f"{x:>3}"
        mid += "|" if spec.has_wall(spec.state(r, spec.cols - 1), "E") else " "
        lines += [top, mid]
    lines.append("+" + "---+" * spec.cols)
    return "\n".join(lines)
