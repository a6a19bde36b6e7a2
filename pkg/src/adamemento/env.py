"""Deterministic gridworlds: Cliff Walking, Four Rooms and Dark Chamber.

Cells are ``(row, col)`` with row 0 at the top.  Observations are one-hot
position images flattened row-major, so the observation index of a cell is
``row * width + col``.
"""
from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError, UsageError, ValidationError

Cell = tuple[int, int]


class Action(enum.IntEnum):
    UP = 0
    DOWN = 1
    LEFT = 2
    RIGHT = 3


N_ACTIONS = len(Action)
ENV_NAMES = ("cliff_walking", "four_rooms", "dark_chamber")


@dataclass(frozen=True)
class GridSpec:
    name: str
    width: int
    height: int
    walls: frozenset = frozenset()
    cliffs: frozenset = frozenset()
    start: Cell = (0, 0)
    goal: Cell | None = None
    step_reward: float = 0.0
    goal_reward: float = 0.0
    cliff_reward: float = 0.0
    max_steps: int = 500

    def __post_init__(self):
        object.__setattr__(self, "walls", frozenset(tuple(c) for c in self.walls))
        object.__setattr__(self, "cliffs", frozenset(tuple(c) for c in self.cliffs))
        object.__setattr__(self, "start", tuple(self.start))
        if self.goal is not None:
            object.__setattr__(self, "goal", tuple(self.goal))
        self.validate()

    def validate(self):
        if self.width <= 0 or self.height <= 0:
            raise ValidationError(f"grid must be non-empty, got {self.height}x{self.width}")
        if self.max_steps <= 0:
            raise ValidationError("max_steps must be positive")
        for cell in (*self.walls, *self.cliffs, self.start, *([self.goal] if self.goal else [])):
            if not self.in_bounds(cell):
                raise ValidationError(f"cell {cell} outside {self.height}x{self.width} grid")
        hazards = self.walls | self.cliffs
        if self.start in hazards:
            raise ValidationError(f"start {self.start} lies on a wall or cliff")
        if self.goal is not None and self.goal in hazards:
            raise ValidationError(f"goal {self.goal} lies on a wall or cliff")

    def in_bounds(self, cell) -> bool:
        r, c = cell
        return 0 <= r < self.height and 0 <= c < self.width

    @property
    def n_cells(self) -> int:
        return self.width * self.height

    def index(self, cell) -> int:
        return cell[0] * self.width + cell[1]

    def cell(self, index: int) -> Cell:
        return divmod(int(index), self.width)

    def masks(self):
        """Boolean (blocked, cliff, goal) grids, used by the vectorized stepper."""
        blocked = np.zeros((self.height, self.width), dtype=np.bool_)
        cliff = np.zeros_like(blocked)
        goal = np.zeros_like(blocked)
        for r, c in self.walls:
            blocked[r, c] = True
        for r, c in self.cliffs:
            cliff[r, c] = True
        if self.goal is not None:
            goal[self.goal] = True
        return blocked, cliff, goal


def _cliff_walking(width=12, height=4):
    bottom = height - 1
    return dict(
        width=width, height=height,
        cliffs=frozenset((bottom, c) for c in range(1, width - 1)),
        start=(bottom, 0), goal=(bottom, width - 1),
        step_reward=-1.0, goal_reward=0.0, cliff_reward=-100.0, max_steps=200,
    )


def four_rooms_walls(width, height):
    """Cross-shaped interior wall with a single doorway in the vertical bar.

    The horizontal bar stops one cell short of each side wall, so the two
    left rooms and the two right rooms are connected, while left and right
    halves meet only at the doorway cell.
    """
    mid_r, mid_c = height // 2, width // 2
    door = (mid_r // 2, mid_c)
    walls = {(r, mid_c) for r in range(height)}
    walls |= {(mid_r, c) for c in range(1, width - 1)}
    walls.discard(door)
    return frozenset(walls), door


def _four_rooms(width=13, height=13):
    walls, _ = four_rooms_walls(width, height)
    return dict(
        width=width, height=height, walls=walls,
        start=(0, width - 1), goal=(height - 1, 0),
        step_reward=0.0, goal_reward=1.0, cliff_reward=0.0, max_steps=500,
    )


def _dark_chamber(width=50, height=50):
    return dict(
        width=width, height=height, start=(height - 1, 0), goal=None,
        step_reward=0.0, goal_reward=0.0, cliff_reward=0.0, max_steps=500,
    )


_BUILDERS = {
    "cliff_walking": _cliff_walking,
    "four_rooms": _four_rooms,
    "dark_chamber": _dark_chamber,
}
_LAYOUT_KEYS = ("walls", "cliffs", "start", "goal")


def make_env(name: str, overrides: dict | None = None) -> GridSpec:
    """Canonical spec for ``name`` with ``overrides`` applied.

    Overriding ``width``/``height`` rebuilds the layout at the new size;
    explicitly overridden layout fields (walls, start, ...) are kept as given.
    """
    if name not in _BUILDERS:
        raise ConfigError(f"unknown environment {name!r}; expected one of {ENV_NAMES}", key="env.name")
    overrides = dict(overrides or {})
    unknown = set(overrides) - {f.name for f in dataclasses.fields(GridSpec)}
    if unknown:
        raise ConfigError(f"unknown GridSpec field(s): {sorted(unknown)}")
    size = {k: overrides[k] for k in ("width", "height") if k in overrides}
    try:
        base = _BUILDERS[name](**size)
    except (IndexError, KeyError) as exc:  # pragma: no cover - degenerate sizes
        raise ValidationError(f"cannot build {name} at size {size}") from exc
    base.update(overrides)
    base["name"] = name
    return GridSpec(**base)


@dataclass(frozen=True)
class EnvState:
    position: Cell
    steps_taken: int
    visit_counts: np.ndarray = field(repr=False)
    done: bool = False
    fall_count: int = 0

    def __eq__(self, other):
        if not isinstance(other, EnvState):
            return NotImplemented
        return (self.position == other.position and self.steps_taken == other.steps_taken
                and self.done == other.done and self.fall_count == other.fall_count
                and np.array_equal(self.visit_counts, other.visit_counts))


def encode_observation(spec: GridSpec, position) -> np.ndarray:
    if not spec.in_bounds(position):
        raise ValidationError(f"position {position} outside {spec.height}x{spec.width} grid")
    obs = np.zeros(spec.n_cells)
    obs[spec.index(position)] = 1.0
    return obs


def encode_indices(n_cells: int, indices) -> np.ndarray:
    """Batch of one-hot observations for flat cell indices."""
    idx = np.asarray(indices, dtype=np.int64)
    out = np.zeros((idx.shape[0], n_cells))
    out[np.arange(idx.shape[0]), idx] = 1.0
    return out


def reset(spec: GridSpec, seed: int = 0, fall_count: int = 0):
    # Every layout has a fixed start; the seed is accepted for API symmetry
    # with stochastic environments and has no effect.
    visits = np.zeros((spec.height, spec.width), dtype=np.int64)
    visits[spec.start] = 1
    state = EnvState(position=spec.start, steps_taken=0, visit_counts=visits,
                     done=False, fall_count=fall_count)
    return state, encode_observation(spec, spec.start)


def _move(spec: GridSpec, position, action) -> Cell:
    a = int(action)
    r = position[0] + int(kernels.MOVES_DR[a])
    c = position[1] + int(kernels.MOVES_DC[a])
    if not spec.in_bounds((r, c)) or (r, c) in spec.walls:
        return position
    return (r, c)


def step(state: EnvState, spec: GridSpec, action):
    """Advance one step.

    Returns ``(state, obs, reward, terminated, truncated, fell)``.  The input
    state is not modified.
    """
    if state.done:
        raise UsageError("step() called on a finished episode; call reset()")
    if not 0 <= int(action) < N_ACTIONS:
        raise ValidationError(f"invalid action {action!r}")
    pos = _move(spec, state.position, action)
    steps = state.steps_taken + 1
    fell = pos in spec.cliffs
    reached = spec.goal is not None and pos == spec.goal
    if fell:
        reward = spec.cliff_reward
    elif reached:
        reward = spec.goal_reward
    else:
        reward = spec.step_reward
    terminated = fell or reached
    truncated = not terminated and steps >= spec.max_steps
    visits = state.visit_counts.copy()
    visits[pos] += 1
    new = EnvState(position=pos, steps_taken=steps, visit_counts=visits,
                   done=terminated or truncated,
                   fall_count=state.fall_count + int(fell))
    return new, encode_observation(spec, pos), float(reward), terminated, truncated, fell


def coverage(state_or_counts):
    """``(distinct visited cells, copy of the visit-count grid)``."""
    counts = state_or_counts.visit_counts if isinstance(state_or_counts, EnvState) else state_or_counts
    heat = np.array(counts, copy=True)
    return int(np.count_nonzero(heat)), heat


class VecGridEnv:
    """``n`` copies of one gridworld stepped together, with auto-reset.

    Also accumulates a run-wide visit grid over every env and episode, used
    for the coverage metric.
    """

    def __init__(self, spec: GridSpec, n: int):
        self.spec = spec
        self.n = n
        self._blocked, self._cliff, self._goal = spec.masks()
        self.rows = np.full(n, spec.start[0], dtype=np.int64)
        self.cols = np.full(n, spec.start[1], dtype=np.int64)
        self.steps = np.zeros(n, dtype=np.int64)
        self.visits = np.zeros((spec.height, spec.width), dtype=np.int64)
        self.visits[spec.start] += n
        self.fall_count = 0

    def indices(self) -> np.ndarray:
        return self.rows * self.spec.width + self.cols

    def observations(self) -> np.ndarray:
        return encode_indices(self.spec.n_cells, self.indices())

    def step(self, actions):
        """Step every env; finished envs are reset to the start cell.

        Returns a dict with the pre-reset arrival ``next_index`` along with
        ``reward``, ``terminated``, ``truncated``, ``fell`` and ``length``.
        """
        sp = self.spec
        r, c, steps, reward, term, trunc, fell = kernels.grid_step(
            self.rows, self.cols, np.asarray(actions, dtype=np.int64), self.steps,
            self._blocked, self._cliff, self._goal,
            sp.max_steps, float(sp.step_reward), float(sp.goal_reward), float(sp.cliff_reward))
        np.add.at(self.visits, (r, c), 1)
        self.fall_count += int(fell.sum())
        out = dict(next_index=r * sp.width + c, reward=reward, terminated=term,
                   truncated=trunc, fell=fell, length=steps.copy())
        done = term | trunc
        r[done] = sp.start[0]
        c[done] = sp.start[1]
        steps[done] = 0
        if done.any():
            np.add.at(self.visits, (r[done], c[done]), 1)
        self.rows, self.cols, self.steps = r, c, steps
        return out

    def coverage(self) -> int:
        return int(np.count_nonzero(self.visits))
