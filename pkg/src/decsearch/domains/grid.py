"""A movable-obstacle grid benchmark for comparing acceleration schemes.

This is a compact stand-in for navigation among movable obstacles, not a
reproduction of any published NAMO instance.  Layout on a 6x6 grid:
robots start at cell (0, 0) and deliver to the goal (5, 5).  The short
route passes a doorway next to cell (3, 3) that is blocked, with
probability ``p_blocked``, by a heavy obstacle that only clears after
``pushes_to_clear`` successful pushes (from any robot).  While the doorway
is blocked, ``move-to-goal`` goes around it; every successful push shrinks
that detour by an equal share of ``detour_extra`` cells.  Each delivery
pays +1 joint reward and returns the robot to the start.  With the default
``slip_prob = 0`` movement is deterministic and the only action failures
are pushes that do not budge the obstacle.

Macro-actions:

* ``move-to-goal``: travel to the goal by the short route if the doorway
  is clear, otherwise by the remaining detour.  Every cell travelled slips with
  probability ``slip_prob``, costing one extra timestep.
* ``push-obstacle``: walk to the doorway (if not already there) and shove
  the obstacle; succeeds with probability ``push_success``.
* ``observe``: look at the doorway for one timestep.

After every macro-action the robot receives a single scalar in {0, 1}: a
noisy "doorway blocked" signal.  ``move-to-goal`` reports exactly what the
robot experienced; ``push-obstacle`` and ``observe`` report the current
doorway state with accuracies ``push_obs_accuracy`` and
``observe_accuracy``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..simcore import StepOutcome

MOVE, PUSH, OBSERVE = range(3)
MA_NAMES = ("move-to-goal", "push-obstacle", "observe")
AT_START, AT_DOOR = 0, 1


@dataclass
class GridBenchmarkConfig:
    size: int = 6
    horizon: int = 25
    num_robots: int = 2
    start: tuple = (0, 0)
    goal: tuple = (5, 5)
    door: tuple = (3, 3)
    detour_extra: int = 30       # extra cells on the detour while fully blocked
    cells_per_step: int = 2
    slip_prob: float = 0.0
    p_blocked: float = 1.0
    pushes_to_clear: int = 4
    push_success: float = 0.9
    push_obs_accuracy: float = 0.9
    observe_accuracy: float = 0.95
    gamma: float = 0.95

    def __post_init__(self):
        self.start = tuple(int(v) for v in self.start)
        self.goal = tuple(int(v) for v in self.goal)
        self.door = tuple(int(v) for v in self.door)
        if self.size < 1:
            raise ValueError("grid dimensions must be positive")
        for c in (self.start, self.goal, self.door):
            if not all(0 <= v < self.size for v in c):
                raise ValueError(f"cell {c} is off the grid")
        for name in ("slip_prob", "p_blocked", "push_success", "push_obs_accuracy",
                     "observe_accuracy"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.pushes_to_clear < 1 or self.cells_per_step < 1 or self.detour_extra < 0:
            raise ValueError("pushes_to_clear and cells_per_step must be >= 1")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


def _manhattan(a, b):
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


@dataclass
class GridState:
    pushes: np.ndarray      # (B,) successful pushes so far
    where: np.ndarray       # (B, R) AT_START or AT_DOOR
    ma: np.ndarray          # (B, R)
    remaining: np.ndarray   # (B, R)
    detoured: np.ndarray    # (B, R) the running move found the doorway blocked
    time: int = 0


class GridBenchmarkDomain:
    num_mas_each = len(MA_NAMES)
    obs_dim = 1

    def __init__(self, config: GridBenchmarkConfig | None = None):
        self.config = c = config or GridBenchmarkConfig()
        self.num_robots = c.num_robots
        self.num_mas = (self.num_mas_each,) * c.num_robots
        self.gamma = c.gamma
        self.horizon = c.horizon
        self.obs_bounds = np.array([[0.0, 1.0]])
        k = c.pushes_to_clear
        # detour cells still to go around, indexed by successful pushes
        self._extra = np.array([round(c.detour_extra * (1 - j / k)) for j in range(k + 1)])
        self._short = np.array([_manhattan(c.start, c.goal), _manhattan(c.door, c.goal)])
        self._to_door = np.array([_manhattan(c.start, c.door), 0])

    def _travel_time(self, cells, rng):
        slips = rng.binomial(cells, self.config.slip_prob)
        return np.maximum(1, -(-cells // self.config.cells_per_step)) + slips

    def initial_state(self, n_traj, rng):
        R = self.num_robots
        z = np.zeros((n_traj, R), dtype=np.int64)
        blocked = rng.random(n_traj) < self.config.p_blocked
        pushes = np.where(blocked, 0, self.config.pushes_to_clear)
        return GridState(pushes, z.copy(), z.copy(), z.copy(), z.astype(bool))

    def blocked(self, state) -> np.ndarray:
        return state.pushes < self.config.pushes_to_clear

    def begin_ma(self, state, robot, idx, ma, rng):
        ma = np.asarray(ma)
        if ma.size and (ma.min() < 0 or ma.max() >= self.num_mas_each):
            raise ValueError("unknown macro-action id")
        where = state.where[idx, robot]
        pushes = state.pushes[idx]
        move_cells = self._short[where] + self._extra[pushes]
        cells = np.where(ma == MOVE, move_cells, np.where(ma == PUSH, self._to_door[where], 0))
        dur = np.where(ma == OBSERVE, 1, self._travel_time(cells, rng))
        state.ma[idx, robot] = ma
        state.remaining[idx, robot] = dur
        state.detoured[idx, robot] = (ma == MOVE) & (pushes < self.config.pushes_to_clear)

    def advance_one_timestep(self, state, rng):
        c = self.config
        state.remaining -= 1
        done = state.remaining == 0
        reward = np.zeros(done.shape[0])
        obs = np.zeros(done.shape + (1,))
        if done.any():
            u = rng.random(done.shape + (2,))
            mv = done & (state.ma == MOVE)
            pu = done & (state.ma == PUSH)
            look = done & (state.ma == OBSERVE)
            reward = mv.sum(axis=1).astype(float)
            state.where[mv] = AT_START
            state.where[pu] = AT_DOOR
            shoves = (pu & (u[..., 0] < c.push_success)).sum(axis=1)
            state.pushes = np.minimum(state.pushes + shoves, c.pushes_to_clear)
            blocked = self.blocked(state)[:, None]
            acc = np.where(pu, c.push_obs_accuracy, c.observe_accuracy)
            seen = blocked ^ (u[..., 1] >= acc)
            obs[..., 0] = np.where(mv, state.detoured, np.where(pu | look, seen, 0))
        state.time += 1
        return StepOutcome(done, obs, reward, state.time)
