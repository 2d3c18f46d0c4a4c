"""Multi-robot nuclear contamination clean-up with continuous observations.

Robots start at the base B, travel to the waste zone L, optionally
correct their position into one of the small contamination discs S,
collect, and return to B to deposit before collecting again.  Every
macro-action has a random duration and may fail; a failed macro-action
leaves the robot where it was.  After each macro-action the robot sees its
own (x, y) position corrupted by Gaussian noise.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..simcore import StepOutcome

NAV_BASE, NAV_WASTE, CORRECT, COLLECT = range(4)
MA_NAMES = ("navigate-to-base", "navigate-to-waste", "correct-position", "collect")


@dataclass
class NuclearConfig:
    workspace: tuple = ((0.0, 5.0), (0.0, 5.0))
    base_center: tuple = (0.75, 2.5)
    base_radius: float = 0.5
    # rectangles as ((xlo, xhi), (ylo, yhi))
    large_zones: tuple = (((2.2, 4.2), (0.5, 2.5)), ((2.2, 4.2), (2.5, 4.5)))
    small_centers: tuple = ((3.2, 1.5), (3.2, 3.5))
    small_radius: float = 0.4
    ma_failure_prob: float = 0.3
    durations: tuple = (1, 2, 3, 4)
    obs_noise_sigma: float = 0.25
    gamma: float = 0.9
    num_robots: int = 3
    reward_on: str = "collect"          # or "deposit"
    correct_requires_zone: bool = True  # correction only works from inside L

    def __post_init__(self):
        self.workspace = tuple(tuple(map(float, w)) for w in self.workspace)
        self.base_center = tuple(map(float, self.base_center))
        self.large_zones = tuple(tuple(tuple(map(float, s)) for s in r) for r in self.large_zones)
        self.small_centers = tuple(tuple(map(float, c)) for c in self.small_centers)
        self.durations = tuple(int(d) for d in self.durations)
        if not 0.0 <= self.ma_failure_prob <= 1.0:
            raise ValueError("ma_failure_prob must lie in [0, 1]")
        if not self.durations or min(self.durations) < 1:
            raise ValueError("durations must be positive integers")
        if self.reward_on not in ("collect", "deposit"):
            raise ValueError("reward_on must be 'collect' or 'deposit'")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if self.obs_noise_sigma < 0:
            raise ValueError("obs_noise_sigma must be non-negative")

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: _listify(v) for k, v in d.items()}


def _listify(v):
    if isinstance(v, (tuple, list)):
        return [_listify(x) for x in v]
    return v


@dataclass
class NuclearState:
    pos: np.ndarray        # (B, R, 2)
    carrying: np.ndarray   # (B, R)
    ma: np.ndarray         # (B, R)
    remaining: np.ndarray  # (B, R)
    success: np.ndarray    # (B, R)
    time: int = 0
    collected: np.ndarray = field(default=None)  # (B, R) successful collections


class NuclearDomain:
    num_mas_each = len(MA_NAMES)
    obs_dim = 2

    def __init__(self, config: NuclearConfig | None = None):
        self.config = config or NuclearConfig()
        c = self.config
        self.num_robots = c.num_robots
        self.num_mas = (self.num_mas_each,) * c.num_robots
        self.gamma = c.gamma
        self.obs_bounds = np.array(c.workspace, dtype=float)
        self._rects = np.array(c.large_zones, dtype=float)          # (nL, 2, 2)
        self._centers = np.array(c.small_centers, dtype=float)      # (nS, 2)
        areas = np.prod(self._rects[:, :, 1] - self._rects[:, :, 0], axis=1)
        self._rect_p = areas / areas.sum()
        self._durations = np.array(c.durations)

    # region helpers -----------------------------------------------------
    def in_base(self, pos):
        d = np.linalg.norm(pos - np.array(self.config.base_center), axis=-1)
        return d <= self.config.base_radius

    def in_large(self, pos):
        x, y = pos[..., 0, None], pos[..., 1, None]
        r = self._rects
        inside = (x >= r[:, 0, 0]) & (x <= r[:, 0, 1]) & (y >= r[:, 1, 0]) & (y <= r[:, 1, 1])
        return inside.any(axis=-1)

    def in_small(self, pos):
        d = np.linalg.norm(pos[..., None, :] - self._centers, axis=-1)
        return (d <= self.config.small_radius).any(axis=-1)

    def _disc(self, centers, radius, rng):
        n = len(centers)
        r = radius * np.sqrt(rng.random(n))
        th = 2 * np.pi * rng.random(n)
        return centers + np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)

    def sample_base(self, n, rng):
        c = np.broadcast_to(np.array(self.config.base_center), (n, 2))
        return self._disc(c, self.config.base_radius, rng)

    def sample_large(self, n, rng):
        k = rng.choice(len(self._rects), size=n, p=self._rect_p)
        lo = self._rects[k, :, 0]
        hi = self._rects[k, :, 1]
        return lo + (hi - lo) * rng.random((n, 2))

    def sample_small_near(self, pos, rng):
        d = np.linalg.norm(pos[:, None, :] - self._centers, axis=-1)
        return self._disc(self._centers[d.argmin(axis=1)], self.config.small_radius, rng)

    # contract -----------------------------------------------------------
    def initial_state(self, n_traj, rng):
        R = self.num_robots
        pos = self.sample_base(n_traj * R, rng).reshape(n_traj, R, 2)
        zeros = np.zeros((n_traj, R), dtype=np.int64)
        return NuclearState(pos, zeros.astype(bool), zeros.copy(), zeros.copy(),
                            zeros.astype(bool), 0, zeros.copy())

    def begin_ma(self, state, robot, idx, ma, rng, *, duration=None, success=None):
        """Start ``ma`` for ``robot`` in trajectories ``idx``.

        ``duration`` and ``success`` override the random draws (scripted tests).
        """
        ma = np.asarray(ma)
        if np.any((ma < 0) | (ma >= self.num_mas_each)):
            raise ValueError(f"unknown macro-action id in {ma}")
        n = len(idx)
        dur = self._durations[rng.integers(len(self._durations), size=n)]
        ok = rng.random(n) >= self.config.ma_failure_prob
        if duration is not None:
            dur = np.broadcast_to(duration, (n,))
        if success is not None:
            ok = np.broadcast_to(success, (n,))
        state.ma[idx, robot] = ma
        state.remaining[idx, robot] = dur
        state.success[idx, robot] = ok

    def observe(self, pos, rng):
        noisy = pos + rng.normal(0.0, self.config.obs_noise_sigma, size=pos.shape) \
            if self.config.obs_noise_sigma > 0 else pos.copy()
        return np.clip(noisy, self.obs_bounds[:, 0], self.obs_bounds[:, 1])

    def advance_one_timestep(self, state, rng):
        c = self.config
        state.remaining -= 1
        done = state.remaining == 0
        reward = np.zeros(state.pos.shape[0])
        if done.any():
            ok = done & state.success
            ma = state.ma
            m = ok & (ma == NAV_BASE)
            if m.any():
                state.pos[m] = self.sample_base(int(m.sum()), rng)
                dep = m & state.carrying
                if c.reward_on == "deposit":
                    reward += dep.sum(axis=1)
                state.carrying[dep] = False
            m = ok & (ma == NAV_WASTE)
            if m.any():
                state.pos[m] = self.sample_large(int(m.sum()), rng)
            m = ok & (ma == CORRECT)
            if c.correct_requires_zone:
                m &= self.in_large(state.pos)
            if m.any():
                state.pos[m] = self.sample_small_near(state.pos[m], rng)
            m = ok & (ma == COLLECT) & ~state.carrying & self.in_small(state.pos)
            if m.any():
                state.carrying[m] = True
                state.collected[m] += 1
                if c.reward_on == "collect":
                    reward += m.sum(axis=1)
        obs = np.zeros(state.pos.shape)
        if done.any():
            obs[done] = self.observe(state.pos[done], rng)
        state.time += 1
        return StepOutcome(done, obs, reward, state.time)
