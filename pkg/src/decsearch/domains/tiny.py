"""A three-state, two-action domain small enough to solve by enumeration.

The hidden state is 0, 1 or a neutral state 2.  Taking the action that
matches a non-neutral state pays 1; the wrong action sends the system
back to neutral, from which it moves to 0 or 1 at random.  After every
step the robot sees a noisy bit about the new state.  Every macro-action
lasts exactly one timestep.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..simcore import StepOutcome


@dataclass
class TinyState:
    x: np.ndarray          # (B,) hidden state
    ma: np.ndarray         # (B, 1)
    remaining: np.ndarray  # (B, 1)
    time: int = 0


class TinyOracleDomain:
    num_robots = 1
    num_mas = (2,)
    obs_dim = 1
    horizon = 6

    def __init__(self, obs_accuracy=0.85, stay_prob=0.8, reward_scale=1.0,
                 gamma=0.9, obs_noise=None):
        self.obs_accuracy = obs_accuracy
        self.stay_prob = stay_prob
        self.reward_scale = reward_scale
        self.gamma = gamma
        # None: emit exactly 0.0/1.0.  A number: emit the bin centre of a
        # two-bin grid on [0, 1] plus Gaussian noise of that std.
        self.obs_noise = obs_noise
        self.obs_bounds = np.array([[0.0, 1.0]])
        self._R = self.reward_table()
        self._Tcdf = np.cumsum(self.transition_table(), axis=-1)
        self._O = self.observation_table()

    # reward[x, a] and next-state distribution T[x, a, x']
    def reward_table(self) -> np.ndarray:
        return self.reward_scale * np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])

    def transition_table(self) -> np.ndarray:
        s, f = self.stay_prob, 1.0 - self.stay_prob
        T = np.zeros((3, 2, 3))
        T[0, 0] = [s, f, 0.0]
        T[1, 1] = [f, s, 0.0]
        T[0, 1] = T[1, 0] = [0.0, 0.0, 1.0]
        T[2, :] = [0.5, 0.5, 0.0]
        return T

    def observation_table(self) -> np.ndarray:
        """P(bit | x') as a (3, 2) table."""
        a = self.obs_accuracy
        return np.array([[a, 1 - a], [1 - a, a], [0.5, 0.5]])

    def emit(self, bits: np.ndarray, rng) -> np.ndarray:
        if self.obs_noise is None:
            return bits.astype(float)
        o = 0.25 + 0.5 * bits + rng.normal(0.0, self.obs_noise, size=bits.shape)
        return np.clip(o, 0.0, 1.0)

    def initial_state(self, n_traj, rng):
        return TinyState(np.full(n_traj, 2), np.zeros((n_traj, 1), dtype=np.int64),
                         np.zeros((n_traj, 1), dtype=np.int64))

    def begin_ma(self, state, robot, idx, ma, rng):
        ma = np.asarray(ma)
        if ma.size and (ma.min() < 0 or ma.max() > 1):
            raise ValueError("unknown macro-action")
        state.ma[idx, robot] = ma
        state.remaining[idx, robot] = 1

    def advance_one_timestep(self, state, rng):
        n = state.x.size
        a = state.ma[:, 0]
        reward = self._R[state.x, a]
        cdf = self._Tcdf[state.x, a]
        x_next = np.minimum((cdf <= rng.random(n)[:, None]).sum(axis=-1), 2)
        p_one = self._O[x_next, 1]
        bits = (rng.random(n) < p_one).astype(np.int64)
        state.remaining[:, 0] -= 1
        done = state.remaining == 0
        obs = self.emit(bits, rng)[:, None, None]
        t = state.time
        state.x = x_next
        state.time += 1
        return StepOutcome(done, obs, reward, t)

    @property
    def has_exact_value(self) -> bool:
        return self.obs_noise is None

    def exact_value(self, controller, horizon=None) -> float:
        """Expected discounted return of a tabular controller, by forward propagation.

        ``controller`` must expose ``n_nodes``, ``ma_distribution(node)`` and
        ``transition_distribution(node, obs)``.  Only valid for the
        discrete-observation variant.
        """
        if self.obs_noise is not None:
            raise ValueError("exact evaluation needs discrete observations")
        horizon = self.horizon if horizon is None else horizon
        nn = controller.n_nodes
        R, T, O = self.reward_table(), self.transition_table(), self.observation_table()
        pi = np.array([controller.ma_distribution(q) for q in range(nn)])
        delta = np.array([[controller.transition_distribution(q, np.array([float(o)]))
                           for o in (0, 1)] for q in range(nn)])  # (q, bit, q')
        P = np.zeros((3, nn))
        P[2, 0] = 1.0
        value = 0.0
        for t in range(horizon):
            value += self.gamma ** t * np.einsum("xq,qa,xa->", P, pi, R)
            # P'(x', q') = sum P(x,q) pi(a|q) T(x,a,x') O(x',o) delta(q,o,q')
            P = np.einsum("xq,qa,xay,yo,qor->yr", P, pi, T, O, delta)
        return float(value)
