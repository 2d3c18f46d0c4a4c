"""Generative Dec-POSMDP execution and Monte Carlo policy evaluation.

A batch of independent trajectories is simulated in lockstep: all
trajectories share the global clock, while each robot in each trajectory
re-decides only when its own macro-action completes.

Domains implement the :class:`DomainModel` protocol on batched state and
controllers implement :class:`Controller` on arrays of node indices.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Protocol, Sequence

import numpy as np


class DomainContractError(RuntimeError):
    """A domain emitted an event that violates its declared contract."""


@dataclass
class StepOutcome:
    """What happened during one global timestep, for every trajectory.

    ``done[b, i]`` marks robots whose macro-action completed; their
    observations are ``obs[b, i]``.  ``reward[b]`` is the joint reward
    earned in trajectory ``b``, discounted with ``gamma ** reward_time``.
    """

    done: np.ndarray
    obs: np.ndarray
    reward: np.ndarray
    reward_time: int


class DomainModel(Protocol):
    num_robots: int
    num_mas: Sequence[int]
    obs_dim: int
    obs_bounds: np.ndarray  # (obs_dim, 2) rows of [lo, hi]
    gamma: float

    def initial_state(self, n_traj: int, rng: np.random.Generator): ...

    def begin_ma(self, state, robot: int, idx: np.ndarray, ma: np.ndarray,
                 rng: np.random.Generator) -> None: ...

    def advance_one_timestep(self, state, rng: np.random.Generator) -> StepOutcome: ...


class Controller(Protocol):
    """Per-robot controller.  An optional ``initial_nodes(n_traj)`` method
    overrides the default start node 0."""

    n_nodes: int

    def select_ma(self, nodes: np.ndarray, rng: np.random.Generator) -> np.ndarray: ...

    def transition(self, nodes: np.ndarray, obs: np.ndarray,
                   rng: np.random.Generator) -> np.ndarray: ...


class Epoch(NamedTuple):
    node: int
    ma: int
    obs: np.ndarray
    next_node: int
    time: int


@dataclass
class TrajectoryRecord:
    epochs: list[list[Epoch]] = field(default_factory=list)
    discounted_return: float = 0.0


def _check_outcome(domain, out: StepOutcome, n_traj: int) -> None:
    if out.done.shape != (n_traj, domain.num_robots):
        raise DomainContractError(f"done has shape {out.done.shape}")
    obs = out.obs[out.done]
    if obs.size == 0:
        return
    # NaN fails both comparisons
    lo_ok = obs.min(axis=0) >= domain.obs_bounds[:, 0]
    hi_ok = obs.max(axis=0) <= domain.obs_bounds[:, 1]
    if not (lo_ok.all() and hi_ok.all()) or np.isnan(obs).any():
        raise DomainContractError("observation outside the declared bounds")


def simulate(domain: DomainModel, policy: Sequence[Controller], n_traj: int,
             horizon: int, rng: np.random.Generator, record: bool = False):
    """Run ``n_traj`` rollouts of ``policy`` for ``horizon`` timesteps.

    Returns the vector of discounted returns, plus the list of
    :class:`TrajectoryRecord` when ``record`` is set.
    """
    if horizon < 0:
        raise ValueError("horizon must be non-negative")
    if len(policy) != domain.num_robots:
        raise ValueError("policy must supply one controller per robot")
    n_robots = domain.num_robots
    state = domain.initial_state(n_traj, rng)
    nodes = np.zeros((n_traj, n_robots), dtype=np.int64)
    mas = np.zeros((n_traj, n_robots), dtype=np.int64)
    returns = np.zeros(n_traj)
    everyone = np.arange(n_traj)
    for i in range(n_robots):
        start = getattr(policy[i], "initial_nodes", None)
        if start is not None:
            nodes[:, i] = start(n_traj)
        mas[:, i] = policy[i].select_ma(nodes[:, i], rng)
        domain.begin_ma(state, i, everyone, mas[:, i], rng)
    epochs = [[[] for _ in range(n_robots)] for _ in range(n_traj)] if record else None

    for _ in range(horizon):
        out = domain.advance_one_timestep(state, rng)
        _check_outcome(domain, out, n_traj)
        if np.any(out.reward):
            returns += domain.gamma ** out.reward_time * out.reward
        for i in range(n_robots):
            idx = np.flatnonzero(out.done[:, i])
            if idx.size == 0:
                continue
            obs = out.obs[idx, i]
            nxt = policy[i].transition(nodes[idx, i], obs, rng)
            if record:
                t = int(state.time)
                for j, b in enumerate(idx):
                    epochs[b][i].append(Epoch(int(nodes[b, i]), int(mas[b, i]),
                                              obs[j].copy(), int(nxt[j]), t))
            nodes[idx, i] = nxt
            if state.time < horizon:
                ma = policy[i].select_ma(nxt, rng)
                mas[idx, i] = ma
                domain.begin_ma(state, i, idx, ma, rng)

    if not record:
        return returns
    records = [TrajectoryRecord(epochs[b], float(returns[b])) for b in range(n_traj)]
    return returns, records


def rollout(domain: DomainModel, policy: Sequence[Controller], horizon: int,
            seed) -> TrajectoryRecord:
    """Simulate one trajectory and return its full record."""
    rng = np.random.default_rng(seed)
    _, records = simulate(domain, policy, 1, horizon, rng, record=True)
    return records[0]


def summarize(values) -> tuple[float, float]:
    """Mean and standard error of a sample of returns."""
    values = np.asarray(values, dtype=float)
    if values.size < 2 or np.all(values == values[0]):
        return float(values.mean()), 0.0
    return float(values.mean()), float(values.std(ddof=1) / np.sqrt(values.size))


def evaluate(domain: DomainModel, policy: Sequence[Controller], n_traj: int,
             horizon: int, seed) -> tuple[float, float]:
    """Monte Carlo estimate of the joint value of ``policy``."""
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return summarize(simulate(domain, policy, n_traj, horizon, rng))
