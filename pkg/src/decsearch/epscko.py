"""Cross-entropy policy search over stochastic kernel-based FSAs.

Each iteration rolls out the current joint stochastic policy ``n_samples``
times, keeps the best ``n_elite`` trajectories that clear the previous
worst-elite value, and uses them twice: their MA choices refit the per-node
MA distributions, and their (node, observation, next node) triples are
pushed as one bundle per robot into that robot's FIFO kernel queue, from
which every node's transition function is retrained.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import distributions as dist
from .fsa import value_converged
from .simcore import evaluate, simulate
from .skfsa import (FifoKernelQueue, ObservationBundle, SkFsaPolicy, approx_transition_entropy,
                    default_sigma, inject_transition_entropy, train_weighted_klr)

log = logging.getLogger(__name__)


@dataclass
class EpsckoConfig:
    n_nodes: int = 6
    n_iter: int = 100
    n_samples: int = 50
    n_elite: int = 5
    n_klr: int = 10
    alpha: float = 0.1
    alpha_ei: float = 0.03
    sigma: float | None = None       # None: a tenth of the observation box diagonal
    lam: float = 1e-3
    horizon: int = 40
    n_eval_traj: int = 1000
    window: int = 10
    tol: float = 1e-6
    tau_h: float = 0.1

    def __post_init__(self):
        if not 1 <= self.n_elite <= self.n_samples:
            raise ValueError("need 1 <= n_elite <= n_samples")
        if self.n_klr < 1:
            raise ValueError("n_klr must be >= 1")
        if not 0.0 <= self.alpha_ei < 1.0:
            raise ValueError("alpha_ei must lie in [0, 1); 0 disables injection")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if self.sigma is not None and self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.n_nodes < 1 or self.n_iter < 0 or self.n_eval_traj < 1 or self.lam < 0:
            raise ValueError("invalid search size or regulariser")


@dataclass
class TraceRow:
    iteration: int
    best_value: float
    worst_elite: float
    injected: bool
    converged: bool
    n_admitted: int
    mean_return: float          # average return of this iteration's rollouts
    ma_entropy: np.ndarray      # (robots, nodes), normalised by ln(#MAs)
    trans_entropy: np.ndarray   # (robots, nodes), normalised by ln(N_n)


@dataclass
class SearchTrace:
    rows: list = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    @property
    def best_values(self) -> list:
        return [r.best_value for r in self.rows]


@dataclass
class EpsckoResult:
    best_policy: list
    best_value: float        # best single-rollout return seen during search
    final_value: float       # mean over n_eval_traj fresh rollouts of best_policy
    final_stderr: float
    trace: SearchTrace


def _ratio(h, n):
    return h / math.log(n) if n > 1 else 1.0


def _entropies(joint):
    ma = np.array([[_ratio(float(dist.entropy(p.ma_probs[q])), p.n_mas) for q in range(p.n_nodes)]
                   for p in joint])
    tr = np.array([[_ratio(approx_transition_entropy(fn), p.n_nodes) for fn in p.transitions]
                    for p in joint])
    return ma, tr


def try_inject(policy, config: EpsckoConfig) -> bool:
    """Push every low-entropy distribution of ``policy`` towards uniform.

    ``policy`` is one :class:`SkFsaPolicy` or a list of them; it is updated
    in place.  Returns whether anything was injected.
    """
    joint = policy if isinstance(policy, (list, tuple)) else [policy]
    a = config.alpha_ei
    if a <= 0:
        return False
    fired = False
    for p in joint:
        if p.n_mas > 1:
            low = np.atleast_1d(dist.normalized_entropy(p.ma_probs)) < config.tau_h
            if low.any():
                p.ma_probs[low] = (1 - a) * p.ma_probs[low] + a / p.n_mas
                fired = True
        if p.n_nodes > 1:
            for q, fn in enumerate(p.transitions):
                if approx_transition_entropy(fn) / math.log(p.n_nodes) < config.tau_h:
                    p.transitions[q] = inject_transition_entropy(fn, a)
                    fired = True
    return fired


def _bundle(records, robot, k):
    nodes, obs, nxt = [], [], []
    for rec in records:
        for e in rec.epochs[robot]:
            nodes.append(e.node)
            obs.append(e.obs)
            nxt.append(e.next_node)
    obs = np.array(obs).reshape(len(nodes), -1) if nodes else np.empty((0, 0))
    return ObservationBundle(nodes, obs, nxt, k)


def _ma_update(policy, records, robot, alpha):
    counts = np.zeros_like(policy.ma_probs)
    for rec in records:
        for e in rec.epochs[robot]:
            counts[e.node, e.ma] += 1
    seen = counts.sum(axis=1) > 0
    # nodes no elite visited keep their distribution
    if seen.any():
        new = dist.mle_categorical(counts[seen])
        policy.ma_probs[seen] = dist.smooth_update(new, policy.ma_probs[seen], alpha)


def epscko_search(domain, config: EpsckoConfig, seed, callback=None) -> EpsckoResult:
    cfg = config
    sigma = cfg.sigma if cfg.sigma is not None else default_sigma(domain.obs_bounds)
    search_ss, final_ss = np.random.SeedSequence(seed).spawn(2)
    rng = np.random.default_rng(search_ss)
    n_robots = domain.num_robots
    policy = [SkFsaPolicy.uniform(cfg.n_nodes, domain.num_mas[i], sigma) for i in range(n_robots)]
    queues = [FifoKernelQueue(cfg.n_klr) for _ in range(n_robots)]

    best_value, best_policy = -math.inf, [p.copy() for p in policy]
    worst_elite = -math.inf
    best_hist = []
    trace = SearchTrace()

    for k in range(cfg.n_iter):
        snapshot = [p.copy() for p in policy]
        returns, records = simulate(domain, policy, cfg.n_samples, cfg.horizon, rng, record=True)
        top = int(np.argmax(returns))
        if returns[top] >= best_value:
            # ties go to the most recent policy that reached the best value
            best_value, best_policy = float(returns[top]), snapshot
        passing = np.flatnonzero(returns >= worst_elite)
        # stable sort keeps sample order among equal returns
        order = passing[np.argsort(-returns[passing], kind="stable")]
        elite = order[:cfg.n_elite]

        best_hist.append(best_value)
        converged = value_converged(best_hist, cfg.window, cfg.tol)
        injected = False
        if elite.size:
            worst_elite = float(returns[elite].min())
            elite_recs = [records[b] for b in elite]
            for i, p in enumerate(policy):
                queues[i].push(_bundle(elite_recs, i, k))
                _ma_update(p, elite_recs, i, cfg.alpha)
                p.transitions = [train_weighted_klr(queues[i], q, p.n_nodes, cfg.alpha, sigma,
                                                    cfg.lam, previous=p.transitions[q])
                                 for q in range(p.n_nodes)]
        if converged:
            injected = try_inject(policy, cfg)
            if injected:
                worst_elite = -math.inf

        ma_h, tr_h = _entropies(policy)
        row = TraceRow(k, best_value, worst_elite, injected, converged, int(passing.size),
                       float(returns.mean()), ma_h, tr_h)
        trace.rows.append(row)
        if callback is not None:
            callback(row)
        log.debug("epscko k=%d best=%.4f worst_elite=%.4f injected=%s", k, best_value,
                  worst_elite, injected)

    final, stderr = evaluate(domain, best_policy, cfg.n_eval_traj, cfg.horizon, final_ss)
    return EpsckoResult(best_policy, best_value, final, stderr, trace)
