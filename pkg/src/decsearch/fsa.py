"""Discrete-observation finite state automaton policies and G-DICE search."""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import distributions as dist
from .distributions import AccelerationScheme
from .simcore import evaluate, simulate

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Grid:
    """Uniform discretisation of an observation box into ``d`` bins per axis."""

    bounds: np.ndarray
    d: int

    def __post_init__(self):
        b = np.asarray(self.bounds, dtype=float).reshape(-1, 2)
        if np.any(b[:, 1] <= b[:, 0]):
            raise ValueError("grid bounds must have hi > lo")
        if int(self.d) < 1:
            raise ValueError("discretisation factor must be >= 1")
        object.__setattr__(self, "bounds", b)
        object.__setattr__(self, "d", int(self.d))

    @property
    def obs_dim(self) -> int:
        return self.bounds.shape[0]

    @property
    def n_bins(self) -> int:
        return self.d ** self.obs_dim

    def cells(self, obs) -> np.ndarray:
        """Per-dimension bin indices, shape (..., obs_dim)."""
        obs = np.asarray(obs, dtype=float)
        if np.isnan(obs).any():
            raise ValueError("cannot discretise a NaN observation")
        return self._cells(obs)

    def _cells(self, obs):
        lo = self.bounds[:, 0]
        scale = self.d / (self.bounds[:, 1] - lo)
        cell = ((obs - lo) * scale).astype(np.int64)
        # truncation equals floor for obs >= lo; anything below lo clamps to 0
        cell[obs < lo] = 0
        np.minimum(cell, self.d - 1, out=cell)
        return cell

    def index(self, obs) -> np.ndarray:
        """Row-major flat bin index of each observation (last axis = obs_dim)."""
        return self._flat(self.cells(obs))

    def _flat(self, cell):
        if self.obs_dim == 1:
            return cell[..., 0]
        flat = cell[..., 0]
        for j in range(1, self.obs_dim):
            flat = flat * self.d + cell[..., j]
        return flat


def discretize(obs, grid: Grid) -> int:
    return int(grid.index(np.asarray(obs, dtype=float)))


class FsaPolicy:
    """One robot's controller: an MA distribution per node and a next-node
    distribution per (node, observation bin).

    When every row is a point mass the controller is deterministic and
    sampling consumes no random numbers.
    """

    def __init__(self, ma_probs, trans_probs, grid: Grid):
        self.ma_probs = np.asarray(ma_probs, dtype=float)
        self.trans_probs = np.asarray(trans_probs, dtype=float)
        self.grid = grid
        nn = self.ma_probs.shape[0]
        if self.trans_probs.shape != (nn, grid.n_bins, nn):
            raise ValueError(f"transition table must have shape {(nn, grid.n_bins, nn)}, "
                             f"got {self.trans_probs.shape}")
        dist.check_simplex(self.ma_probs)
        dist.check_simplex(self.trans_probs)
        self._ma_det = self._trans_det = None
        if np.all(self.ma_probs.max(axis=-1) == 1.0) and np.all(self.trans_probs.max(axis=-1) == 1.0):
            self._ma_det = self.ma_probs.argmax(axis=-1)
            self._trans_det = self.trans_probs.argmax(axis=-1)

    @classmethod
    def uniform(cls, n_nodes: int, n_mas: int, grid: Grid) -> "FsaPolicy":
        return cls(dist.uniform((n_nodes, n_mas)), dist.uniform((n_nodes, grid.n_bins, n_nodes)), grid)

    @classmethod
    def deterministic(cls, ma_table, trans_table, grid: Grid, n_mas: int) -> "FsaPolicy":
        ma_table = np.asarray(ma_table)
        trans_table = np.asarray(trans_table).reshape(len(ma_table), grid.n_bins)
        nn = len(ma_table)
        return cls(np.eye(n_mas)[ma_table], np.eye(nn)[trans_table], grid)

    @property
    def n_nodes(self) -> int:
        return self.ma_probs.shape[0]

    @property
    def n_mas(self) -> int:
        return self.ma_probs.shape[1]

    @property
    def is_deterministic(self) -> bool:
        return self._ma_det is not None

    def select_ma(self, nodes, rng):
        if self._ma_det is not None:
            return self._ma_det[nodes]
        return dist.sample_rows(self.ma_probs, nodes, rng)

    def transition(self, nodes, obs, rng):
        # observations reaching here were bounds/NaN-checked by the simulator
        bins = self.grid._flat(self.grid._cells(obs))
        if self._trans_det is not None:
            return self._trans_det[nodes, bins]
        flat = self.trans_probs.reshape(-1, self.n_nodes)
        return dist.sample_rows(flat, nodes * self.grid.n_bins + bins, rng)

    def ma_distribution(self, node: int) -> np.ndarray:
        return self.ma_probs[node]

    def transition_distribution(self, node: int, obs) -> np.ndarray:
        return self.trans_probs[node, discretize(obs, self.grid)]


class StackedFsa:
    """Many deterministic controllers for one robot, evaluated side by side.

    Trajectory block ``s`` (``n_per`` consecutive trajectories) runs
    controller ``s``; its nodes are stored with an offset of ``s * n_nodes``
    so a single batched simulation can evaluate every candidate at once.
    """

    def __init__(self, ma_tables, trans_tables, grid: Grid, n_per: int):
        ma_tables = np.asarray(ma_tables)
        trans_tables = np.asarray(trans_tables)
        n_cand, nn = ma_tables.shape
        self.grid = grid
        self.n_nodes = n_cand * nn
        self.n_per = n_per
        self._nn = nn
        offset = (np.arange(n_cand) * nn)[:, None, None]
        self._ma = ma_tables.reshape(-1)
        self._next = (trans_tables.reshape(n_cand, nn, grid.n_bins) + offset).reshape(-1, grid.n_bins)

    def initial_nodes(self, n_traj):
        return (np.arange(n_traj) // self.n_per) * self._nn

    def select_ma(self, nodes, rng):
        return self._ma[nodes]

    def transition(self, nodes, obs, rng):
        return self._next[nodes, self.grid._flat(self.grid._cells(obs))]


def evaluate_many(domain, tables, grid: Grid, n_traj: int, horizon: int, rng) -> np.ndarray:
    """Mean return of each of several deterministic joint controllers.

    ``tables[i]`` is a pair of stacked arrays for robot ``i``: MA choices of
    shape (S, N_n) and next-node choices of shape (S, N_n, n_bins).
    """
    n_cand = len(tables[0][0])
    joint = [StackedFsa(m, t, grid, n_traj) for m, t in tables]
    returns = simulate(domain, joint, n_cand * n_traj, horizon, rng)
    return returns.reshape(n_cand, n_traj).mean(axis=1)


def _check_node(policy, node):
    if not 0 <= node < policy.n_nodes:
        raise IndexError(f"node {node} out of range for {policy.n_nodes} nodes")


def fsa_act(policy: FsaPolicy, node: int, rng) -> int:
    _check_node(policy, node)
    return int(policy.select_ma(np.array([node]), rng)[0])


def fsa_transition(policy: FsaPolicy, node: int, obs, rng) -> int:
    _check_node(policy, node)
    obs = np.asarray(obs, dtype=float).reshape(1, -1)
    policy.grid.cells(obs)
    return int(policy.transition(np.array([node]), obs, rng)[0])


def value_converged(history, window: int, tol: float) -> bool:
    """True once the last ``window`` values span at most ``tol`` (relative)."""
    if window < 1 or len(history) < window:
        return False
    tail = np.asarray(history[-window:], dtype=float)
    hi = tail.max()
    if not np.isfinite(hi):
        return False
    return bool(hi - tail.min() <= tol * max(1.0, abs(hi)))


@dataclass
class GdiceConfig:
    n_nodes: int = 5
    n_iter: int = 100
    n_samples: int = 50
    n_elite: int = 5
    alpha: float = 0.1
    horizon: int = 25
    n_eval_traj: int = 200
    d: int = 2
    acceleration: AccelerationScheme = field(default_factory=AccelerationScheme)
    window: int = 10
    tol: float = 1e-6
    share_params: bool = False

    def __post_init__(self):
        if not 1 <= self.n_elite <= self.n_samples:
            raise ValueError("need 1 <= n_elite <= n_samples")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if self.n_nodes < 1 or self.n_iter < 0 or self.n_eval_traj < 1:
            raise ValueError("n_nodes, n_iter and n_eval_traj must be positive")


@dataclass
class IterationRecord:
    iteration: int
    best_value: float
    worst_elite: float
    injected: bool
    converged: bool
    n_admitted: int
    mean_entropy_ratio: float
    max_entropy_ratio: float


@dataclass
class GdiceResult:
    best_policy: list
    best_value: float
    history: list
    ma_params: list
    trans_params: list

    @property
    def best_values(self) -> list:
        return [h.best_value for h in self.history]


def _entropy_ratios(ma_params, trans_params) -> np.ndarray:
    parts = []
    for m, t in zip(ma_params, trans_params):
        parts.append(np.atleast_1d(dist.normalized_entropy(m)).ravel())
        parts.append(np.atleast_1d(dist.normalized_entropy(t)).ravel())
    return np.concatenate(parts)


def _inject(theta, tau_h, alpha_ei):
    ratio = np.atleast_1d(dist.normalized_entropy(theta))
    low = ratio < tau_h
    if theta.shape[-1] > 1 and low.any():
        theta[low] = (1 - alpha_ei) * theta[low] + alpha_ei / theta.shape[-1]
        return True
    return False


def gdice_search(domain, config: GdiceConfig, seed, callback=None) -> GdiceResult:
    """Cross-entropy search over deterministic FSA policies.

    Each iteration samples ``n_samples`` deterministic joint controllers
    from the per-node sampling distributions, evaluates the ones not seen
    before in this run by Monte Carlo in one batched simulation (repeats
    reuse their first estimate), and refits the
    distributions to the best ``n_elite`` samples that clear the previous
    iteration's worst elite value.  ``callback(record)`` is called after
    every iteration.
    """
    cfg = config
    scheme = cfg.acceleration
    grid = Grid(domain.obs_bounds, cfg.d)
    sample_ss, eval_ss = np.random.SeedSequence(seed).spawn(2)
    rng = np.random.default_rng(sample_ss)
    eval_rng = np.random.default_rng(eval_ss)
    n_robots = domain.num_robots
    nn, nb = cfg.n_nodes, grid.n_bins
    if cfg.share_params and len(set(domain.num_mas)) != 1:
        raise ValueError("parameter sharing needs identical MA sets")
    n_sets = 1 if cfg.share_params else n_robots
    ma_params = [dist.uniform((nn, domain.num_mas[i])) for i in range(n_sets)]
    trans_params = [dist.uniform((nn, nb, nn)) for _ in range(n_sets)]

    best_value, best_policy = -math.inf, None
    worst_elite = -math.inf
    history = []
    best_hist = []
    node_rows = np.arange(nn)
    trans_rows = np.arange(nn * nb)
    S = cfg.n_samples
    cache = {}  # one value estimate per distinct joint controller

    for k in range(cfg.n_iter):
        samples = []
        for i in range(n_robots):
            p = 0 if cfg.share_params else i
            ma_t = dist.sample_rows(ma_params[p], np.tile(node_rows, S), rng).reshape(S, nn)
            tr_t = dist.sample_rows(trans_params[p].reshape(-1, nn), np.tile(trans_rows, S),
                                    rng).reshape(S, nn, nb)
            samples.append((ma_t, tr_t))
        keys = [b"".join(m[s].tobytes() + t[s].tobytes() for m, t in samples) for s in range(S)]
        fresh = list(dict.fromkeys(key for key in keys if key not in cache))
        if fresh:
            pos = [keys.index(key) for key in fresh]
            sub = [(m[pos], t[pos]) for m, t in samples]
            for key, v in zip(fresh, evaluate_many(domain, sub, grid, cfg.n_eval_traj,
                                                   cfg.horizon, eval_rng)):
                cache[key] = float(v)
        values = np.array([cache[key] for key in keys])
        admitted = []
        for s in range(S):
            tables = [(m[s], t[s]) for m, t in samples]
            if values[s] > best_value:
                best_value = float(values[s])
                best_policy = [FsaPolicy.deterministic(m, t, grid, domain.num_mas[i])
                               for i, (m, t) in enumerate(tables)]
            if values[s] >= worst_elite:
                admitted.append((float(values[s]), tables))

        admitted.sort(key=lambda a: a[0], reverse=True)
        elites = admitted[:cfg.n_elite]
        if elites:
            worst_elite = min(v for v, _ in elites)
            rate = scheme.learning_rate(k, cfg.alpha)
            omega = scheme.noise(k)
            for p in range(n_sets):
                ma_counts = np.zeros_like(ma_params[p])
                tr_counts = np.zeros_like(trans_params[p])
                robots = range(n_robots) if cfg.share_params else [p]
                for _, tables in elites:
                    for i in robots:
                        ma_t, tr_t = tables[i]
                        ma_counts[node_rows, ma_t] += 1
                        tr_counts[node_rows[:, None], np.arange(nb)[None, :], tr_t] += 1
                ma_params[p] = dist.smooth_update(dist.mle_categorical(ma_counts), ma_params[p], rate)
                trans_params[p] = dist.smooth_update(dist.mle_categorical(tr_counts), trans_params[p], rate)
                if omega > 0:
                    ma_params[p] = dist.add_noise(ma_params[p], omega)
                    trans_params[p] = dist.add_noise(trans_params[p], omega)

        best_hist.append(best_value)
        converged = value_converged(best_hist, cfg.window, cfg.tol)
        injected = False
        if scheme.kind == "max-entropy-injection" and converged:
            for p in range(n_sets):
                injected |= _inject(ma_params[p], scheme.tau_h, scheme.alpha_ei)
                injected |= _inject(trans_params[p], scheme.tau_h, scheme.alpha_ei)
            if injected:
                worst_elite = -math.inf
        ratios = _entropy_ratios(ma_params, trans_params)
        rec = IterationRecord(k, best_value, worst_elite, injected, converged, len(admitted),
                              float(ratios.mean()), float(ratios.max()))
        history.append(rec)
        if callback is not None:
            callback(rec)
        log.debug("gdice k=%d best=%.4f worst_elite=%.4f injected=%s", k, best_value, worst_elite, injected)

    if cfg.share_params:
        ma_params = ma_params * n_robots
        trans_params = trans_params * n_robots
    return GdiceResult(best_policy, best_value, history, ma_params, trans_params)


def exhaustive_policy_search(domain, n_nodes: int, d: int = 2, horizon=None,
                             n_eval_traj: int = 1000, seed=0, guard: int = 10**6):
    """Best deterministic FSA by brute-force enumeration.

    Uses the domain's ``exact_value`` when ``has_exact_value`` is true (single robot only),
    otherwise a common-random-number Monte Carlo estimate.  Returns
    ``(best_value, best_joint_policy)``.
    """
    grid = Grid(domain.obs_bounds, d)
    horizon = getattr(domain, "horizon", None) if horizon is None else horizon
    if horizon is None:
        raise ValueError("horizon required")
    nb = grid.n_bins
    per_robot = [m ** n_nodes * n_nodes ** (n_nodes * nb) for m in domain.num_mas]
    total = math.prod(per_robot)
    if total > guard:
        raise ValueError(f"{total} policies exceed the enumeration guard of {guard}")
    exact = None
    if domain.num_robots == 1 and getattr(domain, "has_exact_value", False):
        exact = domain.exact_value

    def robot_policies(n_mas):
        for ma_t in itertools.product(range(n_mas), repeat=n_nodes):
            for tr_t in itertools.product(range(n_nodes), repeat=n_nodes * nb):
                yield FsaPolicy.deterministic(ma_t, tr_t, grid, n_mas)

    best_value, best = -math.inf, None
    for joint in itertools.product(*[list(robot_policies(m)) for m in domain.num_mas]):
        if exact is not None:
            value = exact(joint[0], horizon)
        else:
            value, _ = evaluate(domain, list(joint), n_eval_traj, horizon, seed)
        if value > best_value + 1e-12:
            best_value, best = value, list(joint)
    return best_value, best
