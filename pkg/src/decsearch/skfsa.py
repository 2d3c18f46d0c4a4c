"""Stochastic kernel-based FSA policies.

Each node of a robot's controller carries a categorical MA distribution and
a node-transition *function*: a kernel logistic regression (RBF kernel,
trailing bias feature) mapping a continuous observation to a categorical
distribution over next nodes.  Transition functions are trained on the
observations collected in a bounded FIFO queue of elite bundles.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from . import distributions as dist

GTOL = 1e-6
MAX_ITER = 200


def rbf_kernel(o, o_prime, sigma: float) -> float:
    o = np.asarray(o, dtype=float)
    o_prime = np.asarray(o_prime, dtype=float)
    if sigma <= 0:
        raise ValueError("kernel radius must be positive")
    if o.shape != o_prime.shape:
        raise ValueError("observations must have equal dimension")
    return float(np.exp(-0.5 * np.sum((o - o_prime) ** 2) / sigma**2))


def feature_matrix(obs, basis, sigma: float) -> np.ndarray:
    """Kernel features of each row of ``obs`` against ``basis``, plus a bias column."""
    obs = np.atleast_2d(np.asarray(obs, dtype=float))
    basis = np.asarray(basis, dtype=float).reshape(-1, obs.shape[1])
    sq = (np.sum(obs**2, axis=1)[:, None] + np.sum(basis**2, axis=1)[None, :]
          - 2.0 * obs @ basis.T)
    phi = np.empty((obs.shape[0], basis.shape[0] + 1))
    np.exp(-0.5 / sigma**2 * np.maximum(sq, 0.0), out=phi[:, :-1])
    phi[:, -1] = 1.0
    return phi


def feature_vector(o, basis, sigma: float) -> np.ndarray:
    basis = np.asarray(basis, dtype=float)
    if basis.size == 0:
        raise ValueError("basis must be non-empty")
    if sigma <= 0:
        raise ValueError("kernel radius must be positive")
    return feature_matrix(np.asarray(o, dtype=float).reshape(1, -1), basis, sigma)[0]


def softmax_rows(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max(axis=-1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=-1, keepdims=True)
    return z


def _objective(weights, phi, labels, sample_weights, lam):
    scores = phi @ weights.T
    log_z = logsumexp(scores, axis=1)
    n = len(labels)
    ll = float(np.dot(sample_weights, scores[np.arange(n), labels] - log_z))
    resid = -np.exp(scores - log_z[:, None])
    resid[np.arange(n), labels] += 1.0
    grad = (resid * sample_weights[:, None]).T @ phi
    penal = weights[:, :-1]
    obj = ll - 0.5 * lam * float(np.sum(penal**2))
    grad[:, :-1] -= lam * penal
    return obj, grad


def klr_objective_and_gradient(weights, obs, labels, sample_weights, lam: float,
                               basis, sigma: float):
    """Regularised weighted log-likelihood of a kernel softmax model and its gradient.

    Parameters
    ----------
    weights : (n_classes, n_basis + 1) array, last column is the bias.
    obs : (n, obs_dim) training inputs.
    labels : (n,) class index of each input.
    sample_weights : (n,) non-negative per-sample weights.
    lam : L2 coefficient on the kernel (non-bias) weights.

    Returns
    -------
    (objective, gradient) with the gradient shaped like ``weights``.
    """
    weights = np.asarray(weights, dtype=float)
    phi = feature_matrix(obs, basis, sigma)
    return _objective(weights, phi, np.asarray(labels), np.asarray(sample_weights, dtype=float), lam)


def bundle_weights(n: int, alpha: float) -> np.ndarray:
    """Training weight of each queued bundle, oldest first."""
    if n < 1:
        raise ValueError("need at least one bundle")
    b = np.arange(1, n + 1)
    w = alpha * (1.0 - alpha) ** (n - b)
    w[0] = (1.0 - alpha) ** (n - 1)
    return w


@dataclass
class ObservationBundle:
    """(node, observation, next node) samples from one iteration's elites."""

    nodes: np.ndarray
    obs: np.ndarray
    next_nodes: np.ndarray
    iteration: int = 0

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=np.int64)
        self.next_nodes = np.asarray(self.next_nodes, dtype=np.int64)
        obs = np.asarray(self.obs, dtype=float)
        if len(self.nodes) == 0:
            # a robot may finish no MA within the horizon
            self.obs = obs.reshape(0, obs.shape[-1] if obs.ndim == 2 else 0)
        else:
            self.obs = obs.reshape(len(self.nodes), -1)

    def __len__(self):
        return len(self.nodes)


class FifoKernelQueue:
    """Circular buffer of the most recent ``capacity`` bundles."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("queue capacity must be >= 1")
        self.capacity = capacity
        self._items = deque(maxlen=capacity)

    def push(self, bundle: ObservationBundle) -> None:
        self._items.append(bundle)

    def __len__(self):
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    @property
    def bundles(self) -> list:
        return list(self._items)

    def training_set(self, node: int, alpha: float):
        """Samples leaving ``node``: observations, next nodes, weights and keys."""
        bundles = self.bundles
        if not bundles:
            return np.empty((0, 0)), np.empty(0, dtype=np.int64), np.empty(0), []
        w = bundle_weights(len(bundles), alpha)
        obs, labels, weights, keys = [], [], [], []
        for wb, bundle in zip(w, bundles):
            sel = np.flatnonzero(bundle.nodes == node)
            if sel.size == 0:
                continue
            obs.append(bundle.obs[sel])
            labels.append(bundle.next_nodes[sel])
            weights.append(np.full(sel.size, wb))
            keys.extend((bundle.iteration, int(j)) for j in sel)
        if not obs:
            return np.empty((0, 0)), np.empty(0, dtype=np.int64), np.empty(0), []
        return np.concatenate(obs), np.concatenate(labels), np.concatenate(weights), keys


@dataclass
class KernelTransitionFunction:
    """Next-node distribution as a function of a continuous observation.

    ``mix`` is the accumulated weight of the uniform distribution mixed in
    by entropy injection.
    """

    n_nodes: int
    sigma: float
    basis: np.ndarray = None
    weights: np.ndarray = None
    mix: float = 0.0
    keys: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("kernel radius must be positive")
        if self.basis is None:
            self.basis = np.empty((0, 0))
        self.basis = np.asarray(self.basis, dtype=float)
        if self.basis.ndim == 1:
            self.basis = self.basis.reshape(-1, 1) if self.basis.size else np.empty((0, 0))
        m = self.basis.shape[0]
        if self.weights is None:
            self.weights = np.zeros((self.n_nodes, m + 1))
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (self.n_nodes, m + 1):
            raise ValueError(f"weights must have shape {(self.n_nodes, m + 1)}")

    @property
    def n_basis(self) -> int:
        return self.basis.shape[0]

    def scores(self, obs) -> np.ndarray:
        obs = np.atleast_2d(np.asarray(obs, dtype=float))
        if self.n_basis == 0:
            return np.broadcast_to(self.weights[:, -1], (obs.shape[0], self.n_nodes)).copy()
        return feature_matrix(obs, self.basis, self.sigma) @ self.weights.T

    def predict(self, obs) -> np.ndarray:
        """Next-node probabilities; (n_nodes,) for one observation, (M, n_nodes) for many."""
        obs = np.asarray(obs, dtype=float)
        single = obs.ndim == 1 and (self.n_basis == 0 or obs.size == self.basis.shape[1])
        p = softmax_rows(self.scores(obs.reshape(1, -1) if single else obs))
        if self.mix > 0:
            p = (1.0 - self.mix) * p + self.mix / self.n_nodes
        return p[0] if single else p


def klr_predict(fn: KernelTransitionFunction, o) -> np.ndarray:
    return fn.predict(o)


def train_weighted_klr(queue: FifoKernelQueue, node: int, n_nodes: int, alpha: float,
                       sigma: float, lam: float = 1e-3,
                       previous: KernelTransitionFunction | None = None) -> KernelTransitionFunction:
    """Fit ``node``'s transition function to the queued elite transitions.

    The basis is every queued observation made while leaving ``node``; each
    sample is weighted by its bundle's weight.  The solve is warm-started
    from ``previous`` (matching basis points by key), whose injected uniform
    mixture is carried over and decayed by ``1 - alpha``.
    """
    obs, labels, weights, keys = queue.training_set(node, alpha)
    mix = (1.0 - alpha) * previous.mix if previous is not None else 0.0
    if labels.size == 0:
        return KernelTransitionFunction(n_nodes, sigma, mix=mix)
    m = len(keys)
    w0 = np.zeros((n_nodes, m + 1))
    if previous is not None and previous.keys:
        where = {k: j for j, k in enumerate(previous.keys)}
        old = [(i, where[k]) for i, k in enumerate(keys) if k in where]
        if old:
            new_idx, old_idx = map(list, zip(*old))
            w0[:, new_idx] = previous.weights[:, old_idx]
        w0[:, -1] = previous.weights[:, -1]
    phi = feature_matrix(obs, obs, sigma)
    shape = w0.shape

    def negative(flat):
        f, g = _objective(flat.reshape(shape), phi, labels, weights, lam)
        return -f, -g.ravel()

    res = minimize(negative, w0.ravel(), jac=True, method="L-BFGS-B",
                   options={"gtol": GTOL, "maxiter": MAX_ITER})
    return KernelTransitionFunction(n_nodes, sigma, obs, res.x.reshape(shape), mix, keys)


def approx_transition_entropy(fn: KernelTransitionFunction) -> float:
    """Mean entropy of the transition distributions at the basis points."""
    if fn.n_basis == 0:
        return float(np.log(fn.n_nodes))
    return float(np.mean(dist.entropy(fn.predict(fn.basis))))


def inject_transition_entropy(fn: KernelTransitionFunction, alpha_ei: float) -> KernelTransitionFunction:
    """Mix the function's output with the uniform distribution at rate ``alpha_ei``."""
    if not 0.0 < alpha_ei < 1.0:
        raise ValueError("alpha_ei must lie in (0, 1)")
    mix = 1.0 - (1.0 - fn.mix) * (1.0 - alpha_ei)
    return KernelTransitionFunction(fn.n_nodes, fn.sigma, fn.basis, fn.weights, mix, fn.keys)


class SkFsaPolicy:
    """One robot's stochastic kernel-based controller."""

    def __init__(self, ma_probs, transitions: list):
        self.ma_probs = np.asarray(ma_probs, dtype=float)
        dist.check_simplex(self.ma_probs)
        self.transitions = list(transitions)
        if len(self.transitions) != self.ma_probs.shape[0]:
            raise ValueError("need one transition function per node")

    @classmethod
    def uniform(cls, n_nodes: int, n_mas: int, sigma: float) -> "SkFsaPolicy":
        return cls(dist.uniform((n_nodes, n_mas)),
                   [KernelTransitionFunction(n_nodes, sigma) for _ in range(n_nodes)])

    @property
    def n_nodes(self) -> int:
        return self.ma_probs.shape[0]

    @property
    def n_mas(self) -> int:
        return self.ma_probs.shape[1]

    def copy(self) -> "SkFsaPolicy":
        # transition functions are never mutated in place, so sharing them is safe
        return SkFsaPolicy(self.ma_probs.copy(), list(self.transitions))

    def select_ma(self, nodes, rng):
        return dist.sample_rows(self.ma_probs, nodes, rng)

    def transition(self, nodes, obs, rng):
        nodes = np.asarray(nodes)
        out = np.empty(nodes.shape, dtype=np.int64)
        for q in np.unique(nodes):
            sel = np.flatnonzero(nodes == q)
            p = np.atleast_2d(self.transitions[q].predict(obs[sel]))
            out[sel] = dist.sample_rows(p, np.arange(len(sel)), rng)
        return out

    def ma_distribution(self, node: int) -> np.ndarray:
        return self.ma_probs[node]

    def transition_distribution(self, node: int, obs) -> np.ndarray:
        return self.transitions[node].predict(np.asarray(obs, dtype=float).ravel())


def default_sigma(obs_bounds) -> float:
    """Ten percent of the observation box diagonal."""
    b = np.asarray(obs_bounds, dtype=float)
    return 0.1 * float(np.linalg.norm(b[:, 1] - b[:, 0]))
