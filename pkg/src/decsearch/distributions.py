"""Categorical sampling distributions and the CE update/acceleration rules.

All functions work on the last axis, so a stack of distributions (for
example one row per controller node) can be updated in one call.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PROB_FLOOR = 1e-12
SIMPLEX_ATOL = 1e-9


class DegenerateCountsError(ValueError):
    """Raised when a maximum-likelihood estimate has no evidence."""


@dataclass(frozen=True)
class CategoricalParams:
    """A validated probability vector."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size < 1:
            raise ValueError("probs must be a non-empty vector")
        check_simplex(p)
        object.__setattr__(self, "probs", p)

    def __array__(self, dtype=None, copy=None):
        return self.probs if dtype is None else self.probs.astype(dtype)

    def __len__(self):
        return self.probs.size

    @classmethod
    def uniform(cls, n: int) -> "CategoricalParams":
        return cls(np.full(n, 1.0 / n))


def check_simplex(p, atol: float = SIMPLEX_ATOL) -> None:
    p = np.asarray(p, dtype=float)
    if np.any(~np.isfinite(p)) or np.any(p < -atol) or np.any(p > 1 + atol):
        raise ValueError("probabilities must lie in [0, 1]")
    if not np.allclose(p.sum(axis=-1), 1.0, rtol=0.0, atol=atol):
        raise ValueError("probabilities must sum to 1")


def uniform(shape) -> np.ndarray:
    """Uniform distribution(s); the last entry of ``shape`` is the support size."""
    shape = (shape,) if np.isscalar(shape) else tuple(shape)
    return np.full(shape, 1.0 / shape[-1])


def mle_categorical(counts) -> np.ndarray:
    """Relative frequencies of ``counts``.

    Raises DegenerateCountsError when the total count is zero; callers
    are expected to keep their previous parameters in that case.
    """
    counts = np.asarray(counts, dtype=float)
    if counts.size == 0:
        raise ValueError("counts must be non-empty")
    if np.any(counts < 0):
        raise ValueError("counts must be non-negative")
    total = counts.sum(axis=-1, keepdims=True)
    if np.any(total <= 0):
        raise DegenerateCountsError("no evidence for at least one distribution")
    return counts / total


def _same_shape(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def smooth_update(theta_new, theta_old, alpha: float) -> np.ndarray:
    """Blend a fresh estimate into the previous parameters at rate ``alpha``."""
    theta_new, theta_old = _same_shape(theta_new, theta_old)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    return alpha * theta_new + (1.0 - alpha) * theta_old


def entropy(p) -> np.ndarray | float:
    """Shannon entropy in nats, with 0 log 0 = 0."""
    p = np.asarray(p, dtype=float)
    h = -np.sum(p * np.log(np.maximum(p, PROB_FLOOR)), axis=-1)
    return float(h) if np.ndim(h) == 0 else h


def normalized_entropy(p) -> np.ndarray | float:
    """Entropy divided by its maximum ``ln n``; 1 for single-outcome supports."""
    p = np.asarray(p, dtype=float)
    n = p.shape[-1]
    if n == 1:
        return 1.0 if p.ndim == 1 else np.ones(p.shape[:-1])
    return entropy(p) / np.log(n)


def inject_max_entropy(theta_new, theta_old, alpha: float, alpha_ei: float) -> np.ndarray:
    """Smoothed update followed by mixing with the uniform distribution."""
    if not 0.0 <= alpha_ei <= 1.0:
        raise ValueError("alpha_ei must lie in [0, 1]")
    smoothed = smooth_update(theta_new, theta_old, alpha)
    return (1.0 - alpha_ei) * smoothed + alpha_ei * uniform(smoothed.shape)


def dynamic_alpha(k: int, alpha0: float, beta: float) -> float:
    """Learning rate that starts at ``alpha0`` and decays towards zero."""
    if k < 1:
        raise ValueError("iteration index must be >= 1")
    return alpha0 - alpha0 * (1.0 - 1.0 / k) ** beta


def linear_noise(k: int, omega_max: float, r: float) -> float:
    return max(omega_max - r * k, 0.0)


def add_noise(theta, omega: float) -> np.ndarray:
    """Add ``omega`` to every component and renormalise onto the simplex."""
    theta = np.asarray(theta, dtype=float) + omega
    return theta / theta.sum(axis=-1, keepdims=True)


def sample(p, rng: np.random.Generator, size=None):
    """Draw indices from a single categorical distribution."""
    p = np.asarray(p, dtype=float)
    cdf = np.cumsum(p)
    u = rng.random(size)
    idx = np.searchsorted(cdf, u * cdf[-1], side="right")
    return np.minimum(idx, p.size - 1)


def sample_rows(table, rows, rng: np.random.Generator) -> np.ndarray:
    """Draw one index from ``table[rows[j]]`` for every j (vectorised)."""
    cdf = np.cumsum(np.asarray(table, dtype=float), axis=-1)[rows]
    u = rng.random(len(rows))[:, None] * cdf[:, -1:]
    idx = (cdf <= u).sum(axis=-1)
    return np.minimum(idx, cdf.shape[-1] - 1)


@dataclass(frozen=True)
class AccelerationScheme:
    """How sampling distributions are kept from collapsing.

    ``kind`` is one of ``none``, ``dynamic-smoothing``, ``noise-injection``
    or ``max-entropy-injection``.
    """

    kind: str = "none"
    alpha0: float = 0.5
    beta: float = 15.0
    omega_max: float = 0.02
    r: float = 1.0 / 2000.0
    alpha_ei: float = 0.03
    tau_h: float = 0.1
    label: str = field(default="", compare=False)

    KINDS = ("none", "dynamic-smoothing", "noise-injection", "max-entropy-injection")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown acceleration scheme {self.kind!r}")
        if self.kind == "dynamic-smoothing" and not (0 < self.alpha0 <= 1 and self.beta > 0):
            raise ValueError("dynamic smoothing needs alpha0 in (0,1] and beta > 0")
        if self.kind == "noise-injection" and (self.omega_max < 0 or self.r < 0):
            raise ValueError("noise injection needs omega_max >= 0 and r >= 0")
        if self.kind == "max-entropy-injection" and not (0 < self.alpha_ei < 1 and 0 < self.tau_h < 1):
            raise ValueError("entropy injection needs alpha_ei and tau_h in (0,1)")

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        if self.kind == "dynamic-smoothing":
            return f"dynamic-smoothing({self.alpha0:g},{self.beta:g})"
        if self.kind == "noise-injection":
            return f"noise({self.omega_max:g},{self.r:g})"
        if self.kind == "max-entropy-injection":
            return f"entropy-injection({self.alpha_ei:g})"
        return "none"

    def learning_rate(self, k: int, alpha: float) -> float:
        """Rate used for the update that produces iteration ``k + 1``."""
        if self.kind == "dynamic-smoothing":
            return dynamic_alpha(k + 1, self.alpha0, self.beta)
        return alpha

    def noise(self, k: int) -> float:
        if self.kind == "noise-injection":
            return linear_noise(k, self.omega_max, self.r)
        return 0.0

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "dynamic-smoothing":
            out.update(alpha0=self.alpha0, beta=self.beta)
        elif self.kind == "noise-injection":
            out.update(omega_max=self.omega_max, r=self.r)
        elif self.kind == "max-entropy-injection":
            out.update(alpha_ei=self.alpha_ei, tau_h=self.tau_h)
        if self.label:
            out["label"] = self.label
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "AccelerationScheme":
        allowed = {"kind", "alpha0", "beta", "omega_max", "r", "alpha_ei", "tau_h", "label"}
        unknown = set(d) - allowed
        if unknown:
            raise ValueError(f"unknown acceleration keys: {sorted(unknown)}")
        return cls(**d)
