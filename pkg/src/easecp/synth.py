"""Synthetic classifier/regressor outputs with a controllable difficulty
coupling.

Each example gets a latent difficulty d in [0, 1]. The true-label logit
falls linearly in d while the other logits are standard normal, so the
ground-truth rank grows with d and the top-1 accuracy can be solved for
exactly; predictions on transformed inputs are the same logits plus noise
whose scale grows with d, so ease falls with d. That one latent variable
therefore drives both the rank distribution and the prediction stability,
which is the regime the binned adaptivity metrics are designed to probe.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .data import RegressionDataset, ScoreDataset, cosine_ease, quantize_f32, regression_ease
from .errors import ConfigError

_MARGIN_SLOPE = 8.0  # logit-units of true-label margin lost from d=0 to d=1
_MARGIN_CAP = 6.0  # keeps easy rows off the softmax saturation plateau
_NOISE_BASE = 2.2  # transformed-logit noise scale at full coupling, d=1


@dataclass(frozen=True)
class SynthConfig:
    n: int = 20000
    k: int = 50
    l: int = 5
    target_accuracy: float = 0.75
    difficulty_spread: float = 1.0
    noise_coupling: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        if self.k < 2:
            raise ConfigError("k must be >= 2")
        if self.l < 1:
            raise ConfigError("l must be >= 1")
        if self.difficulty_spread < 0 or self.noise_coupling < 0:
            raise ConfigError("difficulty_spread and noise_coupling must be >= 0")
        if not (1.0 / self.k < self.target_accuracy < 1.0):
            raise ConfigError(
                f"target accuracy {self.target_accuracy} is infeasible for k={self.k}: "
                f"must lie in (1/k, 1)"
            )


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed))


def _difficulty(rng: np.random.Generator, cfg: SynthConfig) -> np.ndarray:
    d = 0.5 + cfg.difficulty_spread * (rng.uniform(size=cfg.n) - 0.5)
    return np.clip(d, 0.0, 1.0)


def _margins(a: float, d: np.ndarray) -> np.ndarray:
    return np.minimum(a - _MARGIN_SLOPE * d, _MARGIN_CAP)


def _solve_margin_intercept(d: np.ndarray, k: int, target: float) -> float:
    """Find a such that mean_i ndtr(margin_i)^(k-1) == target.

    The expected top-1 accuracy of example i is P(all k-1 noise logits fall
    below the margin) = Phi(m_i)^(k-1); the mean is nondecreasing in a, so
    bisection converges.
    """

    def acc(a: float) -> float:
        return float(np.mean(ndtr(_margins(a, d)) ** (k - 1)))

    lo, hi = -30.0, 60.0
    if not (acc(lo) < target < acc(hi)):
        raise ConfigError(f"target accuracy {target} is out of the generator's range")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if acc(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def generate(cfg: SynthConfig) -> ScoreDataset:
    """Classification dataset with probs, labels, transformed block, ease."""
    rng = _rng(cfg.seed)
    d = _difficulty(rng, cfg)
    labels = rng.integers(0, cfg.k, size=cfg.n)
    margins = _margins(_solve_margin_intercept(d, cfg.k, cfg.target_accuracy), d)
    logits = rng.standard_normal((cfg.n, cfg.k))
    logits[np.arange(cfg.n), labels] = margins
    probs = quantize_f32(_softmax(logits))

    noise_scale = cfg.noise_coupling * _NOISE_BASE * (0.05 + 0.95 * d)
    transformed = np.empty((cfg.n, cfg.l, cfg.k), dtype=np.float64)
    for t in range(cfg.l):
        pert = rng.standard_normal((cfg.n, cfg.k))
        transformed[:, t, :] = _softmax(logits + noise_scale[:, None] * pert)
    transformed = quantize_f32(transformed)

    ease = cosine_ease(probs, transformed)
    return ScoreDataset(probs=probs, labels=labels, transformed_probs=transformed, ease=ease)


def generate_regression(cfg: SynthConfig) -> RegressionDataset:
    """Regression analogue: error scale and prediction instability both
    grow with the latent difficulty."""
    rng = _rng(cfg.seed)
    d = _difficulty(rng, cfg)
    targets = rng.standard_normal(cfg.n)
    err_scale = 0.15 + 1.2 * d
    mu = targets + err_scale * rng.standard_normal(cfg.n)
    sigma = err_scale * np.exp(0.1 * rng.standard_normal(cfg.n))
    mu = quantize_f32(mu)
    noise_scale = cfg.noise_coupling * (0.05 + 0.95 * d)
    transformed_mu = quantize_f32(
        mu[:, None] + noise_scale[:, None] * rng.standard_normal((cfg.n, cfg.l))
    )
    ease = regression_ease(mu, transformed_mu)
    return RegressionDataset(
        mu=mu, sigma=sigma, targets=targets, transformed_mu=transformed_mu, ease=ease
    )
