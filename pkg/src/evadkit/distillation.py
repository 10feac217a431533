"""Distillation losses with analytic gradients.

Binary scores are matched with a mean squared error. Class logits are
standardised per row, softened with a temperature and compared with a
``tau**2``-weighted KL divergence, teacher held constant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class KDConfig:
    alpha: float = 0.1
    beta: float = 9.0
    tau: float = 2.0
    eps_std: float = 1e-8

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        if self.tau <= 0:
            raise ValueError("tau must be positive")


def kd_binary(a_e, a_r) -> tuple[float, np.ndarray]:
    """Mean squared error between student and teacher scores, and its gradient."""
    a_e = np.asarray(a_e, dtype=np.float64)
    a_r = np.asarray(a_r, dtype=np.float64)
    if a_e.shape != a_r.shape:
        raise ValueError(f"score lengths differ: {a_e.shape} vs {a_r.shape}")
    T = a_e.size
    diff = a_e - a_r
    return float(np.sum(diff**2) / T), 2.0 * diff / T


def _row_stats(z: np.ndarray, eps: float):
    mu = z.mean(axis=1, keepdims=True)
    c = z - mu
    sigma = np.sqrt((c**2).mean(axis=1, keepdims=True))
    return c, sigma, sigma + eps


def standardize_logits(z, eps_std: float = 1e-8) -> np.ndarray:
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    if z.shape[1] < 2:
        raise ValueError("need at least two classes")
    c, _, denom = _row_stats(z, eps_std)
    return c / denom


def _standardize_backward(z: np.ndarray, g: np.ndarray, eps: float) -> np.ndarray:
    """Pull a gradient w.r.t. standardised logits back to the raw logits."""
    K = z.shape[1]
    c, sigma, denom = _row_stats(z, eps)
    # d sigma / d z = c / (K sigma); zero-variance rows have zero gradient there
    safe = np.where(sigma > 0, sigma, 1.0)
    gc = g / denom
    gc = gc - (g * c).sum(axis=1, keepdims=True) / denom**2 * np.where(sigma > 0, c / (K * safe), 0.0)
    return gc - gc.mean(axis=1, keepdims=True)


def softmax(x: np.ndarray) -> np.ndarray:
    x = x - x.max(axis=1, keepdims=True)
    e = np.exp(x)
    return e / e.sum(axis=1, keepdims=True)


def kd_multiclass(z_e, z_r, config: KDConfig | None = None) -> tuple[float, np.ndarray]:
    """Temperature-scaled KL(teacher || student) on standardised logits.

    Returns the loss and its gradient w.r.t. the raw student logits.
    """
    config = config or KDConfig()
    z_e = np.atleast_2d(np.asarray(z_e, dtype=np.float64))
    z_r = np.atleast_2d(np.asarray(z_r, dtype=np.float64))
    if z_e.shape != z_r.shape:
        raise ValueError(f"logit shapes differ: {z_e.shape} vs {z_r.shape}")
    T = z_e.shape[0]
    tau = config.tau
    p_r = softmax(standardize_logits(z_r, config.eps_std) / tau)
    p_e = softmax(standardize_logits(z_e, config.eps_std) / tau)
    log_pr = np.log(np.maximum(p_r, PROB_FLOOR))
    floored = p_e < PROB_FLOOR
    log_pe = np.log(np.maximum(p_e, PROB_FLOOR))
    kl = np.where(p_r > 0, p_r * (log_pr - log_pe), 0.0)
    loss = tau**2 * kl.sum() / T
    # gradient of -sum_k p_r log p_e w.r.t. the tempered logits; floored entries are constant
    g_log = np.where(floored, 0.0, -p_r)
    g_s = g_log - p_e * g_log.sum(axis=1, keepdims=True)
    g_zhat = tau**2 / T * g_s / tau
    return float(loss), _standardize_backward(z_e, g_zhat, config.eps_std)


def kd_total(l_bin: float, l_multi: float, config: KDConfig | None = None) -> float:
    config = config or KDConfig()
    if not (np.isfinite(l_bin) and np.isfinite(l_multi)):
        raise ValueError("losses must be finite")
    return config.alpha * l_bin + config.beta * l_multi
