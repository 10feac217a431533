"""Density-modulated distance-decay attention.

A feature-independent temporal kernel::

    w_ij = exp(-lam * |t_i - t_j| / (d_j + eps)) / (sum_k exp(-lam * |t_i - t_k| / (d_k + eps)) + eps)

Tokens close in time and tokens carrying many events receive more weight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EDAConfig:
    lam: float = 1.0
    eps: float = 1e-6
    residual: bool = False

    def __post_init__(self):
        if self.lam <= 0 or self.eps <= 0:
            raise ValueError("lam and eps must be positive")


def normalize_timestamps(t) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    if t.size == 0:
        raise ValueError("need at least one timestamp")
    lo, hi = t.min(), t.max()
    if hi == lo:
        return np.zeros_like(t)
    return (t - lo) / (hi - lo)


def eda_mass(t_norm, d, lam: float, eps: float) -> np.ndarray:
    """Unnormalised kernel ``exp(-lam |t_i - t_j| / (d_j + eps))``."""
    t_norm = np.asarray(t_norm, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    if t_norm.shape != d.shape or t_norm.ndim != 1:
        raise ValueError(f"timestamps {t_norm.shape} and densities {d.shape} differ")
    if np.any(d < 0):
        raise ValueError("densities must be non-negative")
    dist = np.abs(t_norm[:, None] - t_norm[None, :])
    return np.exp(-lam * dist / (d[None, :] + eps))


def eda_weights(t_norm, d, config: EDAConfig | None = None, *, lam: float | None = None,
                eps: float | None = None) -> np.ndarray:
    config = config or EDAConfig()
    lam = config.lam if lam is None else lam
    eps = config.eps if eps is None else eps
    mass = eda_mass(t_norm, d, lam, eps)
    return mass / (mass.sum(axis=1, keepdims=True) + eps)


def apply_eda(features: np.ndarray, weights: np.ndarray, residual: bool = False) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if x.ndim != 2 or w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[1] != x.shape[0]:
        raise ValueError(f"weights {w.shape} incompatible with features {x.shape}")
    out = w @ x
    return out + x if residual else out


def sequence_weights(timestamps_us, densities, config: EDAConfig | None = None) -> np.ndarray:
    """Kernel for a (possibly subsampled) sequence; densities are renormalised over it."""
    d = np.asarray(densities, dtype=np.float64)
    s = d.sum()
    d = d / s if s > 0 else np.full(d.shape, 1.0 / max(d.size, 1))
    return eda_weights(normalize_timestamps(timestamps_us), d, config)
