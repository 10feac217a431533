"""Per-frame descriptors of rasterized event frames.

These stand in for a frozen image encoder: a handful of hand-made statistics
per event frame, standardised with training-set statistics and mixed into a
wider feature space by a fixed orthogonal matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .framing import FrameSequence

DESCRIPTORS = ("log_raw", "log_rel_raw", "active_frac", "spread_x", "spread_y",
               "polarity_balance", "log_rendered", "peak_share")


def frame_descriptors(frames: FrameSequence) -> np.ndarray:
    """(T, 8) matrix of raw descriptors, one row per event frame."""
    T, H, W = frames.counts.shape
    raw = frames.raw_counts.astype(np.float64)
    rendered = frames.rendered_counts.astype(np.float64)
    counts = frames.counts.astype(np.float64)
    total = np.maximum(counts.sum(axis=(1, 2)), 1.0)
    xs = np.arange(W, dtype=np.float64)
    ys = np.arange(H, dtype=np.float64)
    px = counts.sum(axis=1) / total[:, None]
    py = counts.sum(axis=2) / total[:, None]
    mx = px @ xs
    my = py @ ys
    sx = np.sqrt(np.maximum(px @ xs**2 - mx**2, 0.0)) / W
    sy = np.sqrt(np.maximum(py @ ys**2 - my**2, 0.0)) / H
    out = np.column_stack([
        np.log1p(raw),
        np.log1p(raw) - np.log1p(frames.median_count),
        (counts > 0).mean(axis=(1, 2)),
        sx,
        sy,
        np.abs(frames.polarity.sum(axis=(1, 2))) / total,
        np.log1p(rendered),
        counts.max(axis=(1, 2)) / total,
    ])
    return out


@dataclass
class FeatureEncoder:
    mean: np.ndarray
    std: np.ndarray
    mixing: np.ndarray  # (n_descriptors, dim), orthonormal rows

    @classmethod
    def fit(cls, descriptors: list[np.ndarray], dim: int = 16, seed: int = 0) -> "FeatureEncoder":
        stacked = np.concatenate(descriptors, axis=0)
        mean = stacked.mean(axis=0)
        std = stacked.std(axis=0)
        std[std == 0] = 1.0
        n = stacked.shape[1]
        if dim < n:
            raise ValueError(f"feature dimension {dim} below descriptor count {n}")
        q, _ = np.linalg.qr(np.random.default_rng(seed).standard_normal((dim, dim)))
        return cls(mean, std, q[:n])

    def encode(self, descriptors: np.ndarray) -> np.ndarray:
        return ((descriptors - self.mean) / self.std) @ self.mixing

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist(), "mixing": self.mixing.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureEncoder":
        return cls(np.array(d["mean"]), np.array(d["std"]), np.array(d["mixing"]))


def add_modality_noise(features: np.ndarray, sigma: float, seed: int) -> np.ndarray:
    """Event-side features: the clean encoding plus isotropic Gaussian noise."""
    rng = np.random.default_rng(seed)
    return features + sigma * rng.standard_normal(features.shape)
