"""Event-density aware frame sampling.

Frames are ranked by their share of the video's events. The smallest prefix
of that ranking whose cumulative share strictly exceeds ``tau`` forms the
high-density set, everything else the low-density set. A fixed ratio of the
sample budget is drawn from each set, weighted by density and without
replacement.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .framing import FrameSequence, round_half_up


CUM_TOL = 1e-12


@dataclass(frozen=True)
class DensityProfile:
    d: np.ndarray
    use_raw: bool = True

    def __len__(self) -> int:
        return len(self.d)


@dataclass(frozen=True)
class EDSConfig:
    tau: float = 0.95
    ratio_high: float = 0.8
    sample_count: int = 256
    seed: int = 0

    def __post_init__(self):
        if not (0 < self.tau < 1):
            raise ValueError("tau must lie in (0, 1)")
        if not (0 <= self.ratio_high <= 1):
            raise ValueError("ratio_high must lie in [0, 1]")
        if self.sample_count < 1:
            raise ValueError("sample_count must be >= 1")


@dataclass(frozen=True, eq=False)
class SampleSet:
    indices: np.ndarray  # strictly increasing
    provenance: tuple[str, ...]  # "high" | "low", aligned with indices
    seed: int
    truncated: bool = False

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SampleSet):
            return NotImplemented
        return (np.array_equal(self.indices, other.indices) and self.provenance == other.provenance
                and (self.seed, self.truncated) == (other.seed, other.truncated))

    @property
    def n_high(self) -> int:
        return self.provenance.count("high")

    @property
    def n_low(self) -> int:
        return self.provenance.count("low")


def density_from_counts(counts) -> DensityProfile:
    n = np.asarray(counts, dtype=np.float64)
    if n.ndim != 1 or n.size == 0:
        raise ValueError("need a non-empty 1-D count vector")
    if np.any(n < 0):
        raise ValueError("counts must be non-negative")
    total = n.sum()
    if total <= 0:
        raise ValueError("all frames are empty; density undefined")
    return DensityProfile(n / total)


def compute_density(frames: FrameSequence, use_raw: bool = True) -> DensityProfile:
    counts = frames.raw_counts if use_raw else frames.rendered_counts
    prof = density_from_counts(counts)
    return DensityProfile(prof.d, use_raw)


def nucleus_partition(profile: DensityProfile | np.ndarray, tau: float) -> tuple[np.ndarray, np.ndarray]:
    """Split frame indices into (high, low); both returned in density-rank order."""
    d = profile.d if isinstance(profile, DensityProfile) else np.asarray(profile, dtype=float)
    order = np.lexsort((np.arange(d.size), -d))  # density desc, index asc
    cum = np.cumsum(d[order])
    # a cumulative sum that equals tau up to round-off does not exceed it
    above = np.flatnonzero(cum > tau + CUM_TOL)
    cut = int(above[0]) + 1 if above.size else d.size
    return order[:cut], order[cut:]


def weighted_sample_without_replacement(weights: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Sequential draws, renormalising the remaining weights after each pick.

    All-zero weights fall back to uniform.
    """
    w = np.asarray(weights, dtype=float).copy()
    k = min(k, w.size)
    picked = np.empty(k, dtype=np.int64)
    alive = np.ones(w.size, dtype=bool)
    for i in range(k):
        ww = np.where(alive, w, 0.0)
        total = ww.sum()
        if total <= 0:
            ww = alive.astype(float)
            total = ww.sum()
        u = rng.random() * total
        j = int(np.searchsorted(np.cumsum(ww), u, side="right"))
        j = min(j, w.size - 1)
        while not alive[j]:  # u landed exactly on a boundary of a dead slot
            j -= 1
        picked[i] = j
        alive[j] = False
    return picked


def eds_sample(profile: DensityProfile, config: EDSConfig | None = None) -> SampleSet:
    config = config or EDSConfig()
    d = profile.d
    T = d.size
    if config.sample_count >= T:
        idx = np.arange(T)
        high, _ = nucleus_partition(profile, config.tau)
        hs = set(high.tolist())
        prov = tuple("high" if i in hs else "low" for i in idx)
        return SampleSet(idx, prov, config.seed, truncated=config.sample_count > T)
    rng = np.random.default_rng(config.seed)
    high, low = nucleus_partition(profile, config.tau)
    n_high = round_half_up(config.ratio_high * config.sample_count)
    n_low = config.sample_count - n_high
    if n_high > high.size:
        n_low += n_high - high.size
        n_high = high.size
    if n_low > low.size:
        n_high += n_low - low.size
        n_low = low.size
    pick_h = high[weighted_sample_without_replacement(d[high], n_high, rng)]
    pick_l = low[weighted_sample_without_replacement(d[low], n_low, rng)]
    idx = np.concatenate([pick_h, pick_l])
    prov_map = {int(i): "high" for i in pick_h} | {int(i): "low" for i in pick_l}
    idx = np.sort(idx)
    return SampleSet(idx, tuple(prov_map[int(i)] for i in idx), config.seed)


def uniform_sample(T: int, count: int) -> np.ndarray:
    """Evenly spaced indices, the density-blind baseline."""
    if count >= T:
        return np.arange(T)
    return np.floor((np.arange(count) + 0.5) * T / count).astype(np.int64)


def write_samples(samples: SampleSet, path: str | Path) -> None:
    lines = ["index,provenance"] + [f"{i},{p}" for i, p in zip(samples.indices.tolist(), samples.provenance)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_samples(path: str | Path, seed: int = 0) -> SampleSet:
    idx, prov = [], []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("index"):
            continue
        i, p = line.split(",")
        if p not in ("high", "low"):
            raise ValueError(f"bad provenance {p!r}")
        idx.append(int(i))
        prov.append(p)
    return SampleSet(np.array(idx, dtype=np.int64), tuple(prov), seed)
