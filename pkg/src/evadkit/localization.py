"""Training-free spatial localization on event maps.

For frames whose anomaly score passes a threshold: binarize the count map,
clean it with a morphological open then close, and box every 8-connected
component that is large enough.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .boxes import Box, BoxSet
from .framing import EventFrame, FrameSequence

_EIGHT = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class LocalizeConfig:
    score_threshold: float = 0.5
    threshold_mode: str = "fraction"  # "fraction" of the max count, or "absolute"
    threshold: float = 0.5
    kernel_size: int = 3
    min_area: int = 9
    use_polarity_magnitude: bool = False

    def __post_init__(self):
        if self.threshold_mode not in ("fraction", "absolute"):
            raise ValueError(f"unknown threshold mode {self.threshold_mode!r}")
        if self.threshold_mode == "fraction" and not (0 < self.threshold <= 1):
            raise ValueError("fraction threshold must lie in (0, 1]")
        if self.threshold_mode == "absolute" and self.threshold <= 0:
            raise ValueError("absolute threshold must be positive")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError("kernel size must be odd")
        if self.min_area < 0:
            raise ValueError("min_area must be non-negative")


def _event_map(frame: EventFrame | np.ndarray, config: LocalizeConfig) -> np.ndarray:
    if isinstance(frame, EventFrame):
        return np.abs(frame.polarity) if config.use_polarity_magnitude else frame.counts
    return np.asarray(frame)


def binarize(frame: EventFrame | np.ndarray, config: LocalizeConfig | None = None) -> np.ndarray:
    config = config or LocalizeConfig()
    grid = _event_map(frame, config)
    peak = grid.max() if grid.size else 0
    if peak <= 0:
        return np.zeros(grid.shape, dtype=bool)
    if config.threshold_mode == "fraction":
        level = config.threshold * peak
    else:
        level = config.threshold
    return grid >= level


def _kernel(config: LocalizeConfig) -> np.ndarray:
    return np.ones((config.kernel_size, config.kernel_size), dtype=bool)


def _padded(op, mask: np.ndarray, config: LocalizeConfig | None) -> np.ndarray:
    # pad so that operations see an unbounded background plane rather than the array edge
    config = config or LocalizeConfig()
    r = config.kernel_size // 2
    m = np.pad(np.asarray(mask, dtype=bool), r)
    out = op(m, _kernel(config))
    return out[r:r + mask.shape[0], r:r + mask.shape[1]]


def open_mask(mask: np.ndarray, config: LocalizeConfig | None = None) -> np.ndarray:
    """Erosion then dilation: removes specks thinner than the kernel."""
    def op(m, k):
        return ndimage.binary_dilation(ndimage.binary_erosion(m, k, border_value=0), k, border_value=0)
    return _padded(op, mask, config)


def close_mask(mask: np.ndarray, config: LocalizeConfig | None = None) -> np.ndarray:
    """Dilation then erosion: fills gaps smaller than the kernel."""
    def op(m, k):
        return ndimage.binary_erosion(ndimage.binary_dilation(m, k, border_value=0), k, border_value=0)
    return _padded(op, mask, config)


def morph_refine(mask: np.ndarray, config: LocalizeConfig | None = None) -> np.ndarray:
    """Open then close with a square kernel; outside the image counts as background."""
    return close_mask(open_mask(mask, config), config)


def extract_boxes(mask: np.ndarray, config: LocalizeConfig | None = None) -> list[Box]:
    config = config or LocalizeConfig()
    labels, n = ndimage.label(np.asarray(mask, dtype=bool), structure=_EIGHT)
    if n == 0:
        return []
    areas = np.bincount(labels.ravel(), minlength=n + 1)
    boxes = []
    for lab, sl in enumerate(ndimage.find_objects(labels), start=1):
        if sl is None or areas[lab] < config.min_area:
            continue
        ys, xs = sl
        boxes.append(Box(xs.start, ys.start, xs.stop, ys.stop))
    boxes.sort(key=lambda b: (-b.area, b))
    return boxes


def localize_frame(frame: EventFrame | np.ndarray, config: LocalizeConfig | None = None) -> list[Box]:
    config = config or LocalizeConfig()
    return extract_boxes(morph_refine(binarize(frame, config), config), config)


def localize_video(frames: FrameSequence, scores, config: LocalizeConfig | None = None) -> BoxSet:
    config = config or LocalizeConfig()
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != (len(frames),):
        raise ValueError(f"{scores.size} scores for {len(frames)} frames")
    out: BoxSet = {}
    for i in np.flatnonzero(scores >= config.score_threshold):
        boxes = localize_frame(frames[int(i)], config)
        if boxes:
            out[int(i)] = boxes
    return out
