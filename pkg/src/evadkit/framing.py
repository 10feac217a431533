"""Adaptive event-frame generation.

Windows are centred every ``stride_frames`` source frames and extend
``half_window_frames`` either side. Each window gets an event budget from the
sparsity coefficient ``sc = N_c / median``::

    budget = round(mean * mean_fraction + median / sc)

clamped to ``[1, event_cap]``. Windows over budget are stride-subsampled;
windows under budget borrow the temporally nearest events from neighbouring
time.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .boxes import Box, BoxSet
from .events import EventStream


@dataclass(frozen=True)
class BinningConfig:
    stride_frames: int = 16
    half_window_frames: int = 8
    mean_fraction: float = 0.1
    event_cap: int = 10000

    def __post_init__(self):
        if self.stride_frames < 1 or self.half_window_frames < 0:
            raise ValueError("stride must be >= 1 and half window >= 0")
        if not (0 < self.mean_fraction <= 1):
            raise ValueError("mean_fraction must be in (0, 1]")
        if self.event_cap < 1:
            raise ValueError("event_cap must be >= 1")


class Window(NamedTuple):
    start_us: int
    end_us: int
    center_us: int
    start_frame: int
    end_frame: int
    center_frame: int


@dataclass(frozen=True)
class EventFrame:
    counts: np.ndarray  # (H, W) event counts
    polarity: np.ndarray  # (H, W) signed polarity sums
    center_time_us: int
    window: tuple[int, int]
    raw_count: int
    rendered_count: int


@dataclass
class FrameSequence:
    counts: np.ndarray  # (T, H, W) int64
    polarity: np.ndarray  # (T, H, W) int64
    windows: list[Window]
    raw_counts: np.ndarray  # (T,)
    rendered_counts: np.ndarray  # (T,)
    budgets: np.ndarray  # (T,)
    mean_count: float
    median_count: float
    degenerate: bool = False  # median raw count was zero

    def __len__(self) -> int:
        return len(self.windows)

    def __getitem__(self, i: int) -> EventFrame:
        w = self.windows[i]
        return EventFrame(self.counts[i], self.polarity[i], w.center_us, (w.start_us, w.end_us),
                          int(self.raw_counts[i]), int(self.rendered_counts[i]))

    @property
    def center_times(self) -> np.ndarray:
        return np.array([w.center_us for w in self.windows], dtype=np.int64)


def _frame_us(frame: float, fps: float) -> int:
    return int(round(frame * 1e6 / fps))


def make_windows(stream: EventStream, config: BinningConfig | None = None) -> list[Window]:
    """Non-overlapping windows aligned to the source frame grid."""
    config = config or BinningConfig()
    if stream.source_fps <= 0:
        raise ValueError("source_fps must be positive")
    if stream.duration_us <= 0:
        raise ValueError("stream has empty duration")
    fps = stream.source_fps
    # durations are whole microseconds, so allow half a microsecond of rounding
    n_frames = max(1, math.ceil((stream.duration_us - 0.5) * fps / 1e6 - 1e-9))
    hw, stride = config.half_window_frames, config.stride_frames
    centers = list(range(hw, n_frames, stride))
    if not centers:
        centers = [min(hw, n_frames - 1)]
    spans = []
    for c in centers:
        spans.append([max(0, c - hw), min(n_frames, c + max(hw, 1))])
    for k in range(len(spans) - 1):
        spans[k][1] = min(spans[k][1], spans[k + 1][0])
    windows = []
    for c, (s, e) in zip(centers, spans):
        end_us = min(_frame_us(e, fps), stream.duration_us)
        windows.append(Window(_frame_us(s, fps), end_us, _frame_us(c, fps), s, e, c))
    return windows


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def event_budget(raw_count: int, mean: float, median: float,
                 config: BinningConfig | None = None) -> int:
    """Per-bin event count ``mean * mean_fraction + median**2 / raw_count``, clamped.

    A zero median marks a degenerate video; the budget then falls back to the
    mean term alone. An empty bin (``raw_count == 0``) gets the cap.
    """
    config = config or BinningConfig()
    if raw_count < 0:
        raise ValueError("raw_count must be non-negative")
    if median <= 0:
        budget = min(round_half_up(mean * config.mean_fraction), config.event_cap)
        return max(1, budget)
    if raw_count == 0:
        budget = config.event_cap
    else:
        sc = raw_count / median
        budget = round_half_up(mean * config.mean_fraction + median / sc)
    return int(min(max(budget, 1), config.event_cap))


def _borrow(t: np.ndarray, lo: int, hi: int, limit_lo: int, limit_hi: int, need: int) -> np.ndarray:
    """Indices of the ``need`` events nearest to ``[lo, hi)`` inside the extension limits."""
    left = np.arange(np.searchsorted(t, limit_lo, "left"), np.searchsorted(t, lo, "left"))
    right = np.arange(np.searchsorted(t, hi, "left"), np.searchsorted(t, limit_hi, "left"))
    if left.size + right.size <= need:
        return np.concatenate([left, right])
    dist = np.concatenate([lo - t[left], t[right] - (hi - 1)])
    cand = np.concatenate([left, right])
    order = np.lexsort((t[cand], dist))  # nearest first, earlier time on ties
    return np.sort(cand[order[:need]])


def rasterize(stream: EventStream, windows: list[Window] | None = None,
              config: BinningConfig | None = None) -> FrameSequence:
    config = config or BinningConfig()
    if windows is None:
        windows = make_windows(stream, config)
    t = stream.t
    bounds = [(int(np.searchsorted(t, w.start_us, "left")), int(np.searchsorted(t, w.end_us, "left")))
              for w in windows]
    raw = np.array([b - a for a, b in bounds], dtype=np.int64)
    mean = float(raw.mean()) if raw.size else 0.0
    median = float(np.median(raw)) if raw.size else 0.0
    fps = stream.source_fps
    h, w_ = stream.height, stream.width
    T = len(windows)
    counts = np.zeros((T, h, w_), dtype=np.int64)
    pol = np.zeros((T, h, w_), dtype=np.int64)
    rendered = np.zeros(T, dtype=np.int64)
    budgets = np.zeros(T, dtype=np.int64)
    stride = config.stride_frames
    for k, (win, (a, b)) in enumerate(zip(windows, bounds)):
        n = int(raw[k])
        budget = event_budget(n, mean, median, config)
        budgets[k] = budget
        if n > budget:
            idx = a + np.floor(np.arange(budget) * (n / budget)).astype(np.int64)
        elif n < budget:
            prev_c = windows[k - 1].center_frame if k > 0 else win.center_frame - stride
            next_c = windows[k + 1].center_frame if k + 1 < T else win.center_frame + stride
            lim_lo = max(0, _frame_us((win.start_frame + prev_c) / 2, fps))
            lim_hi = min(stream.duration_us + 1, _frame_us((win.end_frame + next_c) / 2, fps))
            lim_lo = min(lim_lo, win.start_us)
            lim_hi = max(lim_hi, win.end_us)
            extra = _borrow(t, win.start_us, win.end_us, lim_lo, lim_hi, budget - n)
            idx = np.sort(np.concatenate([np.arange(a, b), extra])).astype(np.int64)
        else:
            idx = np.arange(a, b)
        rendered[k] = idx.size
        if idx.size:
            flat = stream.y[idx] * w_ + stream.x[idx]
            counts[k] = np.bincount(flat, minlength=h * w_).reshape(h, w_)
            pol[k] = np.bincount(flat, weights=stream.p[idx].astype(np.float64),
                                 minlength=h * w_).astype(np.int64).reshape(h, w_)
    return FrameSequence(counts, pol, list(windows), raw, rendered, budgets, mean, median,
                         degenerate=median <= 0)


def accumulate(stream: EventStream, windows: list[Window]) -> FrameSequence:
    """Plain accumulation of every event in each window, no budget applied."""
    t = stream.t
    h, w_ = stream.height, stream.width
    T = len(windows)
    counts = np.zeros((T, h, w_), dtype=np.int64)
    pol = np.zeros((T, h, w_), dtype=np.int64)
    raw = np.zeros(T, dtype=np.int64)
    for k, win in enumerate(windows):
        a, b = np.searchsorted(t, win.start_us, "left"), np.searchsorted(t, win.end_us, "left")
        raw[k] = b - a
        if b > a:
            flat = stream.y[a:b] * w_ + stream.x[a:b]
            counts[k] = np.bincount(flat, minlength=h * w_).reshape(h, w_)
            pol[k] = np.bincount(flat, weights=stream.p[a:b].astype(np.float64),
                                 minlength=h * w_).astype(np.int64).reshape(h, w_)
    mean = float(raw.mean()) if T else 0.0
    median = float(np.median(raw)) if T else 0.0
    return FrameSequence(counts, pol, list(windows), raw, raw.copy(), raw.copy(), mean, median,
                         degenerate=median <= 0)


def frame_labels(source_labels: np.ndarray, windows: list[Window]) -> np.ndarray:
    """An event frame inherits the label of its centre source frame."""
    source_labels = np.asarray(source_labels)
    return np.array([int(source_labels[min(w.center_frame, len(source_labels) - 1)]) for w in windows],
                    dtype=np.int64)


def frame_boxes(source_boxes: BoxSet, windows: list[Window], labels: np.ndarray | None = None) -> BoxSet:
    """Ground truth for event frames: union of the source-frame boxes inside each window."""
    out: BoxSet = {}
    for k, w in enumerate(windows):
        if labels is not None and not labels[k]:
            continue
        merged: Box | None = None
        for f in range(w.start_frame, w.end_frame):
            for b in source_boxes.get(f, []):
                merged = b if merged is None else merged.union(b)
        if merged is not None:
            out[k] = [merged]
    return out


# --- export -----------------------------------------------------------------

_DIMS = struct.Struct("<III")


def write_frame_tensor(frames: FrameSequence, path: str | Path) -> None:
    """Header ``u32 T, u32 H, u32 W``; payload u32 counts then i32 polarity sums."""
    T, H, W = frames.counts.shape
    with open(path, "wb") as fh:
        fh.write(_DIMS.pack(T, H, W))
        fh.write(frames.counts.astype("<u4").tobytes())
        fh.write(frames.polarity.astype("<i4").tobytes())


def read_frame_tensor(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    data = Path(path).read_bytes()
    T, H, W = _DIMS.unpack_from(data, 0)
    n = T * H * W
    if len(data) != _DIMS.size + 8 * n:
        raise ValueError(f"{path}: size does not match header {T}x{H}x{W}")
    counts = np.frombuffer(data, "<u4", n, _DIMS.size).reshape(T, H, W).astype(np.int64)
    pol = np.frombuffer(data, "<i4", n, _DIMS.size + 4 * n).reshape(T, H, W).astype(np.int64)
    return counts, pol


def write_real_tensor(array: np.ndarray, path: str | Path) -> None:
    """Real-valued companion of the frame tensor: same header, f64 payload.

    2-D arrays are stored with ``T = 1``.
    """
    a = np.asarray(array, dtype="<f8")
    if a.ndim == 2:
        a = a[None]
    if a.ndim != 3:
        raise ValueError("expected a 2-D or 3-D array")
    with open(path, "wb") as fh:
        fh.write(_DIMS.pack(*a.shape))
        fh.write(a.tobytes())


def read_real_tensor(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    dims = _DIMS.unpack_from(data, 0)
    n = dims[0] * dims[1] * dims[2]
    if len(data) != _DIMS.size + 8 * n:
        raise ValueError(f"{path}: size does not match header {dims}")
    return np.frombuffer(data, "<f8", n, _DIMS.size).reshape(dims).copy()


def write_pgm(image: np.ndarray, path: str | Path) -> None:
    img = np.clip(np.asarray(image), 0, 255).astype(np.uint8)
    h, w = img.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + img.tobytes())


def read_pgm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM")
    w, h = int(parts[1]), int(parts[2])
    return np.frombuffer(parts[4][: w * h], dtype=np.uint8).reshape(h, w)


def write_frame_table(frames: FrameSequence, path: str | Path) -> None:
    lines = ["index,center_time_us,start_us,end_us,raw_count,rendered_count,budget"]
    for k, w in enumerate(frames.windows):
        lines.append(f"{k},{w.center_us},{w.start_us},{w.end_us},{frames.raw_counts[k]},"
                     f"{frames.rendered_counts[k]},{frames.budgets[k]}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_frame_table(path: str | Path) -> dict[str, np.ndarray]:
    rows = [line.split(",") for line in Path(path).read_text().splitlines()[1:] if line.strip()]
    cols = ["index", "center_time_us", "start_us", "end_us", "raw_count", "rendered_count", "budget"]
    arr = np.array(rows, dtype=np.int64).reshape(-1, len(cols))
    return {c: arr[:, i] for i, c in enumerate(cols)}


def export_frames(frames: FrameSequence, out_dir: str | Path, images: bool = True) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_frame_tensor(frames, out / "frames.bin")
    write_frame_table(frames, out / "frames.csv")
    if images:
        img_dir = out / "pgm"
        img_dir.mkdir(exist_ok=True)
        for k in range(len(frames)):
            write_pgm(frames.counts[k], img_dir / f"frame_{k:05d}.pgm")
