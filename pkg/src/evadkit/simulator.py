"""Synthetic scenes and a per-pixel log-intensity threshold event model.

A scene is a smooth random background with a few moving rectangles or disks.
Anomalies are planted by multiplying one object's velocity over a frame
interval; the object's box on those frames is the spatial ground truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .boxes import Box, BoxSet
from .events import EventStream

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib


@dataclass
class MovingObject:
    shape: str = "rectangle"  # "rectangle" | "disk"
    x: float = 0.0  # top-left corner (rectangle) or centre (disk)
    y: float = 0.0
    width: float = 8.0  # disk: diameter
    height: float = 8.0
    vx: float = 0.5  # px / frame
    vy: float = 0.0
    contrast: float = 2.5  # object intensity / background level


@dataclass
class AnomalyInterval:
    start: int
    end: int  # exclusive
    object_id: int = 0
    multiplier: float = 4.0


@dataclass
class SceneSpec:
    width: int = 32
    height: int = 32
    n_frames: int = 256
    fps: float = 100.0
    seed: int = 0
    background_level: float = 80.0
    background_contrast: float = 0.15
    objects: list[MovingObject] = field(default_factory=list)
    anomalies: list[AnomalyInterval] = field(default_factory=list)

    def validate(self) -> None:
        if self.width < 1 or self.height < 1 or self.n_frames < 1 or self.fps <= 0:
            raise ValueError("scene geometry, frame count and fps must be positive")
        for a in self.anomalies:
            if not (0 <= a.start < a.end <= self.n_frames):
                raise ValueError(f"anomaly interval [{a.start}, {a.end}) outside {self.n_frames} frames")
            if a.multiplier <= 1:
                raise ValueError("anomaly velocity multiplier must exceed 1")
            if not (0 <= a.object_id < len(self.objects)):
                raise ValueError(f"anomaly refers to missing object {a.object_id}")
        for o in self.objects:
            if o.shape not in ("rectangle", "disk"):
                raise ValueError(f"unknown shape {o.shape!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SimConfig:
    threshold: float = 0.15  # log-intensity units, ON and OFF alike
    threshold_noise: float = 0.03
    jitter: bool = False
    intensity_floor: float = 1.0

    def __post_init__(self):
        if self.threshold <= 0:
            raise ValueError("threshold must be positive")


@dataclass
class RenderedScene:
    frames: np.ndarray  # (N, H, W) float64 intensities
    labels: np.ndarray  # (N,) 0/1
    boxes: BoxSet  # ground truth per anomalous source frame


def load_scene(path: str | Path) -> SceneSpec:
    """Read a TOML scene description (top-level keys plus ``[[objects]]`` / ``[[anomalies]]``)."""
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    return scene_from_dict(raw)


def scene_from_dict(raw: dict) -> SceneSpec:
    raw = dict(raw)
    objects = [MovingObject(**o) for o in raw.pop("objects", [])]
    anomalies = [AnomalyInterval(**a) for a in raw.pop("anomalies", [])]
    if "frames" in raw:
        raw["n_frames"] = raw.pop("frames")
    spec = SceneSpec(**raw, objects=objects, anomalies=anomalies)
    spec.validate()
    return spec


def dump_scene(spec: SceneSpec) -> str:
    """TOML text that :func:`load_scene` reads back into an equal spec."""
    def fmt(v):
        if isinstance(v, str):
            return f'"{v}"'
        return repr(v)

    lines = []
    for key in ("width", "height", "n_frames", "fps", "seed", "background_level", "background_contrast"):
        lines.append(f"{key} = {fmt(getattr(spec, key))}")
    for o in spec.objects:
        lines.append("\n[[objects]]")
        lines += [f"{k} = {fmt(v)}" for k, v in asdict(o).items()]
    for a in spec.anomalies:
        lines.append("\n[[anomalies]]")
        lines += [f"{k} = {fmt(v)}" for k, v in asdict(a).items()]
    return "\n".join(lines) + "\n"


def _background(spec: SceneSpec, rng: np.random.Generator) -> np.ndarray:
    # low-frequency texture: bilinear upsampling of a coarse random grid
    h, w = spec.height, spec.width
    coarse = rng.uniform(-1.0, 1.0, size=(h // 8 + 2, w // 8 + 2))
    yy = np.linspace(0, coarse.shape[0] - 1.001, h)
    xx = np.linspace(0, coarse.shape[1] - 1.001, w)
    y0, x0 = np.floor(yy).astype(int), np.floor(xx).astype(int)
    fy, fx = (yy - y0)[:, None], (xx - x0)[None, :]
    c = coarse
    tex = ((1 - fy) * (1 - fx) * c[np.ix_(y0, x0)] + (1 - fy) * fx * c[np.ix_(y0, x0 + 1)]
           + fy * (1 - fx) * c[np.ix_(y0 + 1, x0)] + fy * fx * c[np.ix_(y0 + 1, x0 + 1)])
    return spec.background_level * (1.0 + spec.background_contrast * tex)


def _trajectory(obj: MovingObject, spec: SceneSpec) -> np.ndarray:
    """Per-frame (x, y) positions; the object bounces off the sensor borders."""
    mult = np.ones(spec.n_frames)
    for a in spec.anomalies:
        if spec.objects[a.object_id] is obj:
            mult[a.start:a.end] = np.maximum(mult[a.start:a.end], a.multiplier)
    if obj.shape == "disk":
        lo = np.array([obj.width / 2, obj.width / 2])
        hi = np.array([spec.width - obj.width / 2, spec.height - obj.width / 2])
    else:
        lo = np.zeros(2)
        hi = np.array([spec.width - obj.width, spec.height - obj.height])
    pos = np.empty((spec.n_frames, 2))
    p = np.array([obj.x, obj.y], dtype=float)
    v = np.array([obj.vx, obj.vy], dtype=float)
    for f in range(spec.n_frames):
        pos[f] = p
        p = p + v * mult[f]
        for k in range(2):
            if hi[k] <= lo[k]:
                p[k] = lo[k]
                continue
            while p[k] < lo[k] or p[k] > hi[k]:
                if p[k] < lo[k]:
                    p[k] = 2 * lo[k] - p[k]
                else:
                    p[k] = 2 * hi[k] - p[k]
                v[k] = -v[k]
    return pos


def _coverage_1d(lo: float, hi: float, n: int) -> np.ndarray:
    edges = np.arange(n + 1, dtype=float)
    return np.clip(np.minimum(edges[1:], hi) - np.maximum(edges[:-1], lo), 0.0, 1.0)


def _coverage(obj: MovingObject, x: float, y: float, spec: SceneSpec) -> np.ndarray:
    if obj.shape == "rectangle":
        cx = _coverage_1d(x, x + obj.width, spec.width)
        cy = _coverage_1d(y, y + obj.height, spec.height)
        return cy[:, None] * cx[None, :]
    # disk: 4x4 supersampling
    s = 4
    off = (np.arange(s) + 0.5) / s
    px = (np.arange(spec.width)[:, None] + off[None, :]).ravel()
    py = (np.arange(spec.height)[:, None] + off[None, :]).ravel()
    inside = (px[None, :] - x) ** 2 + (py[:, None] - y) ** 2 <= (obj.width / 2) ** 2
    return inside.reshape(spec.height, s, spec.width, s).mean(axis=(1, 3))


def object_box(obj: MovingObject, x: float, y: float, spec: SceneSpec) -> Box:
    if obj.shape == "disk":
        r = obj.width / 2
        x0, y0, x1, y1 = x - r, y - r, x + r, y + r
    else:
        x0, y0, x1, y1 = x, y, x + obj.width, y + obj.height
    return Box(max(0, math.floor(x0)), max(0, math.floor(y0)),
               min(spec.width, math.ceil(x1)), min(spec.height, math.ceil(y1)))


def render_scene(spec: SceneSpec) -> RenderedScene:
    """Intensity frames, per-frame anomaly labels and ground-truth boxes."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    bg = _background(spec, rng)
    frames = np.repeat(bg[None], spec.n_frames, axis=0)
    paths = [_trajectory(o, spec) for o in spec.objects]
    for obj, path in zip(spec.objects, paths):
        level = spec.background_level * obj.contrast
        for f in range(spec.n_frames):
            cov = _coverage(obj, path[f, 0], path[f, 1], spec)
            frames[f] = frames[f] * (1.0 - cov) + level * cov
    labels = np.zeros(spec.n_frames, dtype=np.int64)
    boxes: BoxSet = {}
    for a in spec.anomalies:
        labels[a.start:a.end] = 1
        obj, path = spec.objects[a.object_id], paths[a.object_id]
        for f in range(a.start, a.end):
            b = object_box(obj, path[f, 0], path[f, 1], spec)
            if b not in boxes.setdefault(f, []):
                boxes[f].append(b)
    return RenderedScene(frames, labels, boxes)


def frame_times_us(n_frames: int, fps: float) -> np.ndarray:
    return np.rint(np.arange(n_frames + 1) * 1e6 / fps).astype(np.int64)


def frames_to_events(frames: np.ndarray, config: SimConfig | None = None, seed: int = 0,
                     fps: float = 100.0) -> EventStream:
    """Emit floor(|d log I| / threshold) events per pixel between consecutive frames.

    Events of one frame pair are spread evenly over that pair's interval
    ``[t_f, t_{f+1})``. With ``config.jitter`` each emission draws its own
    threshold from N(threshold, threshold_noise), clamped positive.
    """
    config = config or SimConfig()
    frames = np.asarray(frames, dtype=float)
    if frames.ndim != 3 or frames.shape[0] < 2:
        raise ValueError("need at least two frames of shape (N, H, W)")
    if np.any(frames < 0):
        raise ValueError("intensities must be non-negative")
    n, h, w = frames.shape
    rng = np.random.default_rng(seed)
    times = frame_times_us(n, fps)
    log_i = np.log(np.maximum(frames, config.intensity_floor))
    ts, xs, ys, ps = [], [], [], []
    for f in range(n - 1):
        delta = (log_i[f + 1] - log_i[f]).ravel()
        mag = np.abs(delta)
        if config.jitter:
            counts = _jittered_counts(mag, config, rng)
        else:
            counts = np.floor(mag / config.threshold).astype(np.int64)
        active = np.flatnonzero(counts)
        if active.size == 0:
            continue
        c = counts[active]
        pix = np.repeat(active, c)
        # k-th emission of a pixel with c events sits at (k + 1/2) / c of the interval
        k = np.arange(pix.size) - np.repeat(np.cumsum(c) - c, c)
        cc = np.repeat(c, c)
        span = times[f + 1] - times[f]
        t = times[f] + np.floor((2 * k + 1) * span / (2 * cc)).astype(np.int64)
        order = np.lexsort((pix, t))
        ts.append(t[order])
        xs.append((pix % w)[order])
        ys.append((pix // w)[order])
        ps.append(np.sign(delta[pix]).astype(np.int8)[order])
    if not ts:
        return EventStream.empty(w, h, int(times[-1]), fps)
    return EventStream(np.concatenate(ts), np.concatenate(xs), np.concatenate(ys),
                       np.concatenate(ps), w, h, int(times[-1]), fps)


def _jittered_counts(mag: np.ndarray, config: SimConfig, rng: np.random.Generator) -> np.ndarray:
    counts = np.zeros(mag.shape, dtype=np.int64)
    remaining = mag.copy()
    live = np.flatnonzero(remaining >= config.threshold - 6 * config.threshold_noise)
    floor = 1e-3 * config.threshold
    while live.size:
        th = np.maximum(config.threshold + config.threshold_noise * rng.standard_normal(live.size), floor)
        fire = remaining[live] >= th
        idx = live[fire]
        counts[idx] += 1
        remaining[idx] -= th[fire]
        live = idx
    return counts


def simulate(spec: SceneSpec, config: SimConfig | None = None) -> tuple[EventStream, RenderedScene]:
    scene = render_scene(spec)
    stream = frames_to_events(scene.frames, config, seed=spec.seed, fps=spec.fps)
    return stream, scene
