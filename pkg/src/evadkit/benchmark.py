"""The standard synthetic benchmark and the component ablation run on it."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .attention import EDAConfig
from .boxes import BoxSet
from .distillation import KDConfig
from .events import EventStream
from .features import FeatureEncoder, add_modality_noise, frame_descriptors
from .framing import BinningConfig, FrameSequence, frame_boxes, frame_labels, rasterize
from .sampling import EDSConfig
from .simulator import AnomalyInterval, MovingObject, SceneSpec, SimConfig, simulate
from .trainer import (EpochLog, ToyModel, TrainConfig, VideoSample, evaluate_auc, teacher_outputs,
                      tie_class_head, train)


@dataclass(frozen=True)
class BenchmarkConfig:
    n_train: int = 20
    n_test: int = 8
    seed: int = 7
    width: int = 32
    height: int = 32
    n_frames: int = 768
    anomaly_fraction: float = 0.5
    feature_dim: int = 16
    student_noise: float = 1.5
    teacher_noise: float = 0.0


@dataclass
class Video:
    name: str
    spec: SceneSpec
    stream: EventStream
    frames: FrameSequence
    labels: np.ndarray  # per event frame
    boxes: BoxSet  # per event frame ground truth
    descriptors: np.ndarray


def random_scene(rng: np.random.Generator, cfg: BenchmarkConfig, anomalous: bool, seed: int) -> SceneSpec:
    objects = []
    for _ in range(int(rng.integers(1, 4))):
        shape = "rectangle" if rng.random() < 0.6 else "disk"
        size = float(rng.uniform(5, 10))
        speed = float(rng.uniform(0.15, 0.5))
        angle = float(rng.uniform(0, 2 * np.pi))
        contrast = float(rng.uniform(1.8, 3.0) if rng.random() < 0.6 else rng.uniform(0.3, 0.55))
        if shape == "disk":
            x, y = (float(rng.uniform(size / 2, d - size / 2)) for d in (cfg.width, cfg.height))
        else:
            x, y = (float(rng.uniform(0, d - size)) for d in (cfg.width, cfg.height))
        objects.append(MovingObject(shape, x, y, size, size, float(speed * np.cos(angle)),
                                    float(speed * np.sin(angle)), contrast))
    anomalies = []
    if anomalous:
        length = int(rng.integers(48, 113))
        start = int(rng.integers(32, cfg.n_frames - length - 32))
        anomalies.append(AnomalyInterval(start, start + length, int(rng.integers(len(objects))),
                                         float(rng.uniform(2.5, 4.0))))
    return SceneSpec(cfg.width, cfg.height, cfg.n_frames, 100.0, seed, 80.0,
                     float(rng.uniform(0.05, 0.2)), objects, anomalies)


def build_video(name: str, spec: SceneSpec, sim: SimConfig | None = None,
                binning: BinningConfig | None = None) -> Video:
    stream, scene = simulate(spec, sim)
    frames = rasterize(stream, config=binning)
    labels = frame_labels(scene.labels, frames.windows)
    boxes = frame_boxes(scene.boxes, frames.windows, labels)
    return Video(name, spec, stream, frames, labels, boxes, frame_descriptors(frames))


def benchmark_scenes(cfg: BenchmarkConfig) -> dict[str, list[tuple[str, SceneSpec]]]:
    """Scene specs of the benchmark, keyed by split; fully determined by ``cfg.seed``."""
    rng = np.random.default_rng(cfg.seed)
    out = {}
    for split, n in (("train", cfg.n_train), ("test", cfg.n_test)):
        n_anom = int(round(n * cfg.anomaly_fraction))
        flags = np.array([True] * n_anom + [False] * (n - n_anom))
        rng.shuffle(flags)
        scenes = []
        for i, flag in enumerate(flags):
            seed = int(rng.integers(2**31))
            scenes.append((f"{split}_{i:03d}", random_scene(rng, cfg, bool(flag), seed)))
        out[split] = scenes
    return out


def build_videos(cfg: BenchmarkConfig, sim: SimConfig | None = None,
                 binning: BinningConfig | None = None) -> tuple[list[Video], list[Video]]:
    scenes = benchmark_scenes(cfg)
    return tuple([build_video(name, spec, sim, binning) for name, spec in scenes[split]]
                 for split in ("train", "test"))


def make_sample(name: str, descriptors: np.ndarray, raw_counts: np.ndarray, center_times: np.ndarray,
                labels: np.ndarray | None, encoder: FeatureEncoder, cfg: BenchmarkConfig,
                noise_seed: int) -> VideoSample:
    """Event-side (noisy) and RGB stand-in (clean) features for one video."""
    clean = encoder.encode(descriptors)
    student = add_modality_noise(clean, cfg.student_noise, noise_seed)
    rgb = add_modality_noise(clean, cfg.teacher_noise, noise_seed + 500) if cfg.teacher_noise > 0 else clean
    raw = np.asarray(raw_counts, dtype=np.float64)
    dens = raw / raw.sum() if raw.sum() > 0 else np.full(raw.size, 1.0 / raw.size)
    label = int(np.any(labels)) if labels is not None else 0
    return VideoSample(name, student, np.asarray(center_times, dtype=np.float64), dens, label,
                       labels, clean_features=rgb)


def noise_seed(cfg: BenchmarkConfig, split: str, index: int) -> int:
    return cfg.seed * 1000 + (0 if split == "train" else 100) + index


def to_samples(videos: list[Video], encoder: FeatureEncoder, cfg: BenchmarkConfig, split: str) -> list[VideoSample]:
    return [make_sample(v.name, v.descriptors, v.frames.raw_counts, v.frames.center_times, v.labels,
                        encoder, cfg, noise_seed(cfg, split, i)) for i, v in enumerate(videos)]


@dataclass
class Benchmark:
    config: BenchmarkConfig
    train_videos: list[Video]
    test_videos: list[Video]
    encoder: FeatureEncoder
    train: list[VideoSample]
    test: list[VideoSample]


def build_benchmark(cfg: BenchmarkConfig | None = None, sim: SimConfig | None = None,
                    binning: BinningConfig | None = None) -> Benchmark:
    cfg = cfg or BenchmarkConfig()
    train_v, test_v = build_videos(cfg, sim, binning)
    encoder = FeatureEncoder.fit([v.descriptors for v in train_v], cfg.feature_dim, cfg.seed)
    return Benchmark(cfg, train_v, test_v, encoder,
                     to_samples(train_v, encoder, cfg, "train"), to_samples(test_v, encoder, cfg, "test"))


# --- ablation ---------------------------------------------------------------

@dataclass(frozen=True)
class AblationConfig:
    lr: float = 0.2
    epochs: int = 20
    batch_size: int = 4
    topk_fraction: float = 1 / 16
    sample_count: int = 16
    eda: EDAConfig = EDAConfig(lam=1.0)
    kd: KDConfig = KDConfig(alpha=3.0)
    seed: int = 7


ABLATION_ROWS = {
    "baseline": dict(sampler="uniform", eda=False, kd=False),
    "+EDS": dict(sampler="eds", eda=False, kd=False),
    "+EDS+EDA": dict(sampler="eds", eda=True, kd=False),
    "+EDS+EDA+KD": dict(sampler="eds", eda=True, kd=True),
}


def train_config(ab: AblationConfig, sampler: str, kd: bool) -> TrainConfig:
    return TrainConfig(lr=ab.lr, epochs=ab.epochs, batch_size=ab.batch_size, topk_fraction=ab.topk_fraction,
                       kd=ab.kd, kd_enabled=kd, sampler=sampler,
                       eds=EDSConfig(sample_count=ab.sample_count, seed=ab.seed), seed=ab.seed)


def train_teacher(bench: Benchmark, ab: AblationConfig) -> ToyModel:
    """Teacher: same architecture trained on the clean features of every frame."""
    clean = [replace(v, features=v.clean_features) for v in bench.train]
    model, _ = train(clean, train_config(ab, "all", kd=False), eda=ab.eda)
    return tie_class_head(model)


def attach_teacher(videos: list[VideoSample], teacher: ToyModel) -> list[VideoSample]:
    out = []
    for v in videos:
        scores, logits = teacher_outputs(teacher, v)
        out.append(replace(v, teacher_scores=scores, teacher_logits=logits))
    return out


@dataclass
class AblationResult:
    auc: dict[str, float]
    logs: dict[str, list[EpochLog]]
    models: dict[str, ToyModel]
    teacher_auc: float


def run_ablation(bench: Benchmark, ab: AblationConfig | None = None) -> AblationResult:
    ab = ab or AblationConfig()
    teacher = train_teacher(bench, ab)
    teacher_auc = evaluate_auc(teacher, [replace(v, features=v.clean_features) for v in bench.test])
    taught = attach_teacher(bench.train, teacher)
    aucs, logs, models = {}, {}, {}
    for name, row in ABLATION_ROWS.items():
        cfg = train_config(ab, row["sampler"], row["kd"])
        model, log = train(taught, cfg, eval_set=bench.test, eda=ab.eda if row["eda"] else None)
        aucs[name] = evaluate_auc(model, bench.test)
        logs[name] = log
        models[name] = model
    return AblationResult(aucs, logs, models, teacher_auc)


def planted_rectangle_scene(seed: int = 3, anomalous: bool = True) -> SceneSpec:
    """A single bright rectangle that bursts to triple speed over frames [160, 320)."""
    anomalies = [AnomalyInterval(160, 320, 0, 3.0)] if anomalous else []
    return SceneSpec(64, 64, 512, 100.0, seed, 80.0, 0.1,
                     [MovingObject("rectangle", 10.0, 20.0, 12.0, 12.0, 0.3, 0.15, 2.5)], anomalies)
