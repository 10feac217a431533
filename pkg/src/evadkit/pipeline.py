"""On-disk dataset layout shared by the CLI stages.

A dataset directory holds ``split.csv`` (``video,split``), ``encoder.json`` and
one sub-directory per video::

    features.bin       event-side features, real tensor (1, T, D)
    rgb_features.bin   RGB stand-in features, real tensor (1, T, D)
    timeline.csv       index,center_time_us,raw_count,density
    frame_labels.txt   one 0/1 per event frame (evaluation only)
    video_label.txt    single 0/1

Teacher outputs live in the teacher's training run directory under
``outputs/<video>/`` as ``teacher_scores.csv`` and ``teacher_logits.bin``.
"""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .distillation import KDConfig
from .evaluation import read_labels, read_scores, write_labels, write_scores
from .framing import read_real_tensor, write_real_tensor
from .trainer import TrainConfig, VideoSample


class MissingArtifactError(FileNotFoundError):
    """A declared stage input is absent; ``path`` names it."""

    def __init__(self, path: Path, what: str = "artifact"):
        super().__init__(f"missing {what}: {path}")
        self.path = Path(path)


def require(path: Path, what: str = "artifact") -> Path:
    if not Path(path).exists():
        raise MissingArtifactError(path, what)
    return Path(path)


def write_split(split: dict[str, str], path: Path) -> None:
    lines = ["video,split"] + [f"{v},{s}" for v, s in split.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_split(path: Path) -> dict[str, str]:
    out = {}
    for line in require(path, "split file").read_text().splitlines()[1:]:
        if line.strip():
            video, split = line.strip().split(",")
            if split not in ("train", "test"):
                raise ValueError(f"{path}: unknown split {split!r}")
            out[video] = split
    return out


def write_video(sample: VideoSample, out_dir: Path, raw_counts: np.ndarray) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    write_real_tensor(sample.features, out_dir / "features.bin")
    write_real_tensor(sample.clean_features, out_dir / "rgb_features.bin")
    lines = ["index,center_time_us,raw_count,density"]
    for i, (t, n, d) in enumerate(zip(sample.timestamps, raw_counts, sample.densities)):
        lines.append(f"{i},{int(t)},{int(n)},{float(d)!r}")
    (out_dir / "timeline.csv").write_text("\n".join(lines) + "\n")
    if sample.frame_labels is not None:
        write_labels(sample.frame_labels, out_dir / "frame_labels.txt")
    (out_dir / "video_label.txt").write_text(f"{sample.label}\n")


def read_video(video_dir: Path, name: str | None = None, teacher_dir: Path | None = None) -> VideoSample:
    video_dir = Path(video_dir)
    name = name or video_dir.name
    feats = read_real_tensor(require(video_dir / "features.bin", "features"))[0]
    rgb_path = video_dir / "rgb_features.bin"
    rgb = read_real_tensor(rgb_path)[0] if rgb_path.exists() else None
    rows = [line.split(",") for line in require(video_dir / "timeline.csv", "timeline").read_text().splitlines()[1:]
            if line.strip()]
    times = np.array([float(r[1]) for r in rows])
    dens = np.array([float(r[3]) for r in rows])
    labels_path = video_dir / "frame_labels.txt"
    labels = read_labels(labels_path) if labels_path.exists() else None
    label = int(require(video_dir / "video_label.txt", "video label").read_text().strip())
    t_scores = t_logits = None
    if teacher_dir is not None:
        tdir = Path(teacher_dir) / "outputs" / name
        t_scores = read_scores(require(tdir / "teacher_scores.csv", "teacher scores"))
        t_logits = read_real_tensor(require(tdir / "teacher_logits.bin", "teacher logits"))[0]
    return VideoSample(name, feats, times, dens, label, labels, t_scores, t_logits, rgb)


def read_dataset(data_dir: Path, split: str | None = None, teacher_dir: Path | None = None) -> list[VideoSample]:
    data_dir = Path(data_dir)
    assignment = read_split(data_dir / "split.csv")
    names = [v for v, s in assignment.items() if split is None or s == split]
    return [read_video(data_dir / v, v, teacher_dir) for v in names]


def write_teacher_outputs(out_dir: Path, name: str, scores: np.ndarray, logits: np.ndarray) -> None:
    d = Path(out_dir) / "outputs" / name
    d.mkdir(parents=True, exist_ok=True)
    write_scores(scores, d / "teacher_scores.csv")
    write_real_tensor(logits, d / "teacher_logits.bin")


def train_config(pc: PipelineConfig, *, sampler: str | None = None, kd_enabled: bool | None = None) -> TrainConfig:
    t = pc.train
    return TrainConfig(
        lr=t.lr, epochs=t.epochs, batch_size=t.batch_size, topk_fraction=t.topk_fraction,
        kd=KDConfig(pc.kd.alpha, pc.kd.beta, pc.kd.tau, pc.kd.eps_std),
        kd_enabled=t.kd_enabled if kd_enabled is None else kd_enabled,
        sampler=t.sampler if sampler is None else sampler,
        eds=replace(pc.eds), optimizer=t.optimizer, init_scale=t.init_scale, seed=pc.seed,
    )
