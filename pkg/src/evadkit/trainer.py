"""Toy event-side student: EDA temporal layer, sigmoid score head, class head.

The objective per video is ``L_mil + alpha * L_bin + beta * L_multi`` with
hand-written gradients. Training is plain gradient descent by default, with
Adam available behind the config.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .attention import EDAConfig, apply_eda, sequence_weights
from .distillation import KDConfig, kd_binary, kd_multiclass
from .evaluation import auc
from .sampling import EDSConfig, density_from_counts, eds_sample, uniform_sample

BCE_CLIP = 1e-12


@dataclass
class ToyModel:
    w_bin: np.ndarray  # (D,)
    b_bin: float
    w_cls: np.ndarray  # (D, K)
    b_cls: np.ndarray  # (K,)
    eda: EDAConfig | None = field(default_factory=EDAConfig)  # None disables the temporal layer

    @classmethod
    def init(cls, dim: int, n_classes: int = 2, seed: int = 0, scale: float = 0.01,
             eda: EDAConfig | None = EDAConfig()) -> "ToyModel":
        rng = np.random.default_rng(seed)
        return cls(scale * rng.standard_normal(dim), 0.0,
                   scale * rng.standard_normal((dim, n_classes)), np.zeros(n_classes), eda)

    def params(self) -> dict[str, np.ndarray]:
        return {"w_bin": self.w_bin, "b_bin": np.array([self.b_bin]),
                "w_cls": self.w_cls, "b_cls": self.b_cls}

    def with_params(self, p: dict[str, np.ndarray]) -> "ToyModel":
        return replace(self, w_bin=p["w_bin"].copy(), b_bin=float(p["b_bin"][0]),
                       w_cls=p["w_cls"].copy(), b_cls=p["b_cls"].copy())

    def to_dict(self) -> dict:
        return {
            "w_bin": self.w_bin.tolist(), "b_bin": self.b_bin,
            "w_cls": self.w_cls.tolist(), "b_cls": self.b_cls.tolist(),
            "eda": None if self.eda is None else {"lam": self.eda.lam, "eps": self.eda.eps,
                                                  "residual": self.eda.residual},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ToyModel":
        eda = None if d.get("eda") is None else EDAConfig(**d["eda"])
        return cls(np.array(d["w_bin"], dtype=float), float(d["b_bin"]),
                   np.array(d["w_cls"], dtype=float), np.array(d["b_cls"], dtype=float), eda)


@dataclass
class InferenceInput:
    """What the student sees at test time: no teacher fields exist here."""
    features: np.ndarray  # (T, D)
    timestamps: np.ndarray  # (T,) microseconds
    densities: np.ndarray  # (T,)


@dataclass
class VideoSample:
    name: str
    features: np.ndarray  # (T, D) event-side features
    timestamps: np.ndarray
    densities: np.ndarray
    label: int  # video-level
    frame_labels: np.ndarray | None = None  # evaluation only
    teacher_scores: np.ndarray | None = None
    teacher_logits: np.ndarray | None = None
    clean_features: np.ndarray | None = None  # RGB stand-in the teacher is trained on

    def __post_init__(self):
        T = self.features.shape[0]
        if self.timestamps.shape != (T,) or self.densities.shape != (T,):
            raise ValueError(f"{self.name}: timestamps/densities do not match {T} frames")
        if self.teacher_scores is not None:
            ts = np.asarray(self.teacher_scores)
            if ts.shape != (T,) or np.any((ts < 0) | (ts > 1)):
                raise ValueError(f"{self.name}: teacher scores must be {T} values in [0, 1]")

    def inference_input(self) -> InferenceInput:
        return InferenceInput(self.features, self.timestamps, self.densities)

    def subset(self, idx: np.ndarray) -> "VideoSample":
        pick = lambda a: None if a is None else np.asarray(a)[idx]
        return VideoSample(self.name, self.features[idx], self.timestamps[idx], self.densities[idx],
                           self.label, pick(self.frame_labels), pick(self.teacher_scores),
                           pick(self.teacher_logits), pick(self.clean_features))


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 2e-5
    epochs: int = 10
    batch_size: int = 128
    topk_fraction: float = 1 / 16
    kd: KDConfig = KDConfig()
    kd_enabled: bool = True
    sampler: str = "eds"  # "eds" | "uniform" | "all"
    eds: EDSConfig = EDSConfig()
    optimizer: str = "sgd"  # "sgd" | "adam"
    init_scale: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise ValueError("lr must be positive, epochs and batch size at least 1")
        if self.sampler not in ("eds", "uniform", "all"):
            raise ValueError(f"unknown sampler {self.sampler!r}")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    @property
    def uses_teacher(self) -> bool:
        return self.kd_enabled and (self.kd.alpha > 0 or self.kd.beta > 0)


class MissingTeacherError(ValueError):
    pass


def sigmoid(u: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * u))


def _hidden(model: ToyModel, x: np.ndarray, timestamps, densities) -> np.ndarray:
    if model.eda is None:
        return np.asarray(x, dtype=np.float64)
    w = sequence_weights(timestamps, densities, model.eda)
    return apply_eda(x, w, residual=model.eda.residual)


def forward(model: ToyModel, features, timestamps, densities) -> tuple[np.ndarray, np.ndarray]:
    """Frame scores in [0, 1] and class logits for one sequence."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.w_bin.size:
        raise ValueError(f"features {x.shape} do not match model dimension {model.w_bin.size}")
    h = _hidden(model, x, timestamps, densities)
    return sigmoid(h @ model.w_bin + model.b_bin), h @ model.w_cls + model.b_cls


def infer(model: ToyModel, data: InferenceInput) -> np.ndarray:
    return forward(model, data.features, data.timestamps, data.densities)[0]


def topk_indices(scores: np.ndarray, fraction: float) -> np.ndarray:
    k = max(1, math.ceil(scores.size * fraction))
    order = np.lexsort((np.arange(scores.size), -scores))
    return order[:k]


def mil_loss(scores, video_label: int, topk_fraction: float = 1 / 16) -> tuple[float, np.ndarray]:
    """BCE of the top-k mean score against the video label, and d loss / d scores."""
    s = np.asarray(scores, dtype=np.float64)
    top = topk_indices(s, topk_fraction)
    v = s[top].mean()
    vc = min(max(v, BCE_CLIP), 1.0 - BCE_CLIP)
    y = float(video_label)
    loss = -(y * math.log(vc) + (1.0 - y) * math.log(1.0 - vc))
    grad = np.zeros_like(s)
    if BCE_CLIP < v < 1.0 - BCE_CLIP:
        dv = -y / vc + (1.0 - y) / (1.0 - vc)
        grad[top] = dv / top.size
    return float(loss), grad


def video_objective(model: ToyModel, video: VideoSample, config: TrainConfig):
    """Loss terms and parameter gradients for one (already sampled) video."""
    x = np.asarray(video.features, dtype=np.float64)
    h = _hidden(model, x, video.timestamps, video.densities)
    u = h @ model.w_bin + model.b_bin
    s = sigmoid(u)
    z = h @ model.w_cls + model.b_cls
    l_mil, g_s = mil_loss(s, video.label, config.topk_fraction)
    l_bin = l_multi = 0.0
    g_z = np.zeros_like(z)
    if config.uses_teacher:
        if video.teacher_scores is None or video.teacher_logits is None:
            raise MissingTeacherError(f"{video.name}: teacher outputs required for distillation")
        l_bin, gb = kd_binary(s, video.teacher_scores)
        l_multi, gm = kd_multiclass(z, video.teacher_logits, config.kd)
        g_s = g_s + config.kd.alpha * gb
        g_z = config.kd.beta * gm
    g_u = g_s * s * (1.0 - s)
    grads = {"w_bin": h.T @ g_u, "b_bin": np.array([g_u.sum()]),
             "w_cls": h.T @ g_z, "b_cls": g_z.sum(axis=0)}
    total = l_mil + config.kd.alpha * l_bin + config.kd.beta * l_multi if config.uses_teacher else l_mil
    return {"loss": total, "loss_mil": l_mil, "loss_bin": l_bin, "loss_multi": l_multi}, grads


def sample_indices(video: VideoSample, config: TrainConfig, epoch: int, video_index: int) -> np.ndarray:
    T = video.features.shape[0]
    if config.sampler == "all" or config.eds.sample_count >= T:
        return np.arange(T)
    if config.sampler == "uniform":
        return uniform_sample(T, config.eds.sample_count)
    seed = int(np.random.SeedSequence([config.eds.seed, config.seed, epoch, video_index]).generate_state(1)[0])
    prof = density_from_counts(video.densities)
    return eds_sample(prof, replace(config.eds, seed=seed)).indices


def _adam_state(params):
    return {k: (np.zeros_like(v), np.zeros_like(v)) for k, v in params.items()}


def evaluate_auc(model: ToyModel, videos: Sequence[VideoSample]) -> float:
    scores, labels = [], []
    for v in videos:
        if v.frame_labels is None:
            raise ValueError(f"{v.name}: frame labels needed for evaluation")
        scores.append(infer(model, v.inference_input()))
        labels.append(v.frame_labels)
    return auc(np.concatenate(scores), np.concatenate(labels))


@dataclass
class EpochLog:
    epoch: int
    loss_mil: float
    loss_bin: float
    loss_multi: float
    auc: float


def train(dataset: Sequence[VideoSample], config: TrainConfig, eval_set: Sequence[VideoSample] | None = None,
          model: ToyModel | None = None, eda: EDAConfig | None = EDAConfig(),
          n_classes: int | None = None) -> tuple[ToyModel, list[EpochLog]]:
    if not dataset:
        raise ValueError("empty training set")
    if config.uses_teacher:
        for v in dataset:
            if v.teacher_scores is None or v.teacher_logits is None:
                raise MissingTeacherError(f"{v.name}: teacher outputs required for distillation")
    dim = dataset[0].features.shape[1]
    if n_classes is None:
        n_classes = dataset[0].teacher_logits.shape[1] if dataset[0].teacher_logits is not None else 2
    if model is None:
        model = ToyModel.init(dim, n_classes, seed=config.seed, scale=config.init_scale, eda=eda)
    params = {k: v.astype(np.float64).copy() for k, v in model.params().items()}
    rng = np.random.default_rng(config.seed)
    adam = _adam_state(params) if config.optimizer == "adam" else None
    step = 0
    log: list[EpochLog] = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(dataset))
        sums = np.zeros(3)
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            current = model.with_params(params)
            acc = {k: np.zeros_like(v) for k, v in params.items()}
            for vi in batch:  # fixed index order keeps the float sums reproducible
                video = dataset[int(vi)]
                sub = video.subset(sample_indices(video, config, epoch, int(vi)))
                terms, grads = video_objective(current, sub, config)
                sums += (terms["loss_mil"], terms["loss_bin"], terms["loss_multi"])
                for k in acc:
                    acc[k] += grads[k]
            step += 1
            for k in params:
                g = acc[k] / len(batch)
                if adam is None:
                    params[k] -= config.lr * g
                else:
                    m, v2 = adam[k]
                    m[:] = 0.9 * m + 0.1 * g
                    v2[:] = 0.999 * v2 + 0.001 * g * g
                    mh = m / (1 - 0.9**step)
                    vh = v2 / (1 - 0.999**step)
                    params[k] -= config.lr * mh / (np.sqrt(vh) + 1e-8)
        model = model.with_params(params)
        score = evaluate_auc(model, eval_set) if eval_set else float("nan")
        mean = sums / len(dataset)
        log.append(EpochLog(epoch, float(mean[0]), float(mean[1]), float(mean[2]), score))
    return model, log


def teacher_outputs(model: ToyModel, video: VideoSample) -> tuple[np.ndarray, np.ndarray]:
    """Scores and class logits of a teacher run on the clean (RGB stand-in) features."""
    feats = video.clean_features if video.clean_features is not None else video.features
    return forward(model, feats, video.timestamps, video.densities)


def tie_class_head(model: ToyModel) -> ToyModel:
    """Two-class head mirroring the score head: logits ``[0, u]`` with ``sigmoid(u)`` the score."""
    dim = model.w_bin.size
    w_cls = np.zeros((dim, 2))
    w_cls[:, 1] = model.w_bin
    return replace(model, w_cls=w_cls, b_cls=np.array([0.0, model.b_bin]))


def write_metrics(log: Iterable[EpochLog], path) -> None:
    lines = ["epoch,loss_mil,loss_bin,loss_multi,auc"]
    for e in log:
        lines.append(f"{e.epoch},{e.loss_mil!r},{e.loss_bin!r},{e.loss_multi!r},{e.auc!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
