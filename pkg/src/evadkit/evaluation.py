"""Frame-level AUC, box IoU and TIoU, plus score/label file handling."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .boxes import Box, BoxSet


def auc(scores, labels) -> float:
    """Mann-Whitney AUC: P(pos > neg) + P(tie) / 2 over all positive/negative pairs."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    pos = y == 1
    n_pos, n_neg = int(pos.sum()), int((y == 0).sum())
    if n_pos + n_neg != y.size:
        raise ValueError("labels must be 0 or 1")
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both positive and negative labels")
    ranks = rankdata(s)  # average ranks resolve ties to half credit
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def frame_iou(a: Box, b: Box) -> float:
    ix = max(0, min(a.x_max, b.x_max) - max(a.x_min, b.x_min))
    iy = max(0, min(a.y_max, b.y_max) - max(a.y_min, b.y_min))
    inter = ix * iy
    union = Box(*a).area + Box(*b).area - inter
    return inter / union if union > 0 else 0.0


def tiou(pred: BoxSet, gt: BoxSet, anomalous_frames) -> float:
    """Mean over anomalous frames of the best IoU between the ground-truth box and any prediction."""
    frames = [int(f) for f in anomalous_frames]
    if not frames:
        raise ValueError("no anomalous frames to evaluate")
    total = 0.0
    for f in frames:
        truth = gt.get(f)
        if not truth:
            raise ValueError(f"ground truth missing on anomalous frame {f}")
        best = 0.0
        for g in truth:
            for p in pred.get(f, []):
                best = max(best, frame_iou(p, g))
        total += best
    return total / len(frames)


def write_scores(scores, path: str | Path) -> None:
    lines = ["frame_index,score"] + [f"{i},{float(s)!r}" for i, s in enumerate(np.asarray(scores).tolist())]
    Path(path).write_text("\n".join(lines) + "\n")


def read_scores(path: str | Path) -> np.ndarray:
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("frame_index"):
            continue
        i, s = line.split(",")
        rows.append((int(i), float(s)))
    rows.sort()
    if [i for i, _ in rows] != list(range(len(rows))):
        raise ValueError(f"{path}: frame indices are not contiguous from 0")
    return np.array([s for _, s in rows], dtype=np.float64)


def write_labels(labels, path: str | Path) -> None:
    Path(path).write_text("".join(f"{int(v)}\n" for v in labels))


def read_labels(path: str | Path) -> np.ndarray:
    vals = [int(line) for line in Path(path).read_text().split()]
    if any(v not in (0, 1) for v in vals):
        raise ValueError(f"{path}: labels must be 0 or 1")
    return np.array(vals, dtype=np.int64)
