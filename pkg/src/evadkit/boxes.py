"""Axis-aligned boxes and the per-frame box CSV format.

Boxes use the exclusive-max convention: ``(x_min, y_min, x_max, y_max)`` covers
columns ``x_min .. x_max - 1`` and rows ``y_min .. y_max - 1``.
"""

from __future__ import annotations

from pathlib import Path
from typing import NamedTuple


class Box(NamedTuple):
    x_min: int
    y_min: int
    x_max: int
    y_max: int

    @property
    def area(self) -> int:
        return max(0, self.x_max - self.x_min) * max(0, self.y_max - self.y_min)

    def union(self, other: "Box") -> "Box":
        return Box(min(self.x_min, other.x_min), min(self.y_min, other.y_min),
                   max(self.x_max, other.x_max), max(self.y_max, other.y_max))

    def is_valid(self, width: int | None = None, height: int | None = None) -> bool:
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            return False
        if self.x_min < 0 or self.y_min < 0:
            return False
        if width is not None and self.x_max > width:
            return False
        if height is not None and self.y_max > height:
            return False
        return True


BoxSet = dict[int, list[Box]]


def write_boxes(boxes: BoxSet, path: str | Path) -> None:
    lines = ["frame_index,x_min,y_min,x_max,y_max"]
    for frame in sorted(boxes):
        for b in boxes[frame]:
            lines.append(f"{frame},{b.x_min},{b.y_min},{b.x_max},{b.y_max}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_boxes(path: str | Path) -> BoxSet:
    out: BoxSet = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("frame_index"):
            continue
        parts = line.split(",")
        if len(parts) != 5:
            raise ValueError(f"{path}:{lineno}: expected 5 fields")
        frame, *coords = (int(p) for p in parts)
        out.setdefault(frame, []).append(Box(*coords))
    return out
