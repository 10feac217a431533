"""Event stream types, validation and on-disk formats.

Streams are stored column-wise as numpy arrays. Timestamps are integer
microseconds, polarity is +1/-1.

EVS container layout (little-endian)::

    b"EVS1" | u32 width | u32 height | u64 duration_us | f64 source_fps
    | u64 count | count x (u64 t_us, u16 x, u16 y, i8 polarity) | u32 crc32

The CRC32 covers every byte between the magic and the checksum itself.
"""

from __future__ import annotations

import io
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterable, NamedTuple

import numpy as np

EVS_MAGIC = b"EVS1"
_HEADER = struct.Struct("<IIQdQ")
_CRC = struct.Struct("<I")
EVENT_DTYPE = np.dtype([("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "i1")])


class EVSFormatError(ValueError):
    """Base class for unreadable EVS containers."""


class EVSMagicError(EVSFormatError):
    pass


class EVSTruncatedError(EVSFormatError):
    pass


class EVSChecksumError(EVSFormatError):
    pass


class CSVEventError(ValueError):
    """A CSV row could not be turned into an event. ``row`` is 1-based."""

    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


class Event(NamedTuple):
    t: int
    x: int
    y: int
    polarity: int


@dataclass(frozen=True, eq=False)
class EventStream:
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray
    width: int
    height: int
    duration_us: int
    source_fps: float = 100.0
    # set by readers that had to reorder their input
    resorted: bool = field(default=False, compare=False)

    def __post_init__(self):
        for name, dtype in (("t", np.int64), ("x", np.int64), ("y", np.int64), ("p", np.int8)):
            arr = np.ascontiguousarray(np.asarray(getattr(self, name)), dtype=dtype)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n = len(self.t)
        if not (len(self.x) == len(self.y) == len(self.p) == n):
            raise ValueError("event columns differ in length")

    @classmethod
    def from_events(cls, events: Iterable[Event | tuple], width: int, height: int,
                    duration_us: int | None = None, source_fps: float = 100.0) -> "EventStream":
        rows = list(events)
        arr = np.array(rows, dtype=np.int64).reshape(-1, 4)
        if duration_us is None:
            duration_us = int(arr[:, 0].max()) if len(rows) else 0
        return cls(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], width, height, duration_us, source_fps)

    @classmethod
    def empty(cls, width: int, height: int, duration_us: int = 0, source_fps: float = 100.0) -> "EventStream":
        z = np.zeros(0, dtype=np.int64)
        return cls(z, z, z, z, width, height, duration_us, source_fps)

    def __len__(self) -> int:
        return len(self.t)

    def __iter__(self):
        for row in zip(self.t.tolist(), self.x.tolist(), self.y.tolist(), self.p.tolist()):
            yield Event(*row)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            (self.width, self.height, self.duration_us) == (other.width, other.height, other.duration_us)
            and struct.pack("<d", self.source_fps) == struct.pack("<d", other.source_fps)
            and all(np.array_equal(getattr(self, c), getattr(other, c)) for c in "txyp")
        )

    def select(self, index) -> "EventStream":
        """Sub-stream with the same geometry, keeping events at ``index``."""
        return EventStream(self.t[index], self.x[index], self.y[index], self.p[index],
                           self.width, self.height, self.duration_us, self.source_fps)

    def sorted(self) -> "EventStream":
        order = np.argsort(self.t, kind="stable")
        return self.select(order)


@dataclass(frozen=True)
class Violation:
    kind: str  # "unsorted" | "out_of_bounds" | "polarity" | "timestamp"
    index: int
    detail: str


def validate_stream(stream: EventStream) -> list[Violation]:
    """Report every invariant violation; an empty list means the stream is valid."""
    report: list[Violation] = []
    t, x, y, p = stream.t, stream.x, stream.y, stream.p
    if len(t) > 1:
        for i in np.flatnonzero(np.diff(t) < 0) + 1:
            report.append(Violation("unsorted", int(i), f"t={t[i]} after t={t[i - 1]}"))
    for i in np.flatnonzero((t < 0) | (t > stream.duration_us)):
        report.append(Violation("timestamp", int(i), f"t={t[i]} outside [0, {stream.duration_us}]"))
    oob = (x < 0) | (x >= stream.width) | (y < 0) | (y >= stream.height)
    for i in np.flatnonzero(oob):
        report.append(Violation("out_of_bounds", int(i),
                                f"({x[i]}, {y[i]}) outside {stream.width}x{stream.height}"))
    for i in np.flatnonzero((p != 1) & (p != -1)):
        report.append(Violation("polarity", int(i), f"polarity {p[i]}"))
    report.sort(key=lambda v: v.index)
    return report


def encode_evs(stream: EventStream) -> bytes:
    records = np.empty(len(stream), dtype=EVENT_DTYPE)
    records["t"] = stream.t
    records["x"] = stream.x
    records["y"] = stream.y
    records["p"] = stream.p
    body = _HEADER.pack(stream.width, stream.height, stream.duration_us,
                        float(stream.source_fps), len(stream)) + records.tobytes()
    return EVS_MAGIC + body + _CRC.pack(zlib.crc32(body))


def write_evs(stream: EventStream, sink: BinaryIO | str | Path) -> int:
    """Write ``stream`` as an EVS container and return the number of bytes written."""
    data = encode_evs(stream)
    if isinstance(sink, (str, Path)):
        Path(sink).write_bytes(data)
    else:
        sink.write(data)
    return len(data)


def decode_evs(data: bytes) -> EventStream:
    if len(data) < len(EVS_MAGIC) or data[:4] != EVS_MAGIC:
        raise EVSMagicError(f"bad magic {data[:4]!r}, expected {EVS_MAGIC!r}")
    if len(data) < 4 + _HEADER.size + _CRC.size:
        raise EVSTruncatedError("file ends inside the header")
    width, height, duration, fps, count = _HEADER.unpack_from(data, 4)
    end = 4 + _HEADER.size + count * EVENT_DTYPE.itemsize
    if len(data) < end + _CRC.size:
        raise EVSTruncatedError(f"header announces {count} events, payload is short")
    if len(data) > end + _CRC.size:
        raise EVSFormatError("trailing bytes after checksum")
    body = data[4:end]
    (crc,) = _CRC.unpack_from(data, end)
    if zlib.crc32(body) != crc:
        raise EVSChecksumError("CRC32 mismatch")
    records = np.frombuffer(data, dtype=EVENT_DTYPE, count=count, offset=4 + _HEADER.size)
    return EventStream(records["t"].astype(np.int64), records["x"], records["y"], records["p"],
                       width, height, duration, fps)


def read_evs(source: BinaryIO | str | Path) -> EventStream:
    if isinstance(source, (str, Path)):
        return decode_evs(Path(source).read_bytes())
    return decode_evs(source.read())


_CSV_HEADERS = {("t", "x", "y", "p"), ("t_us", "x", "y", "p"), ("t", "x", "y", "polarity"),
                ("timestamp", "x", "y", "polarity")}


def read_csv_events(source: str | Path | io.TextIOBase, width: int, height: int,
                    duration_us: int | None = None, source_fps: float = 100.0) -> EventStream:
    """Parse ``t_us,x,y,p`` rows. Polarity 0 is read as -1.

    Unsorted input is stably sorted and the returned stream has ``resorted`` set.
    """
    if isinstance(source, (str, Path)):
        text = Path(source).read_text()
    else:
        text = source.read()
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        fields = [f.strip() for f in line.split(",")]
        if lineno == 1 and tuple(f.lower() for f in fields) in _CSV_HEADERS:
            continue
        if len(fields) != 4:
            raise CSVEventError(lineno, f"expected 4 fields, got {len(fields)}")
        try:
            t, x, y, p = (int(f) for f in fields)
        except ValueError:
            raise CSVEventError(lineno, f"not an integer row: {line!r}") from None
        if p == 0:
            p = -1
        if p not in (1, -1):
            raise CSVEventError(lineno, f"polarity {p} not in {{1, 0, -1}}")
        if t < 0:
            raise CSVEventError(lineno, f"negative timestamp {t}")
        if not (0 <= x < width and 0 <= y < height):
            raise CSVEventError(lineno, f"coordinate ({x}, {y}) out of bounds for {width}x{height}")
        rows.append((t, x, y, p))
    stream = EventStream.from_events(rows, width, height, duration_us, source_fps)
    if len(stream) > 1 and np.any(np.diff(stream.t) < 0):
        s = stream.sorted()
        return EventStream(s.t, s.x, s.y, s.p, width, height, s.duration_us, source_fps, resorted=True)
    return stream
