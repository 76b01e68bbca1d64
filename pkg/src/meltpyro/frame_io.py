"""Bit-exact frame stream container, 12-to-16-bit upscaling, and per-channel
sub-image splitting.

Container layout (all integers little-endian):
  magic "MPV1" | u32 width | u32 height | u32 fps | u16 bit_depth |
  u16 reserved(0) | u64 frame_count | f32 pixel_pitch_um
followed by frame_count frames of row-major u16 samples (native 12-bit values
for bit_depth 12, upscaled on decode; raw 16-bit values for bit_depth 16).

A directory of 16-bit binary PGM files named frame_%08d.pgm is accepted as a
secondary input path for interoperability with standard image tooling.
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator

import numpy as np

__all__ = [
    "MAGIC",
    "HEADER_SIZE",
    "Channel",
    "StreamHeader",
    "Frame",
    "SubImage",
    "StreamFormatError",
    "TruncatedStreamError",
    "upscale_12_to_16",
    "split_frame",
    "decode_stream",
    "open_stream",
    "encode_stream",
    "write_stream",
    "read_pgm",
    "write_pgm",
    "open_pgm_dir",
    "PGM_NAME_FORMAT",
]

MAGIC = b"MPV1"
_HEADER_STRUCT = struct.Struct("<4sIIIHHQf")
HEADER_SIZE = _HEADER_STRUCT.size  # 32 bytes

DEFAULT_WIDTH = 128
DEFAULT_HEIGHT = 48
DEFAULT_FPS = 30_000
DEFAULT_PIXEL_PITCH_UM = 20.0

PGM_NAME_FORMAT = "frame_%08d.pgm"
_PGM_NAME_RE = re.compile(r"^frame_(\d{8})\.pgm$")


class StreamFormatError(ValueError):
    """Stream is not a valid MPV1 container."""


class TruncatedStreamError(IOError):
    """Stream ended mid-frame; frame_index is the first frame that could not
    be decoded (frames 0..frame_index-1 were delivered intact)."""

    def __init__(self, frame_index: int):
        super().__init__(f"stream truncated at frame {frame_index}")
        self.frame_index = frame_index


class Channel(Enum):
    WL550 = "wl550"
    WL620 = "wl620"


@dataclass(frozen=True)
class StreamHeader:
    width: int = DEFAULT_WIDTH
    height: int = DEFAULT_HEIGHT
    fps: int = DEFAULT_FPS
    bit_depth: int = 12
    frame_count: int = 0
    pixel_pitch_um: float = DEFAULT_PIXEL_PITCH_UM

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError("frame dimensions must be positive")
        if self.fps <= 0:
            raise ValueError("fps must be positive")
        if self.bit_depth not in (12, 16):
            raise ValueError(f"bit_depth must be 12 or 16, got {self.bit_depth}")
        if self.frame_count < 0:
            raise ValueError("frame_count must be >= 0")
        if self.pixel_pitch_um <= 0:
            raise ValueError("pixel pitch must be positive")

    @property
    def frame_bytes(self) -> int:
        return self.width * self.height * 2

    def pack(self) -> bytes:
        return _HEADER_STRUCT.pack(
            MAGIC,
            self.width,
            self.height,
            self.fps,
            self.bit_depth,
            0,
            self.frame_count,
            self.pixel_pitch_um,
        )

    @classmethod
    def unpack(cls, raw: bytes) -> "StreamHeader":
        if len(raw) < HEADER_SIZE:
            raise StreamFormatError("stream shorter than header")
        magic, width, height, fps, bit_depth, _reserved, count, pitch = (
            _HEADER_STRUCT.unpack(raw[:HEADER_SIZE])
        )
        if magic != MAGIC:
            raise StreamFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
        try:
            return cls(
                width=width,
                height=height,
                fps=fps,
                bit_depth=bit_depth,
                frame_count=count,
                pixel_pitch_um=pitch,
            )
        except ValueError as exc:
            raise StreamFormatError(str(exc)) from exc


@dataclass(frozen=True)
class Frame:
    """One decoded frame: 16-bit counts in a (height, width) grid."""

    index: int
    timestamp_ms: float
    pixels: np.ndarray
    saturated: bool = False

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class SubImage:
    """Single-channel half of a frame; origin is the (x, y) offset of its
    top-left pixel within the parent frame."""

    channel: Channel
    pixels: np.ndarray
    origin: tuple[int, int] = (0, 0)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def upscale_12_to_16(value):
    """Map native 12-bit counts onto the 16-bit grid by a pure left shift
    (x16): order- and ratio-preserving, 0 -> 0, 4095 -> 65520."""
    arr = np.asarray(value)
    if np.any(arr < 0) or np.any(arr > 4095):
        raise ValueError("12-bit values must be within [0, 4095]")
    out = arr.astype(np.uint16) << 4
    if np.isscalar(value) or arr.ndim == 0:
        return int(out)
    return out


def split_frame(frame: Frame, split_column: int | None = None) -> tuple[SubImage, SubImage]:
    """Split a dual melt-pool frame into its two wavelength halves.

    Left of split_column is the 620 nm image, right is the 550 nm image
    (default split at width/2). Returns (wl620, wl550).
    """
    width = frame.width
    if split_column is None:
        split_column = width // 2
    if not 0 < split_column < width:
        raise ValueError(f"split column {split_column} outside (0, {width})")
    left = SubImage(Channel.WL620, frame.pixels[:, :split_column], origin=(0, 0))
    right = SubImage(
        Channel.WL550, frame.pixels[:, split_column:], origin=(split_column, 0)
    )
    return left, right


def _read_exact(source: BinaryIO, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining > 0:
        chunk = source.read(remaining)
        if not chunk:
            break
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def decode_stream(source: BinaryIO) -> tuple[StreamHeader, Iterator[Frame]]:
    """Decode an MPV1 byte stream into its header and a lazy frame iterator.

    Frames are yielded in index order without buffering the stream; a stream
    shorter than the declared frame count raises TruncatedStreamError from the
    iterator, carrying the index of the first missing frame.
    """
    header = StreamHeader.unpack(_read_exact(source, HEADER_SIZE))

    def frames() -> Iterator[Frame]:
        frame_bytes = header.frame_bytes
        shape = (header.height, header.width)
        shift = header.bit_depth == 12
        period_ms = 1000.0 / header.fps
        for index in range(header.frame_count):
            raw = _read_exact(source, frame_bytes)
            if len(raw) < frame_bytes:
                raise TruncatedStreamError(index)
            pixels = np.frombuffer(raw, dtype="<u2").reshape(shape)
            if shift:
                if pixels.max(initial=0) > 4095:
                    raise StreamFormatError(
                        f"frame {index}: 12-bit payload with values above 4095"
                    )
                pixels = pixels << np.uint16(4)
            else:
                pixels = pixels.copy()  # decouple from the read buffer
            yield Frame(index=index, timestamp_ms=index * period_ms, pixels=pixels)

    return header, frames()


def open_stream(path: str | Path) -> tuple[StreamHeader, Iterator[Frame]]:
    """Open an MPV1 file; the returned iterator owns the file handle."""
    fh = open(path, "rb")
    try:
        header, frames = decode_stream(fh)
    except Exception:
        fh.close()
        raise

    def closing() -> Iterator[Frame]:
        try:
            yield from frames
        finally:
            fh.close()

    return header, closing()


def encode_stream(
    header: StreamHeader, frames: Iterable[Frame | np.ndarray], sink: BinaryIO
) -> int:
    """Write header and frames to a binary sink; returns frames written.

    bit_depth 12 expects native values <= 4095; bit_depth 16 writes pixel
    grids as-is. The header's frame_count must match the frames provided.
    """
    sink.write(header.pack())
    written = 0
    for item in frames:
        pixels = item.pixels if isinstance(item, Frame) else np.asarray(item)
        if pixels.shape != (header.height, header.width):
            raise ValueError(
                f"frame {written}: shape {pixels.shape} != "
                f"({header.height}, {header.width})"
            )
        if header.bit_depth == 12 and pixels.max(initial=0) > 4095:
            raise ValueError(f"frame {written}: values above 4095 in a 12-bit stream")
        sink.write(np.ascontiguousarray(pixels, dtype="<u2").tobytes())
        written += 1
    if written != header.frame_count:
        raise ValueError(
            f"header declares {header.frame_count} frames, got {written}"
        )
    return written


def write_stream(
    path: str | Path, header: StreamHeader, frames: Iterable[Frame | np.ndarray]
) -> int:
    with open(path, "wb") as fh:
        return encode_stream(header, frames, fh)


def write_pgm(path: str | Path, pixels: np.ndarray) -> None:
    """Binary 16-bit PGM (P5, maxval 65535, big-endian samples)."""
    arr = np.asarray(pixels)
    if arr.ndim != 2:
        raise ValueError("PGM image must be 2-D")
    if arr.min(initial=0) < 0 or arr.max(initial=0) > 65535:
        raise ValueError("PGM samples must fit 16 bits")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{arr.shape[1]} {arr.shape[0]}\n65535\n".encode("ascii"))
        fh.write(arr.astype(">u2").tobytes())


def read_pgm(path: str | Path) -> np.ndarray:
    """Read a binary PGM; 16-bit (maxval > 255) or 8-bit, comments allowed."""
    with open(path, "rb") as fh:
        data = fh.read()
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            eol = data.find(b"\n", pos)
            pos = len(data) if eol < 0 else eol + 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError(f"{path}: malformed PGM header")
        fields.append(data[start:pos])
    pos += 1  # single whitespace after maxval precedes the raster
    if fields[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM (P5)")
    width, height, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval > 255:
        dtype, itemsize = ">u2", 2
    else:
        dtype, itemsize = "u1", 1
    need = width * height * itemsize
    raster = data[pos : pos + need]
    if len(raster) < need:
        raise ValueError(f"{path}: truncated PGM raster")
    arr = np.frombuffer(raster, dtype=dtype).reshape((height, width))
    return arr.astype(np.uint16)


def open_pgm_dir(
    directory: str | Path,
    fps: int = DEFAULT_FPS,
    pixel_pitch_um: float = DEFAULT_PIXEL_PITCH_UM,
    bit_depth: int = 16,
) -> tuple[StreamHeader, Iterator[Frame]]:
    """Treat a directory of frame_%08d.pgm files as a frame stream.

    PGM samples are taken as already-upscaled 16-bit counts unless bit_depth
    12 is forced, in which case they are shifted on decode.
    """
    directory = Path(directory)
    entries = []
    for p in directory.iterdir():
        m = _PGM_NAME_RE.match(p.name)
        if m:
            entries.append((int(m.group(1)), p))
    if not entries:
        raise FileNotFoundError(f"no frame_%08d.pgm files in {directory}")
    entries.sort()
    first = read_pgm(entries[0][1])
    header = StreamHeader(
        width=first.shape[1],
        height=first.shape[0],
        fps=fps,
        bit_depth=bit_depth,
        frame_count=len(entries),
        pixel_pitch_um=pixel_pitch_um,
    )

    def frames() -> Iterator[Frame]:
        period_ms = 1000.0 / fps
        for ordinal, (_, path) in enumerate(entries):
            pixels = read_pgm(path)
            if pixels.shape != first.shape:
                raise ValueError(f"{path}: shape differs from first frame")
            if bit_depth == 12:
                pixels = upscale_12_to_16(pixels)
            yield Frame(index=ordinal, timestamp_ms=ordinal * period_ms, pixels=pixels)

    return header, frames()
