"""
Frame I/O tool - Decode and encode binary netpbm frames and iterate frame sources

Supports binary graymaps (P5) and pixmaps (P6) with maxval 255. A frame
source is either a directory of numbered files or one file holding
back-to-back frames; timestamps are synthesized from the nominal period.
"""

import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, Optional, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

FRAME_SUFFIXES = {".pgm", ".ppm", ".pnm"}
_WHITESPACE = b" \t\n\r\x0b\x0c"
_DIGITS = re.compile(r"(\d+)")


class PnmParseError(ValueError):
    """Malformed netpbm data; offset is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class PnmHeaderError(PnmParseError):
    pass


class PnmMaxvalError(PnmParseError):
    pass


class PnmTruncatedError(PnmParseError):
    pass


class FrameReadError(OSError):
    """A frame file could not be read or decoded."""

    def __init__(self, filename: Union[str, Path], reason: str):
        super().__init__(f"Cannot read frame {filename}: {reason}")
        self.filename = str(filename)


class FrameDimensionError(ValueError):
    """A frame does not have the dimensions its consumer was configured for."""


@dataclass(frozen=True, eq=False)
class GrayFrame:
    """8-bit single channel frame; pixels has shape (height, width)."""

    pixels: np.ndarray
    timestamp: int = 0

    def __post_init__(self) -> None:
        if self.pixels.ndim != 2 or self.pixels.dtype != np.uint8:
            raise ValueError("GrayFrame pixels must be a 2-D uint8 array")
        if self.pixels.shape[0] < 1 or self.pixels.shape[1] < 1:
            raise ValueError("GrayFrame must be at least 1x1")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def with_timestamp(self, timestamp: int) -> "GrayFrame":
        return GrayFrame(self.pixels, timestamp)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GrayFrame):
            return NotImplemented
        return self.timestamp == other.timestamp and np.array_equal(self.pixels, other.pixels)


@dataclass(frozen=True, eq=False)
class ColorFrame:
    """8-bit RGB frame; pixels has shape (height, width, 3)."""

    pixels: np.ndarray
    timestamp: int = 0

    def __post_init__(self) -> None:
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3 or self.pixels.dtype != np.uint8:
            raise ValueError("ColorFrame pixels must be a (height, width, 3) uint8 array")
        if self.pixels.shape[0] < 1 or self.pixels.shape[1] < 1:
            raise ValueError("ColorFrame must be at least 1x1")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def with_timestamp(self, timestamp: int) -> "ColorFrame":
        return ColorFrame(self.pixels, timestamp)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ColorFrame):
            return NotImplemented
        return self.timestamp == other.timestamp and np.array_equal(self.pixels, other.pixels)


Frame = Union[GrayFrame, ColorFrame]


def _skip_whitespace_and_comments(data: bytes, pos: int) -> int:
    while pos < len(data):
        if data[pos] in _WHITESPACE:
            pos += 1
        elif data[pos] == ord("#"):
            while pos < len(data) and data[pos] not in b"\r\n":
                pos += 1
        else:
            break
    return pos


def _read_header_int(data: bytes, pos: int, field: str) -> Tuple[int, int]:
    pos = _skip_whitespace_and_comments(data, pos)
    start = pos
    while pos < len(data) and chr(data[pos]).isdigit():
        pos += 1
    if pos == start:
        raise PnmHeaderError(f"expected {field}", start)
    return int(data[start:pos]), pos


def read_pnm(data: bytes, offset: int = 0) -> Tuple[Frame, int]:
    """
    Decode one frame starting at offset.

    Returns:
        The frame and the offset just past its pixel data
    """
    magic = data[offset : offset + 2]
    if magic == b"P5":
        channels = 1
    elif magic == b"P6":
        channels = 3
    else:
        raise PnmHeaderError(f"unknown magic number {magic!r}", offset)

    pos = offset + 2
    if pos >= len(data) or data[pos] not in _WHITESPACE:
        raise PnmHeaderError("missing whitespace after magic number", pos)
    width, pos = _read_header_int(data, pos, "width")
    height, pos = _read_header_int(data, pos, "height")
    maxval_offset = _skip_whitespace_and_comments(data, pos)
    maxval, pos = _read_header_int(data, pos, "maxval")
    if width < 1 or height < 1:
        raise PnmHeaderError(f"invalid dimensions {width}x{height}", offset + 3)
    if maxval != 255:
        raise PnmMaxvalError(f"maxval must be 255, got {maxval}", maxval_offset)
    if pos >= len(data) or data[pos] not in _WHITESPACE:
        raise PnmHeaderError("missing whitespace after maxval", pos)
    pos += 1

    expected = width * height * channels
    available = len(data) - pos
    if available < expected:
        raise PnmTruncatedError(
            f"pixel data truncated: expected {expected} bytes, found {available}",
            pos + available,
        )

    raw = np.frombuffer(data, dtype=np.uint8, count=expected, offset=pos)
    end = pos + expected
    if channels == 1:
        return GrayFrame(raw.reshape(height, width).copy()), end
    return ColorFrame(raw.reshape(height, width, 3).copy()), end


def decode_pnm(data: bytes) -> Frame:
    """
    Decode a binary P5 or P6 image.

    Raises:
        PnmHeaderError: Malformed header
        PnmMaxvalError: maxval other than 255
        PnmTruncatedError: Fewer pixel bytes than the header declares
    """
    frame, _ = read_pnm(data)
    return frame


def encode_pnm(frame: Frame) -> bytes:
    """Encode a frame as P5 (gray) or P6 (color) with a minimal header."""
    magic = "P5" if isinstance(frame, GrayFrame) else "P6"
    header = f"{magic}\n{frame.width} {frame.height}\n255\n".encode("ascii")
    return header + np.ascontiguousarray(frame.pixels).tobytes()


def to_gray(frame: ColorFrame) -> GrayFrame:
    """
    Convert RGB to luma with weights 0.299/0.587/0.114, rounding half up.

    Integer arithmetic keeps the result exact: (299R + 587G + 114B + 500) // 1000.
    """
    rgb = frame.pixels.astype(np.uint32)
    luma = (299 * rgb[..., 0] + 587 * rgb[..., 1] + 114 * rgb[..., 2] + 500) // 1000
    return GrayFrame(np.minimum(luma, 255).astype(np.uint8), frame.timestamp)


def to_color(frame: GrayFrame) -> ColorFrame:
    """Replicate a gray frame into three channels."""
    return ColorFrame(np.repeat(frame.pixels[..., None], 3, axis=2), frame.timestamp)


def read_frame_file(path: Union[str, Path]) -> Frame:
    path = Path(path)
    try:
        return decode_pnm(path.read_bytes())
    except OSError as e:
        raise FrameReadError(path, e.strerror or str(e)) from e
    except PnmParseError as e:
        raise FrameReadError(path, str(e)) from e


def write_frame_file(frame: Frame, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_bytes(encode_pnm(frame))
    return path


class FrameSource:
    """
    Sequential, single-consumer iterator over frame pairs.

    Yields (ColorFrame, GrayFrame) with timestamps start_ms + index * period_ms.
    """

    def __init__(self, path: Union[str, Path], period_ms: int = 100, start_ms: int = 0):
        """
        Open a frame source.

        Args:
            path: Directory of numbered P5/P6 files, or a file of concatenated frames
            period_ms: Nominal frame period used to synthesize timestamps
            start_ms: Timestamp of the first frame
        """
        if period_ms < 1:
            raise ValueError(f"period_ms must be positive, got {period_ms}")
        self.path = Path(path)
        self.period_ms = period_ms
        self.start_ms = start_ms
        self._index = 0
        self._files: Optional[List[Path]] = None
        self._stream: Optional[bytes] = None
        self._stream_pos = 0
        self._last_number: Optional[int] = None

        if self.path.is_dir():
            self._files = sorted(
                (p for p in self.path.iterdir() if p.suffix.lower() in FRAME_SUFFIXES),
                key=lambda p: p.name,
            )
            logger.info(f"Opened frame directory {self.path} ({len(self._files)} frames)")
        else:
            try:
                self._stream = self.path.read_bytes()
            except OSError as e:
                raise FrameReadError(self.path, e.strerror or str(e)) from e
            logger.info(f"Opened frame stream {self.path} ({len(self._stream)} bytes)")

    def __iter__(self) -> Iterator[Tuple[ColorFrame, GrayFrame]]:
        while True:
            pair = self.next_frame()
            if pair is None:
                return
            yield pair

    def next_frame(self) -> Optional[Tuple[ColorFrame, GrayFrame]]:
        """
        Return the next (color, gray) pair, or None at end of stream.

        Raises:
            FrameReadError: A file is unreadable or not valid netpbm
        """
        frame = self._read_next()
        if frame is None:
            return None
        timestamp = self.start_ms + self._index * self.period_ms
        self._index += 1
        if isinstance(frame, ColorFrame):
            color = frame.with_timestamp(timestamp)
            return color, to_gray(color)
        gray = frame.with_timestamp(timestamp)
        return to_color(gray), gray

    def _read_next(self) -> Optional[Frame]:
        if self._files is not None:
            if self._index >= len(self._files):
                return None
            path = self._files[self._index]
            self._check_sequence(path)
            return read_frame_file(path)

        assert self._stream is not None
        pos = self._skip_stream_padding()
        if pos >= len(self._stream):
            return None
        try:
            frame, self._stream_pos = read_pnm(self._stream, pos)
        except PnmParseError as e:
            raise FrameReadError(self.path, str(e)) from e
        return frame

    def _skip_stream_padding(self) -> int:
        assert self._stream is not None
        pos = self._stream_pos
        while pos < len(self._stream) and self._stream[pos] in _WHITESPACE:
            pos += 1
        return pos

    def _check_sequence(self, path: Path) -> None:
        match = _DIGITS.findall(path.stem)
        if not match:
            return
        number = int(match[-1])
        if self._last_number is not None and number != self._last_number + 1:
            logger.warning(
                f"Frame sequence gap: {path.name} follows number {self._last_number}"
            )
        self._last_number = number


def open_source(
    path: Union[str, Path], period_ms: int = 100, start_ms: int = 0
) -> FrameSource:
    return FrameSource(path, period_ms=period_ms, start_ms=start_ms)
