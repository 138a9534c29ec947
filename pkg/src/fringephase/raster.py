"""Raster container, wrap/rounding helpers and file IO (FPR1 and 8-bit PNG).

Every image, phase map and fringe-order map in the package is a 2-D
float64 array indexed ``[v, u]`` (row, column).  :class:`Raster` attaches a
kind tag to such an array and is what the file readers/writers exchange.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from PIL import Image

TWO_PI = 2.0 * np.pi

KINDS = (
    "intensity",
    "wrapped-phase",
    "unwrapped-phase",
    "fringe-order",
    "numerator",
    "denominator",
    "modulation",
    "mask",
    "depth",
)

# refuse to allocate absurd payloads from a corrupt header
MAX_PIXELS = 1 << 28


class RasterError(ValueError):
    """Base class for raster validation and IO failures."""


class RasterHeaderError(RasterError):
    """The FPR1 header line is malformed."""


class RasterDimensionError(RasterError):
    """Width or height is zero, negative or too large."""


class RasterTruncatedError(RasterError):
    """The payload is shorter (or longer) than the header promises."""


class PixelCoord(NamedTuple):
    u: int
    v: int


@dataclass(frozen=True)
class Raster:
    """A ``height x width`` grid of float64 values with a kind tag."""

    data: np.ndarray
    kind: str = "intensity"

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise RasterDimensionError(f"raster data must be 2-D, got shape {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise RasterDimensionError(f"empty raster {data.shape}")
        if self.kind not in KINDS:
            raise RasterError(f"unknown raster kind {self.kind!r}")
        data = data.copy()
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def check(self, mask: np.ndarray | None = None) -> None:
        """Raise :class:`RasterError` if a kind-specific invariant is broken.

        Only pixels inside ``mask`` are checked for the phase/order kinds.
        """
        d = self.data
        valid = np.ones(d.shape, bool) if mask is None else np.asarray(mask, bool)
        if self.kind == "mask" and not np.all((d == 0.0) | (d == 1.0)):
            raise RasterError("mask raster holds values other than 0 and 1")
        if self.kind == "wrapped-phase":
            v = d[valid]
            if np.any(v <= -np.pi) or np.any(v > np.pi):
                raise RasterError("wrapped phase outside (-pi, pi]")
        if self.kind == "fringe-order":
            v = d[valid]
            if np.any(v != np.round(v)):
                raise RasterError("fringe order holds non-integral values")


def _require_finite(x):
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite input")


def wrap(x):
    """Map angles into ``(-pi, pi]``.  Works on scalars and arrays."""
    _require_finite(x)
    r = np.pi - np.mod(np.pi - np.asarray(x, dtype=np.float64), TWO_PI)
    if np.ndim(r) == 0:
        return float(r)
    return r


def round_half_away(x):
    """Round to nearest integer, ties away from zero."""
    _require_finite(x)
    a = np.asarray(x, dtype=np.float64)
    r = np.sign(a) * np.floor(np.abs(a) + 0.5)
    r = r + 0.0  # drop negative zero
    if np.ndim(r) == 0:
        return int(r)
    return r


def ceil_int(x):
    _require_finite(x)
    r = np.ceil(np.asarray(x, dtype=np.float64)) + 0.0
    if np.ndim(r) == 0:
        return int(r)
    return r


# ---------------------------------------------------------------------------
# FPR1

def write_raster(raster: Raster, path) -> None:
    header = f"FPR1 {raster.width} {raster.height} {raster.kind}\n".encode("ascii")
    payload = np.ascontiguousarray(raster.data, dtype="<f8").tobytes()
    Path(path).write_bytes(header + payload)


def _parse_header(line: bytes) -> tuple[int, int, str]:
    try:
        text = line.decode("ascii")
    except UnicodeDecodeError as exc:
        raise RasterHeaderError("header is not ASCII") from exc
    parts = text.split(" ")
    if len(parts) != 4 or parts[0] != "FPR1":
        raise RasterHeaderError(f"bad FPR1 header {text!r}")
    try:
        width, height = int(parts[1]), int(parts[2])
    except ValueError as exc:
        raise RasterHeaderError(f"non-integer dimensions in {text!r}") from exc
    if width <= 0 or height <= 0:
        raise RasterDimensionError(f"invalid dimensions {width}x{height}")
    if width * height > MAX_PIXELS:
        raise RasterDimensionError(f"dimensions {width}x{height} exceed limit")
    if parts[3] not in KINDS:
        raise RasterHeaderError(f"unknown kind tag {parts[3]!r}")
    return width, height, parts[3]


def decode_raster(blob: bytes) -> Raster:
    nl = blob.find(b"\n")
    if nl < 0 or nl > 128:
        raise RasterHeaderError("missing header line")
    width, height, kind = _parse_header(blob[:nl])
    payload = blob[nl + 1:]
    expected = width * height * 8
    if len(payload) != expected:
        raise RasterTruncatedError(
            f"payload has {len(payload)} bytes, header promises {expected}")
    data = np.frombuffer(payload, dtype="<f8").reshape(height, width)
    return Raster(data.astype(np.float64), kind)


def read_raster(path) -> Raster:
    return decode_raster(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# PNG

def quantize8(values: np.ndarray) -> np.ndarray:
    """Round-half-away to uint8 codes.  Values must already lie in [0, 255]."""
    v = np.asarray(values, dtype=np.float64)
    _require_finite(v)
    if np.any(v < 0.0) or np.any(v > 255.0):
        raise ValueError("PNG values must lie in [0, 255]; clamp explicitly first")
    return np.floor(v + 0.5).astype(np.uint8)


def write_png8(raster: Raster | np.ndarray, path) -> None:
    data = raster.data if isinstance(raster, Raster) else raster
    Image.fromarray(quantize8(data), mode="L").save(path, format="PNG")


def read_png8(path) -> Raster:
    with Image.open(path) as im:
        if im.mode != "L":
            raise RasterError(f"expected 8-bit grayscale PNG, got mode {im.mode}")
        arr = np.asarray(im, dtype=np.float64)
    return Raster(arr, "intensity")


def as_mask_raster(mask: np.ndarray) -> Raster:
    return Raster(np.asarray(mask, bool).astype(np.float64), "mask")

