"""Core image, geometry, randomness, and configuration types.

Everything downstream builds on the types here: 8-bit interleaved images,
integer rects, a counter-based deterministic RNG, and the validated
pipeline configuration.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields
from enum import Enum

import numpy as np


class AugmentError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(AugmentError):
    """Invalid argument or type invariant violation."""


class GeometryError(AugmentError):
    """Rect/image geometry violation (out of bounds, size mismatch)."""


class FormatError(AugmentError):
    """Malformed file content (codec, header, payload)."""


class ConfigError(ValidationError):
    """Invalid configuration value; message names the offending field."""


class NoPlacementError(AugmentError):
    """No destination cell is available for relocation."""


def iround(x: float) -> int:
    """Round to nearest integer, ties away from zero."""
    if x >= 0:
        return int(math.floor(x + 0.5))
    return -int(math.floor(-x + 0.5))


def quantize_u8(x: np.ndarray) -> np.ndarray:
    """Clamp to [0, 255] and round to nearest (ties away from zero on that range)."""
    return np.floor(np.clip(x, 0.0, 255.0) + 0.5).astype(np.uint8)


@dataclass(frozen=True)
class Rect:
    """Axis-aligned integer rectangle: offset (x, y), size (w, h)."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self) -> None:
        for name in ("x", "y", "w", "h"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 0:
                raise ValidationError(f"rect field {name} must be a non-negative integer, got {v!r}")
            object.__setattr__(self, name, int(v))

    @property
    def area(self) -> int:
        return self.w * self.h

    def within(self, width: int, height: int) -> bool:
        return self.x + self.w <= width and self.y + self.h <= height

    def intersects(self, other: Rect) -> bool:
        return (
            max(self.x, other.x) < min(self.x + self.w, other.x + other.w)
            and max(self.y, other.y) < min(self.y + self.h, other.y + other.h)
        )

    def intersection(self, other: Rect) -> Rect | None:
        x0 = max(self.x, other.x)
        y0 = max(self.y, other.y)
        x1 = min(self.x + self.w, other.x + other.w)
        y1 = min(self.y + self.h, other.y + other.h)
        if x1 <= x0 or y1 <= y0:
            return None
        return Rect(x0, y0, x1 - x0, y1 - y0)

    def to_list(self) -> list[int]:
        return [self.x, self.y, self.w, self.h]


@dataclass(frozen=True)
class Image:
    """8-bit image: (height, width, channels) uint8 array, row-major interleaved.

    Channels is 1 (grayscale) or 3 (RGB). The backing array is frozen on
    construction; all operations return new images, so values are safe to
    share across workers.
    """

    data: np.ndarray

    def __post_init__(self) -> None:
        d = self.data
        if not isinstance(d, np.ndarray) or d.dtype != np.uint8 or d.ndim != 3:
            raise ValidationError("image data must be an (h, w, c) uint8 array")
        h, w, c = d.shape
        if w < 1 or h < 1:
            raise ValidationError(f"image dims must be at least 1x1, got {w}x{h}")
        if c not in (1, 3):
            raise ValidationError(f"channels must be 1 or 3, got {c}")
        if not d.flags.c_contiguous:
            d = np.ascontiguousarray(d)
            object.__setattr__(self, "data", d)
        d.flags.writeable = False

    @classmethod
    def from_array(cls, arr: np.ndarray) -> Image:
        """Copy an (h, w) or (h, w, c) uint8-compatible array into an Image."""
        a = np.array(arr, dtype=np.uint8, copy=True)
        if a.ndim == 2:
            a = a[:, :, None]
        return cls(a)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def full_rect(self) -> Rect:
        return Rect(0, 0, self.width, self.height)


def new_image(width: int, height: int, channels: int, fill: int = 0) -> Image:
    """Create a constant-filled image."""
    if width < 1 or height < 1:
        raise ValidationError(f"image dims must be at least 1x1, got {width}x{height}")
    if channels not in (1, 3):
        raise ValidationError(f"channels must be 1 or 3, got {channels}")
    if not 0 <= fill <= 255:
        raise ValidationError(f"fill must be in [0, 255], got {fill}")
    return Image(np.full((height, width, channels), fill, dtype=np.uint8))


def _check_bounds(img: Image, r: Rect) -> None:
    if r.w < 1 or r.h < 1 or not r.within(img.width, img.height):
        raise GeometryError(
            f"rect {r.to_list()} out of bounds for {img.width}x{img.height} image"
        )


def crop(img: Image, r: Rect) -> Image:
    """Extract the sub-image covered by `r`."""
    _check_bounds(img, r)
    return Image(img.data[r.y : r.y + r.h, r.x : r.x + r.w].copy())


def paste(dst: Image, src: Image, at: Rect) -> Image:
    """Return a copy of `dst` with `src` written over the region `at`."""
    if at.w != src.width or at.h != src.height:
        raise GeometryError(
            f"paste rect {at.to_list()} does not match source dims {src.width}x{src.height}"
        )
    if dst.channels != src.channels:
        raise GeometryError(f"channel mismatch: {dst.channels} vs {src.channels}")
    _check_bounds(dst, at)
    out = dst.data.copy()
    out[at.y : at.y + at.h, at.x : at.x + at.w] = src.data
    return Image(out)


def resize_bilinear(img: Image, new_w: int, new_h: int) -> Image:
    """Bilinear resize with half-pixel centers; edges extend, output rounded to uint8."""
    if new_w < 1 or new_h < 1:
        raise GeometryError(f"resize target must be at least 1x1, got {new_w}x{new_h}")
    h, w, _ = img.data.shape
    if new_w == w and new_h == h:
        return Image(img.data.copy())
    src = img.data.astype(np.float64)
    xs = (np.arange(new_w, dtype=np.float64) + 0.5) * (w / new_w) - 0.5
    ys = (np.arange(new_h, dtype=np.float64) + 0.5) * (h / new_h) - 0.5
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = (xs - x0)[None, :, None]
    fy = (ys - y0)[:, None, None]
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    top = src[y0c][:, x0c] * (1.0 - fx) + src[y0c][:, x1c] * fx
    bot = src[y1c][:, x0c] * (1.0 - fx) + src[y1c][:, x1c] * fx
    return Image(quantize_u8(top * (1.0 - fy) + bot * fy))


def to_grayscale(img: Image) -> Image:
    """Collapse RGB to luma (0.299 R + 0.587 G + 0.114 B); grayscale passes through."""
    if img.channels == 1:
        return Image(img.data.copy())
    rgb = img.data.astype(np.float64)
    luma = 0.299 * rgb[:, :, 0] + 0.587 * rgb[:, :, 1] + 0.114 * rgb[:, :, 2]
    return Image(quantize_u8(luma)[:, :, None])


_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


def _mix64(z: int) -> int:
    # splitmix64 finalizer (Steele/Lea/Flood constants)
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def mix_seed(master_seed: int, stream_index: int) -> int:
    """Derive a per-stream seed: mix64(master XOR mix64(index + GAMMA))."""
    return _mix64((master_seed & _MASK64) ^ _mix64((stream_index + _GAMMA) & _MASK64))


class RngStream:
    """Deterministic counter-based generator, "splitmix64-v1".

    State advances by the 64-bit golden gamma 0x9E3779B97F4A7C15 and each
    output is the splitmix64 finalizer of the new state. The initial state
    is mix_seed(master_seed, stream_index), so distinct stream indices give
    independent sequences and identical (seed, index) pairs replay the
    identical sequence on every platform (pure integer arithmetic).

    Draw semantics:
      next_u64()       raw 64-bit output
      random()         (next_u64() >> 11) * 2**-53, uniform in [0, 1)
      randint_below(n) next_u64() % n, uniform in [0, n) up to negligible
                       modulo bias (< n / 2**64)
    """

    __slots__ = ("master_seed", "stream_index", "_state")

    def __init__(self, master_seed: int, stream_index: int = 0) -> None:
        self.master_seed = master_seed & _MASK64
        self.stream_index = stream_index & _MASK64
        self._state = mix_seed(master_seed, stream_index)

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        return _mix64(self._state)

    def random(self) -> float:
        return (self.next_u64() >> 11) * (2.0 ** -53)

    def randint_below(self, n: int) -> int:
        if n <= 0:
            raise ValidationError(f"randint_below bound must be positive, got {n}")
        return self.next_u64() % n

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def sign(self) -> int:
        """Draw a direction: +1 or -1 with equal probability."""
        return 1 if self.random() < 0.5 else -1


class PlacementStrategy(str, Enum):
    """Destination-cell selection rule over the surrounding regions."""

    MIN_AREA = "min"
    MAX_AREA = "max"
    RANDOM_AREA = "random"


class AugTarget(str, Enum):
    """Which content receives the random augmentation."""

    SALIENT_ONLY = "salient"
    NON_SALIENT_ONLY = "non_salient"
    BOTH = "both"


class Method(str, Enum):
    KEEP_ORIGINAL = "keep_original"
    KEEP_ORIGINAL_CUTOUT = "keep_original_cutout"
    KEEP_AUGMENT = "keep_augment"
    SALFMIX = "salfmix"
    CUTOUT = "cutout"
    RANDOM_ERASING = "random_erasing"
    GRIDMASK = "gridmask"
    HIDE_AND_SEEK = "hide_and_seek"
    NONE = "none"


class SaliencyProvider(str, Enum):
    FINE_GRAINED = "fine_grained"
    GRADIENT_MAGNITUDE = "gradient_magnitude"
    EXTERNAL = "external"


def _coerce_enum(cls: type, field_name: str, value):
    if isinstance(value, cls):
        return value
    try:
        return cls(value)
    except ValueError:
        options = ", ".join(m.value for m in cls)
        raise ConfigError(f"{field_name} must be one of {{{options}}}, got {value!r}") from None


@dataclass(frozen=True)
class PipelineConfig:
    """All pipeline tunables, validated on construction.

    Defaults follow the best-performing combination (random placement,
    augment both) with a 0.5 keep probability.
    """

    tau: float = 0.6
    window_ratio: float = 0.5
    placement: PlacementStrategy = PlacementStrategy.RANDOM_AREA
    aug_target: AugTarget = AugTarget.BOTH
    keep_prob: float = 0.5
    rand_n: int = 2
    rand_m: float = 9.0
    saliency_provider: SaliencyProvider = SaliencyProvider.FINE_GRAINED
    seed: int = 0
    workers: int = 1
    method: Method = Method.KEEP_ORIGINAL
    growth_step: float = 0.1
    also_restore_bbox: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "placement", _coerce_enum(PlacementStrategy, "placement", self.placement))
        object.__setattr__(self, "aug_target", _coerce_enum(AugTarget, "aug_target", self.aug_target))
        object.__setattr__(self, "method", _coerce_enum(Method, "method", self.method))
        object.__setattr__(
            self, "saliency_provider", _coerce_enum(SaliencyProvider, "saliency_provider", self.saliency_provider)
        )
        self._check_range("tau", self.tau, 0.0, 1.0, low_open=True)
        self._check_range("window_ratio", self.window_ratio, 0.0, 1.0, low_open=True)
        self._check_range("keep_prob", self.keep_prob, 0.0, 1.0)
        self._check_range("rand_m", self.rand_m, 0.0, 30.0)
        self._check_range("growth_step", self.growth_step, 0.0, 1.0, low_open=True)
        if not isinstance(self.rand_n, int) or self.rand_n < 0:
            raise ConfigError(f"rand_n must be a non-negative integer, got {self.rand_n!r}")
        if not isinstance(self.seed, int) or not 0 <= self.seed < (1 << 64):
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        if not isinstance(self.workers, int) or self.workers < 1:
            raise ConfigError(f"workers must be a positive integer, got {self.workers!r}")
        if not isinstance(self.also_restore_bbox, bool):
            raise ConfigError(f"also_restore_bbox must be a boolean, got {self.also_restore_bbox!r}")

    @staticmethod
    def _check_range(name: str, value, lo: float, hi: float, low_open: bool = False) -> None:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(f"{name} must be a number, got {value!r}")
        ok = (value > lo if low_open else value >= lo) and value <= hi
        if not ok:
            bracket = "(" if low_open else "["
            raise ConfigError(f"{name} must be in {bracket}{lo}, {hi}], got {value}")

    def to_dict(self) -> dict:
        """Field-ordered plain dict; enums as their string values."""
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.value if isinstance(v, Enum) else v
        return out

    @classmethod
    def from_dict(cls, d: dict) -> PipelineConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(sorted(unknown))}")
        return cls(**d)
