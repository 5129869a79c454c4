"""Saliency providers, importance scoring, and the salient-window search.

Raw provider outputs (pre-normalization) are exposed alongside the
normalized maps so independent reference implementations can be compared
at full precision.
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .core import (
    FormatError,
    GeometryError,
    Image,
    Rect,
    SaliencyProvider,
    ValidationError,
    iround,
    to_grayscale,
)

_SALM_MAGIC = b"SALM"
_SALM_VERSION = 1
_SALM_HEADER = struct.Struct("<4sIII")  # magic, version, width, height


@dataclass(frozen=True)
class SaliencyMap:
    """Per-pixel scores in [0,1], shape (height, width) float64, read-only."""

    values: np.ndarray

    def __post_init__(self) -> None:
        v = self.values
        if not isinstance(v, np.ndarray) or v.dtype != np.float64 or v.ndim != 2:
            raise ValidationError("saliency values must be an (h, w) float64 array")
        if v.shape[0] < 1 or v.shape[1] < 1:
            raise ValidationError("saliency map must be at least 1x1")
        if not np.isfinite(v).all():
            raise ValidationError("saliency values must be finite")
        if v.min() < 0.0 or v.max() > 1.0:
            raise ValidationError("saliency values must lie in [0, 1]")
        if not v.flags.c_contiguous:
            v = np.ascontiguousarray(v)
            object.__setattr__(self, "values", v)
        v.flags.writeable = False

    @classmethod
    def from_raw(cls, raw: np.ndarray) -> SaliencyMap:
        """Min-max normalize an arbitrary finite map; constant maps become all zeros."""
        a = np.asarray(raw, dtype=np.float64)
        if a.ndim != 2:
            raise ValidationError("raw saliency must be 2-D")
        if not np.isfinite(a).all():
            raise ValidationError("raw saliency must be finite")
        lo = float(a.min())
        hi = float(a.max())
        if hi > lo:
            out = (a - lo) / (hi - lo)
        else:
            out = np.zeros_like(a)
        return cls(out)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


class IntegralTable:
    """Summed-area table over a saliency map: (h+1, w+1) with zero first row/col.

    sum over rect = t[y+h, x+w] - t[y, x+w] - t[y+h, x] + t[y, x]
    """

    __slots__ = ("table", "width", "height")

    def __init__(self, values: np.ndarray) -> None:
        v = np.asarray(values, dtype=np.float64)
        if v.ndim != 2:
            raise ValidationError("integral table input must be 2-D")
        h, w = v.shape
        t = np.zeros((h + 1, w + 1), dtype=np.float64)
        t[1:, 1:] = v.cumsum(axis=0).cumsum(axis=1)
        self.table = t
        self.table.flags.writeable = False
        self.width = w
        self.height = h

    @classmethod
    def from_map(cls, smap: SaliencyMap) -> IntegralTable:
        return cls(smap.values)

    @property
    def total(self) -> float:
        return float(self.table[self.height, self.width])

    def sum_rect(self, r: Rect) -> float:
        if r.w < 1 or r.h < 1 or not r.within(self.width, self.height):
            raise GeometryError(
                f"rect {r.to_list()} out of bounds for {self.width}x{self.height} map"
            )
        t = self.table
        return float(
            t[r.y + r.h, r.x + r.w] - t[r.y, r.x + r.w] - t[r.y + r.h, r.x] + t[r.y, r.x]
        )


def importance(table: IntegralTable, r: Rect) -> float:
    """Summed saliency over `r` via four corner lookups."""
    return table.sum_rect(r)


@dataclass(frozen=True)
class SalientRegionResult:
    bbox: Rect
    importance: float
    fraction: float
    provider: str = ""


_SURROUND_RADII = (2, 4, 8)


def fine_grained_raw(img: Image) -> np.ndarray:
    """Center-surround contrast, pre-normalization.

    For each pixel and each radius r in {2,4,8}, accumulate the absolute
    difference between the pixel's luma and the mean of the (2r+1)^2
    window centered on it, windows clipped at the borders.
    """
    gray = to_grayscale(img).data[:, :, 0].astype(np.float64)
    h, w = gray.shape
    t = np.zeros((h + 1, w + 1), dtype=np.float64)
    t[1:, 1:] = gray.cumsum(axis=0).cumsum(axis=1)
    acc = np.zeros((h, w), dtype=np.float64)
    ys = np.arange(h)
    xs = np.arange(w)
    for r in _SURROUND_RADII:
        y0 = np.maximum(ys - r, 0)
        y1 = np.minimum(ys + r + 1, h)
        x0 = np.maximum(xs - r, 0)
        x1 = np.minimum(xs + r + 1, w)
        sums = (
            t[np.ix_(y1, x1)] - t[np.ix_(y0, x1)] - t[np.ix_(y1, x0)] + t[np.ix_(y0, x0)]
        )
        counts = (y1 - y0)[:, None] * (x1 - x0)[None, :]
        acc += np.abs(gray - sums / counts)
    return acc


def saliency_fine_grained(img: Image) -> SaliencyMap:
    return SaliencyMap.from_raw(fine_grained_raw(img))


def gradient_magnitude_raw(img: Image) -> np.ndarray:
    """3x3 Sobel magnitude on luma with replicate borders, pre-normalization."""
    gray = to_grayscale(img).data[:, :, 0].astype(np.float64)
    p = np.pad(gray, 1, mode="edge")
    gx = (
        (p[:-2, 2:] + 2.0 * p[1:-1, 2:] + p[2:, 2:])
        - (p[:-2, :-2] + 2.0 * p[1:-1, :-2] + p[2:, :-2])
    )
    gy = (
        (p[2:, :-2] + 2.0 * p[2:, 1:-1] + p[2:, 2:])
        - (p[:-2, :-2] + 2.0 * p[:-2, 1:-1] + p[:-2, 2:])
    )
    return np.sqrt(gx * gx + gy * gy)


def saliency_gradient_magnitude(img: Image) -> SaliencyMap:
    return SaliencyMap.from_raw(gradient_magnitude_raw(img))


def write_salm(smap: SaliencyMap, path: str | os.PathLike) -> None:
    """Write the bit-exact binary map file: 16-byte header + float32 LE payload."""
    header = _SALM_HEADER.pack(_SALM_MAGIC, _SALM_VERSION, smap.width, smap.height)
    payload = smap.values.astype("<f4").tobytes()
    with open(path, "wb") as f:
        f.write(header)
        f.write(payload)


def load_external_saliency(path: str | os.PathLike, expected_dims: tuple[int, int]) -> SaliencyMap:
    """Load a SALM file, check dims against (width, height), clamp values to [0,1].

    Well-formed files are not renormalized, only clamped; malformed content
    raises a format error naming the offense.
    """
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as e:
        raise FormatError(f"cannot read saliency file {path}: {e}") from None
    if len(blob) < _SALM_HEADER.size:
        raise FormatError(f"{path}: truncated header ({len(blob)} bytes)")
    magic, version, w, h = _SALM_HEADER.unpack_from(blob, 0)
    if magic != _SALM_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != _SALM_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    exp_w, exp_h = expected_dims
    if (w, h) != (exp_w, exp_h):
        raise FormatError(f"{path}: dims {w}x{h} do not match expected {exp_w}x{exp_h}")
    want = _SALM_HEADER.size + 4 * w * h
    if len(blob) != want:
        raise FormatError(f"{path}: payload length {len(blob)} != expected {want}")
    vals = np.frombuffer(blob, dtype="<f4", offset=_SALM_HEADER.size).astype(np.float64)
    if not np.isfinite(vals).all():
        bad = int(np.flatnonzero(~np.isfinite(vals))[0])
        raise FormatError(f"{path}: non-finite value at index {bad}")
    return SaliencyMap(np.clip(vals.reshape(h, w), 0.0, 1.0))


def compute_saliency(
    img: Image,
    provider: SaliencyProvider,
    external: SaliencyMap | None = None,
) -> SaliencyMap:
    """Dispatch to a provider; external maps must be preloaded by the caller."""
    if provider is SaliencyProvider.FINE_GRAINED:
        return saliency_fine_grained(img)
    if provider is SaliencyProvider.GRADIENT_MAGNITUDE:
        return saliency_gradient_magnitude(img)
    if provider is SaliencyProvider.EXTERNAL:
        if external is None:
            raise ValidationError("external provider requires a preloaded saliency map")
        if (external.width, external.height) != (img.width, img.height):
            raise GeometryError(
                f"external map {external.width}x{external.height} does not match "
                f"image {img.width}x{img.height}"
            )
        return external
    raise ValidationError(f"unknown saliency provider {provider!r}")


def _best_window(table: IntegralTable, kw: int, kh: int) -> tuple[Rect, float]:
    """Importance-maximal kw x kh window; ties broken smallest y then smallest x."""
    t = table.table
    h, w = table.height, table.width
    sums = t[kh:, kw:] - t[:-kh, kw:] - t[kh:, :-kw] + t[:-kh, :-kw]
    idx = int(np.argmax(sums))
    y, x = divmod(idx, sums.shape[1])
    return Rect(x, y, kw, kh), float(sums[y, x])


def find_salient_region(
    smap: SaliencyMap,
    window_ratio: float,
    tau: float,
    growth_step: float = 0.1,
    provider: str = "",
    table: IntegralTable | None = None,
) -> SalientRegionResult | None:
    """Locate the smallest ladder window whose best placement holds >= tau of total mass.

    The window starts at round(window_ratio * dim) per axis and the ratio
    grows by growth_step until the full image is reached. Returns None
    when the map has zero total mass (nothing to accept against).
    """
    if not 0.0 < window_ratio <= 1.0:
        raise ValidationError(f"window_ratio must be in (0, 1], got {window_ratio}")
    if not 0.0 < tau <= 1.0:
        raise ValidationError(f"tau must be in (0, 1], got {tau}")
    if growth_step <= 0.0:
        raise ValidationError(f"growth_step must be positive, got {growth_step}")
    if table is None:
        table = IntegralTable.from_map(smap)
    w, h = table.width, table.height
    total = table.total
    ratio = window_ratio
    while True:
        eff = min(ratio, 1.0)
        kw = min(max(1, iround(eff * w)), w)
        kh = min(max(1, iround(eff * h)), h)
        bbox, imp = _best_window(table, kw, kh)
        fraction = imp / total if total > 0.0 else 0.0
        if total > 0.0 and fraction >= tau:
            return SalientRegionResult(bbox=bbox, importance=imp, fraction=fraction, provider=provider)
        if kw == w and kh == h:
            return None
        ratio += growth_step
