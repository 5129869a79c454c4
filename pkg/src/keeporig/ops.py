"""Augmentation operation vocabulary and erasing-style baselines.

Magnitude scale is [0, 30] with linear parameter maps:

  rotate       angle = sign * (m/30) * 30 degrees
  shear_x/y    factor = sign * (m/30) * 0.3
  translate_x/y shift = sign * (m/30) * 0.33 * (width | height) pixels
  solarize     invert samples >= 255 - (m/30) * 255
  posterize    keep 8 - round((m/30) * 4) high bits
  color/contrast/brightness/sharpness
               blend factor 1 + sign * (m/30) * 0.9
  identity / auto_contrast / equalize ignore m

Geometric ops sample bilinearly about the image center (pixel centers at
integer coordinates, center at ((w-1)/2, (h-1)/2)) and fill exposed areas
with 128. Blends run in float64 and quantize once at the end, so a blend
factor of exactly 1 is a bit-exact identity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    Image,
    Rect,
    RngStream,
    ValidationError,
    iround,
    quantize_u8,
)

FILL_VALUE = 128


@dataclass(frozen=True)
class AugmentOp:
    kind: str
    signed: bool


OPS: tuple[AugmentOp, ...] = (
    AugmentOp("identity", False),
    AugmentOp("auto_contrast", False),
    AugmentOp("equalize", False),
    AugmentOp("rotate", True),
    AugmentOp("solarize", False),
    AugmentOp("color", True),
    AugmentOp("posterize", False),
    AugmentOp("contrast", True),
    AugmentOp("brightness", True),
    AugmentOp("sharpness", True),
    AugmentOp("shear_x", True),
    AugmentOp("shear_y", True),
    AugmentOp("translate_x", True),
    AugmentOp("translate_y", True),
)

OP_BY_KIND = {op.kind: op for op in OPS}


@dataclass(frozen=True)
class RandPolicy:
    """N ops per application at shared magnitude m."""

    n: int = 2
    m: float = 9.0

    def __post_init__(self) -> None:
        if not isinstance(self.n, int) or self.n < 0:
            raise ValidationError(f"policy n must be a non-negative integer, got {self.n!r}")
        if not 0.0 <= self.m <= 30.0:
            raise ValidationError(f"policy m must be in [0, 30], got {self.m!r}")


@dataclass(frozen=True)
class EraseParams:
    """Parameter bundles for the erasing baselines."""

    cutout_frac: float = 0.5
    erase_area: tuple[float, float] = (0.02, 0.4)
    erase_aspect: tuple[float, float] = (0.3, 3.3)
    erase_fill: str = "random"
    grid_unit: tuple[int, int] = (8, 16)
    grid_ratio: float = 0.5
    hide_grid: int = 4
    hide_prob: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 < self.cutout_frac <= 1.0:
            raise ValidationError(f"cutout_frac must be in (0, 1], got {self.cutout_frac}")
        lo, hi = self.erase_area
        if not (0.0 < lo <= hi < 1.0):
            raise ValidationError(f"erase_area must satisfy 0 < lo <= hi < 1, got {self.erase_area}")
        alo, ahi = self.erase_aspect
        if not (0.0 < alo <= ahi):
            raise ValidationError(f"erase_aspect must satisfy 0 < lo <= hi, got {self.erase_aspect}")
        if self.erase_fill not in ("random", "constant"):
            raise ValidationError(f"erase_fill must be 'random' or 'constant', got {self.erase_fill!r}")
        glo, ghi = self.grid_unit
        if not (1 <= glo <= ghi):
            raise ValidationError(f"grid_unit must satisfy 1 <= lo <= hi, got {self.grid_unit}")
        if not 0.0 < self.grid_ratio < 1.0:
            raise ValidationError(f"grid_ratio must be in (0, 1), got {self.grid_ratio}")
        if self.hide_grid < 1:
            raise ValidationError(f"hide_grid must be >= 1, got {self.hide_grid}")
        if not 0.0 <= self.hide_prob <= 1.0:
            raise ValidationError(f"hide_prob must be in [0, 1], got {self.hide_prob}")


def _check_m(m: float) -> None:
    if not 0.0 <= m <= 30.0:
        raise ValidationError(f"magnitude must be in [0, 30], got {m}")


def _resample(img: Image, sx: np.ndarray, sy: np.ndarray) -> Image:
    """Bilinear fetch at per-pixel source coordinates (sx, sy).

    Out-of-bounds neighbors contribute the fill value, so exposed areas
    fade to 128 at the border instead of smearing edge pixels.
    """
    h, w, _ = img.data.shape
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    fx = (sx - x0)[:, :, None]
    fy = (sy - y0)[:, :, None]
    src = img.data.astype(np.float64)

    def fetch(xi: np.ndarray, yi: np.ndarray) -> np.ndarray:
        inb = ((xi >= 0) & (xi < w) & (yi >= 0) & (yi < h))[:, :, None]
        v = src[np.clip(yi, 0, h - 1), np.clip(xi, 0, w - 1)]
        return np.where(inb, v, float(FILL_VALUE))

    v00 = fetch(x0, y0)
    v01 = fetch(x0 + 1, y0)
    v10 = fetch(x0, y0 + 1)
    v11 = fetch(x0 + 1, y0 + 1)
    top = v00 * (1.0 - fx) + v01 * fx
    bot = v10 * (1.0 - fx) + v11 * fx
    return Image(quantize_u8(top * (1.0 - fy) + bot * fy))


def _grids(img: Image) -> tuple[np.ndarray, np.ndarray, float, float]:
    xg, yg = np.meshgrid(
        np.arange(img.width, dtype=np.float64), np.arange(img.height, dtype=np.float64)
    )
    return xg, yg, (img.width - 1) / 2.0, (img.height - 1) / 2.0


def _rotate(img: Image, degrees: float) -> Image:
    xg, yg, cx, cy = _grids(img)
    rad = math.radians(degrees)
    cos, sin = math.cos(rad), math.sin(rad)
    dx, dy = xg - cx, yg - cy
    # inverse rotation about the center
    return _resample(img, cos * dx + sin * dy + cx, -sin * dx + cos * dy + cy)


def _shear_x(img: Image, factor: float) -> Image:
    xg, yg, cx, cy = _grids(img)
    return _resample(img, (xg - cx) - factor * (yg - cy) + cx, yg)


def _shear_y(img: Image, factor: float) -> Image:
    xg, yg, cx, cy = _grids(img)
    return _resample(img, xg, -factor * (xg - cx) + (yg - cy) + cy)


def _translate(img: Image, tx: float, ty: float) -> Image:
    xg, yg, _, _ = _grids(img)
    return _resample(img, xg - tx, yg - ty)


def _solarize(img: Image, m: float) -> Image:
    threshold = 255.0 - (m / 30.0) * 255.0
    data = img.data
    return Image(np.where(data >= threshold, 255 - data.astype(np.int16), data).astype(np.uint8))


def _posterize(img: Image, m: float) -> Image:
    keep = 8 - iround((m / 30.0) * 4.0)
    mask = np.uint8((0xFF << (8 - keep)) & 0xFF)
    return Image(img.data & mask)


def _auto_contrast(img: Image) -> Image:
    out = img.data.astype(np.float64).copy()
    for c in range(img.channels):
        ch = out[:, :, c]
        lo, hi = ch.min(), ch.max()
        if hi > lo:
            out[:, :, c] = (ch - lo) * 255.0 / (hi - lo)
    return Image(quantize_u8(out))


def _equalize(img: Image) -> Image:
    out = np.empty_like(img.data)
    for c in range(img.channels):
        ch = img.data[:, :, c]
        hist = np.bincount(ch.ravel(), minlength=256)
        cdf = hist.cumsum()
        nonzero = cdf[hist > 0]
        if len(nonzero) == 0 or nonzero[0] == cdf[-1]:
            out[:, :, c] = ch
            continue
        cdf_min = nonzero[0]
        lut = np.floor((cdf - cdf_min) / (cdf[-1] - cdf_min) * 255.0 + 0.5).astype(np.uint8)
        out[:, :, c] = lut[ch]
    return Image(out)


_SMOOTH_KERNEL = np.array([[1, 1, 1], [1, 5, 1], [1, 1, 1]], dtype=np.float64) / 13.0


def _smoothed(img: Image) -> np.ndarray:
    src = img.data.astype(np.float64)
    p = np.pad(src, ((1, 1), (1, 1), (0, 0)), mode="edge")
    out = np.zeros_like(src)
    for dy in range(3):
        for dx in range(3):
            out += _SMOOTH_KERNEL[dy, dx] * p[dy : dy + img.height, dx : dx + img.width]
    return out


def _luma(img: Image) -> np.ndarray:
    if img.channels == 1:
        return img.data[:, :, 0].astype(np.float64)
    rgb = img.data.astype(np.float64)
    return 0.299 * rgb[:, :, 0] + 0.587 * rgb[:, :, 1] + 0.114 * rgb[:, :, 2]


def _blend(img: Image, degenerate: np.ndarray, factor: float) -> Image:
    out = degenerate + factor * (img.data.astype(np.float64) - degenerate)
    return Image(quantize_u8(out))


def apply_with_sign(img: Image, kind: str, m: float, sign: int) -> Image:
    """Deterministic op core: all randomness resolved into `sign` by the caller."""
    if kind not in OP_BY_KIND:
        raise ValidationError(f"unknown op kind {kind!r}")
    _check_m(m)
    if sign not in (-1, 1):
        raise ValidationError(f"sign must be -1 or 1, got {sign!r}")
    scale = m / 30.0
    if kind == "identity":
        return img
    if kind == "rotate":
        return _rotate(img, sign * scale * 30.0)
    if kind == "shear_x":
        return _shear_x(img, sign * scale * 0.3)
    if kind == "shear_y":
        return _shear_y(img, sign * scale * 0.3)
    if kind == "translate_x":
        return _translate(img, sign * scale * 0.33 * img.width, 0.0)
    if kind == "translate_y":
        return _translate(img, 0.0, sign * scale * 0.33 * img.height)
    if kind == "solarize":
        return _solarize(img, m)
    if kind == "posterize":
        return _posterize(img, m)
    if kind == "auto_contrast":
        return _auto_contrast(img)
    if kind == "equalize":
        return _equalize(img)
    factor = 1.0 + sign * scale * 0.9
    if kind == "brightness":
        return _blend(img, np.zeros(img.data.shape, dtype=np.float64), factor)
    if kind == "color":
        luma = _luma(img)[:, :, None]
        return _blend(img, np.broadcast_to(luma, img.data.shape), factor)
    if kind == "contrast":
        mean = float(_luma(img).mean())
        return _blend(img, np.full(img.data.shape, mean, dtype=np.float64), factor)
    if kind == "sharpness":
        return _blend(img, _smoothed(img), factor)
    raise AssertionError(f"unhandled kind {kind}")


def apply_op(img: Image, op: AugmentOp, m: float, rng: RngStream) -> Image:
    """Apply one op; signed ops draw their direction from `rng` (one draw)."""
    sign = rng.sign() if op.signed else 1
    return apply_with_sign(img, op.kind, m, sign)


def rand_augment(
    img: Image, policy: RandPolicy, rng: RngStream
) -> tuple[Image, list[tuple[str, float, int]]]:
    """Apply n uniformly drawn ops at magnitude m; return the op log.

    Per op: one draw for the kind, plus one sign draw when the op is
    signed. The log records (kind, m, sign) with sign fixed at 1 for
    unsigned ops.
    """
    log: list[tuple[str, float, int]] = []
    out = img
    for _ in range(policy.n):
        op = OPS[rng.randint_below(len(OPS))]
        sign = rng.sign() if op.signed else 1
        out = apply_with_sign(out, op.kind, policy.m, sign)
        log.append((op.kind, policy.m, sign))
    return out, log


def replay_ops(img: Image, log: list[tuple[str, float, int]]) -> Image:
    """Re-apply a recorded op log without any randomness."""
    out = img
    for kind, m, sign in log:
        out = apply_with_sign(out, kind, float(m), int(sign))
    return out


def _erase_region(data: np.ndarray, r: Rect, fill: int = FILL_VALUE) -> None:
    data[r.y : r.y + r.h, r.x : r.x + r.w] = fill


def cutout(
    img: Image,
    size_frac: float,
    rng: RngStream,
    exclude: Rect | None = None,
) -> tuple[Image, Rect | None]:
    """Erase a square of side round(size_frac * min(W, H)) at a uniform center.

    The square is clipped to the image. With `exclude` set, the center is
    redrawn (up to 100 attempts, two draws each: cx then cy) until the
    clipped mask misses `exclude`; if every attempt intersects, the last
    mask is applied minus its overlap with `exclude`. Returns the clipped
    mask rect, or None when nothing was erased.
    """
    if not 0.0 < size_frac <= 1.0:
        raise ValidationError(f"size_frac must be in (0, 1], got {size_frac}")
    w, h = img.width, img.height
    side = iround(size_frac * min(w, h))
    if side == 0:
        return img, None
    attempts = 100 if exclude is not None else 1
    mask = None
    for _ in range(attempts):
        cx = rng.randint_below(w)
        cy = rng.randint_below(h)
        x0 = max(0, cx - side // 2)
        y0 = max(0, cy - side // 2)
        x1 = min(w, cx - side // 2 + side)
        y1 = min(h, cy - side // 2 + side)
        if x1 <= x0 or y1 <= y0:
            mask = None
            continue
        mask = Rect(x0, y0, x1 - x0, y1 - y0)
        if exclude is None or not mask.intersects(exclude):
            break
    if mask is None:
        return img, None
    out = img.data.copy()
    _erase_region(out, mask)
    if exclude is not None:
        overlap = mask.intersection(exclude)
        if overlap is not None:
            # restore the protected pixels; the applied mask is the remainder
            out[overlap.y : overlap.y + overlap.h, overlap.x : overlap.x + overlap.w] = (
                img.data[overlap.y : overlap.y + overlap.h, overlap.x : overlap.x + overlap.w]
            )
            if overlap == mask:
                return img, None
    return Image(out), mask


def random_erasing(
    img: Image, params: EraseParams, rng: RngStream
) -> tuple[Image, Rect | None]:
    """Erase one randomized-aspect rect filled with random (or constant) samples.

    Per attempt (up to 100): draw area fraction, then aspect ratio (h/w),
    derive the rect dims; when they fit, draw x then y and fill. Random
    fill draws one byte per sample in row-major, channel-minor order.
    """
    w, h = img.width, img.height
    for _ in range(100):
        area = rng.uniform(params.erase_area[0], params.erase_area[1]) * (w * h)
        aspect = rng.uniform(params.erase_aspect[0], params.erase_aspect[1])
        rh = iround(math.sqrt(area * aspect))
        rw = iround(math.sqrt(area / aspect))
        if rw < 1 or rh < 1 or rw > w or rh > h:
            continue
        x = rng.randint_below(w - rw + 1)
        y = rng.randint_below(h - rh + 1)
        mask = Rect(x, y, rw, rh)
        out = img.data.copy()
        if params.erase_fill == "random":
            block = np.empty((rh, rw, img.channels), dtype=np.uint8)
            flat = block.reshape(-1)
            for i in range(flat.size):
                flat[i] = rng.randint_below(256)
            out[y : y + rh, x : x + rw] = block
        else:
            _erase_region(out, mask)
        return Image(out), mask
    return img, None


def gridmask(
    img: Image, unit_range: tuple[int, int], ratio: float, rng: RngStream
) -> Image:
    """Erase a square of side round(ratio*d) at the corner of every d x d tile.

    Draws: unit d uniform over [lo, hi], then offsets ox, oy uniform over
    [0, d). Tiles start one period before the offset so clipped tiles at
    the top/left edges are covered too.
    """
    lo, hi = unit_range
    if not (1 <= lo <= hi):
        raise ValidationError(f"unit range must satisfy 1 <= lo <= hi, got {unit_range}")
    if not 0.0 < ratio < 1.0:
        raise ValidationError(f"ratio must be in (0, 1), got {ratio}")
    d = lo + rng.randint_below(hi - lo + 1)
    ox = rng.randint_below(d)
    oy = rng.randint_below(d)
    k = iround(ratio * d)
    if k == 0:
        return img
    w, h = img.width, img.height
    out = img.data.copy()
    for ty in range(oy - d, h, d):
        for tx in range(ox - d, w, d):
            x0, y0 = max(0, tx), max(0, ty)
            x1, y1 = min(w, tx + k), min(h, ty + k)
            if x1 > x0 and y1 > y0:
                out[y0:y1, x0:x1] = FILL_VALUE
    return Image(out)


def hide_and_seek(img: Image, grid_div: int, hide_prob: float, rng: RngStream) -> Image:
    """Erase each cell of a grid_div x grid_div partition with probability hide_prob.

    Cells are visited row-major; one uniform draw per cell decides it.
    Remainder rows/columns extend the last band.
    """
    w, h = img.width, img.height
    if not 1 <= grid_div <= min(w, h):
        raise ValidationError(f"grid_div must be in [1, min(W, H)], got {grid_div}")
    if not 0.0 <= hide_prob <= 1.0:
        raise ValidationError(f"hide_prob must be in [0, 1], got {hide_prob}")
    cw, chh = w // grid_div, h // grid_div
    out = img.data.copy()
    changed = False
    for gy in range(grid_div):
        for gx in range(grid_div):
            u = rng.random()
            if u < hide_prob:
                x0 = gx * cw
                y0 = gy * chh
                x1 = w if gx == grid_div - 1 else x0 + cw
                y1 = h if gy == grid_div - 1 else y0 + chh
                out[y0:y1, x0:x1] = FILL_VALUE
                changed = True
    return Image(out) if changed else img
