"""Salient-region relocation and the single-image baseline methods.

Per-image draw order is part of the reproducibility contract:

  1. keep gate: one uniform draw (all methods; `none` draws nothing)
  2. saliency + window search: no draws
  3. destination choice: one draw for random placement, none for min/max
  4. whole-image augmentation draws, then salient-crop augmentation draws

Replaying a method with the same (master seed, image index) therefore
reproduces the output byte-exactly, which is what the manifest relies on.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, fields

from .core import (
    AugTarget,
    GeometryError,
    Image,
    Method,
    NoPlacementError,
    PipelineConfig,
    PlacementStrategy,
    Rect,
    RngStream,
    ValidationError,
    crop,
    paste,
    resize_bilinear,
)
from .ops import (
    EraseParams,
    RandPolicy,
    cutout,
    gridmask,
    hide_and_seek,
    rand_augment,
    random_erasing,
)
from .saliency import (
    IntegralTable,
    SalientRegionResult,
    SaliencyMap,
    compute_saliency,
    find_salient_region,
)

OpLog = list[tuple[str, float, int]]


@dataclass(frozen=True)
class AugmentPlan:
    """Fully resolved per-image decision record; one manifest row."""

    image_index: int
    seed: int
    applied: bool
    method: Method
    placement: PlacementStrategy
    aug_target: AugTarget
    salient_bbox: Rect | None
    dest_cell: Rect | None
    op_log_whole: OpLog
    op_log_salient: OpLog
    saliency_provider: str
    tau: float
    fraction_achieved: float
    error: str | None = None

    def __post_init__(self) -> None:
        if not self.applied:
            if self.op_log_whole or self.op_log_salient or self.dest_cell is not None:
                raise ValidationError("a not-applied plan must carry no ops and no destination")
        if self.dest_cell is not None and self.salient_bbox is not None:
            if self.dest_cell.intersects(self.salient_bbox):
                raise ValidationError("destination cell must be disjoint from the salient bbox")

    def to_row(self) -> dict:
        """Plain dict in declared field order; rects as [x,y,w,h], ops as triples."""
        row = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, Rect):
                v = v.to_list()
            elif isinstance(v, (Method, PlacementStrategy, AugTarget)):
                v = v.value
            elif f.name in ("op_log_whole", "op_log_salient"):
                v = [[kind, m, sign] for kind, m, sign in v]
            row[f.name] = v
        return row

    @classmethod
    def from_row(cls, row: dict) -> AugmentPlan:
        known = {f.name for f in fields(cls)}
        unknown = set(row) - known
        if unknown:
            raise ValidationError(f"unknown plan field(s): {', '.join(sorted(unknown))}")
        d = dict(row)
        for key in ("salient_bbox", "dest_cell"):
            if d.get(key) is not None:
                d[key] = Rect(*d[key])
        for key in ("op_log_whole", "op_log_salient"):
            d[key] = [(str(k), float(m), int(s)) for k, m, s in d.get(key, [])]
        d["method"] = Method(d["method"])
        d["placement"] = PlacementStrategy(d["placement"])
        d["aug_target"] = AugTarget(d["aug_target"])
        return cls(**d)


def eight_regions(image_dims: tuple[int, int], bbox: Rect) -> list[Rect]:
    """Non-center cells of the 3x3 partition induced by the bbox bands.

    Row-major order (top-left, top, top-right, left, right, bottom-left,
    bottom, bottom-right); zero-area cells are dropped, so flush bboxes
    yield fewer than eight.
    """
    w, h = image_dims
    if not bbox.within(w, h) or bbox.w < 1 or bbox.h < 1:
        raise GeometryError(f"bbox {bbox.to_list()} out of bounds for {w}x{h}")
    xs = (0, bbox.x, bbox.x + bbox.w, w)
    ys = (0, bbox.y, bbox.y + bbox.h, h)
    cells = []
    for row in range(3):
        for col in range(3):
            if row == 1 and col == 1:
                continue
            cw = xs[col + 1] - xs[col]
            ch = ys[row + 1] - ys[row]
            if cw > 0 and ch > 0:
                cells.append(Rect(xs[col], ys[row], cw, ch))
    return cells


def choose_destination(
    cells: list[Rect], strategy: PlacementStrategy, rng: RngStream
) -> Rect:
    """Pick the destination cell; area ties resolve to the earliest cell."""
    if not cells:
        raise NoPlacementError("no candidate cells to place the salient region")
    if strategy is PlacementStrategy.MIN_AREA:
        return min(cells, key=lambda r: r.area)
    if strategy is PlacementStrategy.MAX_AREA:
        return max(cells, key=lambda r: r.area)
    return cells[rng.randint_below(len(cells))]


def _add_time(timings: dict | None, key: str, t0: float) -> float:
    t1 = time.perf_counter()
    if timings is not None:
        timings[key] = timings.get(key, 0.0) + (t1 - t0)
    return t1


def _kept_plan(cfg: PipelineConfig, image_index: int, method: Method) -> AugmentPlan:
    return AugmentPlan(
        image_index=image_index,
        seed=cfg.seed,
        applied=False,
        method=method,
        placement=cfg.placement,
        aug_target=cfg.aug_target,
        salient_bbox=None,
        dest_cell=None,
        op_log_whole=[],
        op_log_salient=[],
        saliency_provider=cfg.saliency_provider.value,
        tau=cfg.tau,
        fraction_achieved=0.0,
    )


def _fallback_rand_augment(
    img: Image,
    cfg: PipelineConfig,
    rng: RngStream,
    image_index: int,
    method: Method,
    found: SalientRegionResult | None,
    timings: dict | None,
) -> tuple[Image, AugmentPlan]:
    """Degenerate saliency or placement: plain whole-image augmentation."""
    t0 = time.perf_counter()
    out, log = rand_augment(img, RandPolicy(cfg.rand_n, cfg.rand_m), rng)
    _add_time(timings, "ops", t0)
    return out, AugmentPlan(
        image_index=image_index,
        seed=cfg.seed,
        applied=True,
        method=method,
        placement=cfg.placement,
        aug_target=cfg.aug_target,
        salient_bbox=found.bbox if found else None,
        dest_cell=None,
        op_log_whole=log,
        op_log_salient=[],
        saliency_provider=cfg.saliency_provider.value,
        tau=cfg.tau,
        fraction_achieved=found.fraction if found else 0.0,
    )


def _relocate(
    img: Image,
    cfg: PipelineConfig,
    rng: RngStream,
    image_index: int,
    method: Method,
    cutout_whole: bool,
    external_map: SaliencyMap | None,
    timings: dict | None,
) -> tuple[Image, AugmentPlan]:
    """Shared core of keep_original_augment and its cutout variant."""
    if rng.random() < cfg.keep_prob:
        return img, _kept_plan(cfg, image_index, method)

    t0 = time.perf_counter()
    smap = compute_saliency(img, cfg.saliency_provider, external_map)
    table = IntegralTable.from_map(smap)
    t0 = _add_time(timings, "saliency", t0)
    found = find_salient_region(
        smap, cfg.window_ratio, cfg.tau, cfg.growth_step,
        provider=cfg.saliency_provider.value, table=table,
    )
    _add_time(timings, "search", t0)
    if found is None:
        return _fallback_rand_augment(img, cfg, rng, image_index, method, None, timings)

    cells = eight_regions((img.width, img.height), found.bbox)
    try:
        dest = choose_destination(cells, cfg.placement, rng)
    except NoPlacementError:
        return _fallback_rand_augment(img, cfg, rng, image_index, method, found, timings)

    t0 = time.perf_counter()
    salient_crop = crop(img, found.bbox)
    resized = resize_bilinear(salient_crop, dest.w, dest.h)
    t0 = _add_time(timings, "compose", t0)

    policy = RandPolicy(cfg.rand_n, cfg.rand_m)
    log_whole: OpLog = []
    log_salient: OpLog = []

    # whole-image step first, then the salient crop
    if cfg.aug_target is AugTarget.SALIENT_ONLY:
        base = img
    elif cutout_whole:
        base, _mask = cutout(img, EraseParams().cutout_frac, rng, exclude=found.bbox)
    else:
        base, log_whole = rand_augment(img, policy, rng)

    if cfg.aug_target is AugTarget.NON_SALIENT_ONLY:
        patch = resized
    else:
        patch, log_salient = rand_augment(resized, policy, rng)
    _add_time(timings, "ops", t0)

    t0 = time.perf_counter()
    out = paste(base, patch, dest)
    if cfg.aug_target is AugTarget.NON_SALIENT_ONLY and cfg.also_restore_bbox:
        out = paste(out, salient_crop, found.bbox)
    _add_time(timings, "compose", t0)

    return out, AugmentPlan(
        image_index=image_index,
        seed=cfg.seed,
        applied=True,
        method=method,
        placement=cfg.placement,
        aug_target=cfg.aug_target,
        salient_bbox=found.bbox,
        dest_cell=dest,
        op_log_whole=log_whole,
        op_log_salient=log_salient,
        saliency_provider=cfg.saliency_provider.value,
        tau=cfg.tau,
        fraction_achieved=found.fraction,
    )


def keep_original_augment(
    img: Image,
    cfg: PipelineConfig,
    rng: RngStream,
    image_index: int = 0,
    external_map: SaliencyMap | None = None,
    timings: dict | None = None,
) -> tuple[Image, AugmentPlan]:
    """Relocate the salient region; augment whole image and/or crop per config."""
    return _relocate(
        img, cfg, rng, image_index, Method.KEEP_ORIGINAL,
        cutout_whole=False, external_map=external_map, timings=timings,
    )


def keep_original_cutout(
    img: Image,
    cfg: PipelineConfig,
    rng: RngStream,
    image_index: int = 0,
    external_map: SaliencyMap | None = None,
    timings: dict | None = None,
) -> tuple[Image, AugmentPlan]:
    """Relocation variant: the whole-image step is salient-excluding cutout."""
    return _relocate(
        img, cfg, rng, image_index, Method.KEEP_ORIGINAL_CUTOUT,
        cutout_whole=True, external_map=external_map, timings=timings,
    )


def keep_augment_baseline(
    img: Image,
    cfg: PipelineConfig,
    rng: RngStream,
    image_index: int = 0,
    external_map: SaliencyMap | None = None,
    timings: dict | None = None,
) -> tuple[Image, AugmentPlan]:
    """Augment the whole image, then restore the original salient crop in place."""
    method = Method.KEEP_AUGMENT
    if rng.random() < cfg.keep_prob:
        return img, _kept_plan(cfg, image_index, method)
    t0 = time.perf_counter()
    smap = compute_saliency(img, cfg.saliency_provider, external_map)
    t0 = _add_time(timings, "saliency", t0)
    found = find_salient_region(
        smap, cfg.window_ratio, cfg.tau, cfg.growth_step,
        provider=cfg.saliency_provider.value,
    )
    _add_time(timings, "search", t0)
    if found is None:
        return _fallback_rand_augment(img, cfg, rng, image_index, method, None, timings)
    t0 = time.perf_counter()
    base, log_whole = rand_augment(img, RandPolicy(cfg.rand_n, cfg.rand_m), rng)
    t0 = _add_time(timings, "ops", t0)
    out = paste(base, crop(img, found.bbox), found.bbox)
    _add_time(timings, "compose", t0)
    return out, AugmentPlan(
        image_index=image_index,
        seed=cfg.seed,
        applied=True,
        method=method,
        placement=cfg.placement,
        aug_target=cfg.aug_target,
        salient_bbox=found.bbox,
        dest_cell=None,
        op_log_whole=log_whole,
        op_log_salient=[],
        saliency_provider=cfg.saliency_provider.value,
        tau=cfg.tau,
        fraction_achieved=found.fraction,
    )


def salfmix_baseline(
    img: Image,
    cfg: PipelineConfig,
    rng: RngStream,
    image_index: int = 0,
    external_map: SaliencyMap | None = None,
    timings: dict | None = None,
) -> tuple[Image, AugmentPlan]:
    """Duplicate the unmodified salient crop into the least-important cell."""
    method = Method.SALFMIX
    if rng.random() < cfg.keep_prob:
        return img, _kept_plan(cfg, image_index, method)
    t0 = time.perf_counter()
    smap = compute_saliency(img, cfg.saliency_provider, external_map)
    table = IntegralTable.from_map(smap)
    t0 = _add_time(timings, "saliency", t0)
    found = find_salient_region(
        smap, cfg.window_ratio, cfg.tau, cfg.growth_step,
        provider=cfg.saliency_provider.value, table=table,
    )
    _add_time(timings, "search", t0)
    if found is None:
        return _fallback_rand_augment(img, cfg, rng, image_index, method, None, timings)
    cells = eight_regions((img.width, img.height), found.bbox)
    if not cells:
        return _fallback_rand_augment(img, cfg, rng, image_index, method, found, timings)
    dest = min(cells, key=lambda r: table.sum_rect(r))
    t0 = time.perf_counter()
    out = paste(img, resize_bilinear(crop(img, found.bbox), dest.w, dest.h), dest)
    _add_time(timings, "compose", t0)
    return out, AugmentPlan(
        image_index=image_index,
        seed=cfg.seed,
        applied=True,
        method=method,
        placement=cfg.placement,
        aug_target=cfg.aug_target,
        salient_bbox=found.bbox,
        dest_cell=dest,
        op_log_whole=[],
        op_log_salient=[],
        saliency_provider=cfg.saliency_provider.value,
        tau=cfg.tau,
        fraction_achieved=found.fraction,
    )


def _erase_method(
    img: Image,
    cfg: PipelineConfig,
    rng: RngStream,
    image_index: int,
    method: Method,
    timings: dict | None,
) -> tuple[Image, AugmentPlan]:
    if rng.random() < cfg.keep_prob:
        return img, _kept_plan(cfg, image_index, method)
    params = EraseParams()
    t0 = time.perf_counter()
    if method is Method.CUTOUT:
        out, _mask = cutout(img, params.cutout_frac, rng)
    elif method is Method.RANDOM_ERASING:
        out, _mask = random_erasing(img, params, rng)
    elif method is Method.GRIDMASK:
        out = gridmask(img, params.grid_unit, params.grid_ratio, rng)
    elif method is Method.HIDE_AND_SEEK:
        grid = min(params.hide_grid, img.width, img.height)
        out = hide_and_seek(img, grid, params.hide_prob, rng)
    else:
        raise ValidationError(f"not an erase method: {method}")
    _add_time(timings, "ops", t0)
    return out, AugmentPlan(
        image_index=image_index,
        seed=cfg.seed,
        applied=True,
        method=method,
        placement=cfg.placement,
        aug_target=cfg.aug_target,
        salient_bbox=None,
        dest_cell=None,
        op_log_whole=[],
        op_log_salient=[],
        saliency_provider=cfg.saliency_provider.value,
        tau=cfg.tau,
        fraction_achieved=0.0,
    )


def augment_image(
    img: Image,
    cfg: PipelineConfig,
    rng: RngStream,
    image_index: int = 0,
    external_map: SaliencyMap | None = None,
    timings: dict | None = None,
) -> tuple[Image, AugmentPlan]:
    """Run the configured method on one image. `none` passes through untouched."""
    m = cfg.method
    if m is Method.NONE:
        return img, _kept_plan(cfg, image_index, m)
    if m is Method.KEEP_ORIGINAL:
        return keep_original_augment(img, cfg, rng, image_index, external_map, timings)
    if m is Method.KEEP_ORIGINAL_CUTOUT:
        return keep_original_cutout(img, cfg, rng, image_index, external_map, timings)
    if m is Method.KEEP_AUGMENT:
        return keep_augment_baseline(img, cfg, rng, image_index, external_map, timings)
    if m is Method.SALFMIX:
        return salfmix_baseline(img, cfg, rng, image_index, external_map, timings)
    return _erase_method(img, cfg, rng, image_index, m, timings)
