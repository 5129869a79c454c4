"""Batch drivers behind the CLI: augment, saliency dump, preview, replay, bench.

Parallelism model: one coordinator, stateless worker processes over an
index-sharded list. Every image's randomness comes from RngStream(master
seed, image index), so the worker count can never change output bytes;
workers write their own per-image files while the coordinator writes the
manifest in index order.
"""
from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .composer import AugmentPlan, augment_image
from .core import (
    AugmentError,
    FormatError,
    Image,
    PipelineConfig,
    Rect,
    RngStream,
    SaliencyProvider,
    quantize_u8,
)
from .dataset_io import (
    CifarRecord,
    encode_cifar_batch,
    encode_image,
    read_cifar_batch,
    read_image_file,
    scan_corpus,
    write_cifar_batch,
    write_image_file,
)
from .saliency import SaliencyMap, compute_saliency, load_external_saliency, write_salm

MANIFEST_NAME = "manifest.jsonl"


@dataclass
class BatchOutcome:
    total: int
    failures: int
    manifest_path: Path | None = None


class StrictAbort(AugmentError):
    """First per-image failure under --strict."""


def manifest_header(cfg: PipelineConfig, input_mode: str, input_path: str) -> dict:
    """Resolved config echo. `workers` is execution-only and deliberately
    omitted so runs at different widths produce identical manifests."""
    d = cfg.to_dict()
    d.pop("workers")
    return {"config": d, "input_mode": input_mode, "input": input_path}


def _write_manifest(path: Path, header: dict, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(json.dumps(header, separators=(",", ":")) + "\n")
        for row in rows:
            f.write(json.dumps(row, separators=(",", ":")) + "\n")


def read_manifest(path: str | Path) -> tuple[dict, list[dict]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise FormatError(f"{path}: empty manifest")
    header = json.loads(lines[0])
    if "config" not in header:
        raise FormatError(f"{path}: first line is not a manifest header")
    return header, [json.loads(ln) for ln in lines[1:]]


def _error_row(cfg: PipelineConfig, index: int, message: str) -> dict:
    plan = AugmentPlan(
        image_index=index,
        seed=cfg.seed,
        applied=False,
        method=cfg.method,
        placement=cfg.placement,
        aug_target=cfg.aug_target,
        salient_bbox=None,
        dest_cell=None,
        op_log_whole=[],
        op_log_salient=[],
        saliency_provider=cfg.saliency_provider.value,
        tau=cfg.tau,
        fraction_achieved=0.0,
        error=message,
    )
    return plan.to_row()


def sidecar_path(image_path: Path) -> Path:
    return image_path.with_suffix(".salm")


def _load_sidecar(cfg: PipelineConfig, path: Path, img: Image) -> SaliencyMap | None:
    if cfg.saliency_provider is not SaliencyProvider.EXTERNAL:
        return None
    return load_external_saliency(sidecar_path(path), (img.width, img.height))


def output_name(index: int, stem: str) -> str:
    return f"{index:08d}_{stem}.png"


def _augment_file_task(args: tuple) -> dict:
    """Worker: read one corpus image, augment, write its PNG, return the row."""
    index, path_str, out_dir_str, cfg_dict = args
    cfg = PipelineConfig.from_dict(cfg_dict)
    path = Path(path_str)
    try:
        img = read_image_file(path)
        external = _load_sidecar(cfg, path, img)
        out, plan = augment_image(
            img, cfg, RngStream(cfg.seed, index), image_index=index, external_map=external
        )
        write_image_file(out, Path(out_dir_str) / output_name(index, path.stem), "png")
        return plan.to_row()
    except (AugmentError, OSError) as e:
        return _error_row(cfg, index, str(e))


def _augment_cifar_task(args: tuple) -> tuple[dict, bytes, int, int | None]:
    """Worker: augment one decoded CIFAR record, return (row, planes, labels)."""
    index, label, coarse, pixel_bytes, cfg_dict = args
    cfg = PipelineConfig.from_dict(cfg_dict)
    planes = np.frombuffer(pixel_bytes, dtype=np.uint8).reshape(3, 32, 32)
    img = Image(np.ascontiguousarray(planes.transpose(1, 2, 0)))
    try:
        out, plan = augment_image(img, cfg, RngStream(cfg.seed, index), image_index=index)
        row = plan.to_row()
    except AugmentError as e:
        row = _error_row(cfg, index, str(e))
        out = img
    return row, np.ascontiguousarray(out.data.transpose(2, 0, 1)).tobytes(), label, coarse


def _run_tasks(task_fn, tasks: list, workers: int):
    """Yield task results in index order, inline or via a process pool."""
    if workers <= 1 or len(tasks) <= 1:
        for t in tasks:
            yield task_fn(t)
        return
    chunk = max(1, math.ceil(len(tasks) / (workers * 8)))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        yield from pool.map(task_fn, tasks, chunksize=chunk)


def run_augment(
    input_path: str | Path,
    output_dir: str | Path,
    cfg: PipelineConfig,
    cifar: int | None = None,
    strict: bool = False,
) -> BatchOutcome:
    """Process a corpus directory or CIFAR batch; emit outputs + manifest."""
    out_dir = Path(output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    in_path = Path(input_path)
    if cifar is None:
        mode = "corpus"
        files = scan_corpus(in_path)
        tasks = [(i, str(p), str(out_dir), cfg.to_dict()) for i, p in enumerate(files)]
        task_fn = _augment_file_task
    else:
        mode = f"cifar{cifar}"
        variant = "c10" if cifar == 10 else "c100"
        records = read_cifar_batch(in_path, variant)
        tasks = [
            (i, r.label, r.coarse, np.ascontiguousarray(r.image.data.transpose(2, 0, 1)).tobytes(), cfg.to_dict())
            for i, r in enumerate(records)
        ]
        task_fn = _augment_cifar_task

    rows: list[dict] = []
    out_records: list[CifarRecord] = []
    failures = 0
    for result in _run_tasks(task_fn, tasks, cfg.workers):
        if cifar is None:
            row = result
        else:
            row, planes, label, coarse = result
            img = Image(
                np.ascontiguousarray(
                    np.frombuffer(planes, dtype=np.uint8).reshape(3, 32, 32).transpose(1, 2, 0)
                )
            )
            out_records.append(CifarRecord(label=label, image=img, coarse=coarse))
        rows.append(row)
        if row.get("error"):
            failures += 1
            if strict:
                raise StrictAbort(f"image {row['image_index']}: {row['error']}")

    if cifar is not None:
        write_cifar_batch(out_records, out_dir / in_path.name, variant)
    manifest = out_dir / MANIFEST_NAME
    _write_manifest(manifest, manifest_header(cfg, mode, str(input_path)), rows)
    return BatchOutcome(total=len(rows), failures=failures, manifest_path=manifest)


def heatmap_image(smap: SaliencyMap) -> Image:
    return Image(quantize_u8(smap.values * 255.0)[:, :, None])


def run_saliency(
    input_path: str | Path,
    output_dir: str | Path,
    cfg: PipelineConfig,
    strict: bool = False,
) -> BatchOutcome:
    """Per input image: one SALM map file plus an 8-bit heatmap PNG."""
    out_dir = Path(output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = scan_corpus(Path(input_path))
    rows: list[dict] = []
    failures = 0
    for i, p in enumerate(files):
        row = {"image_index": i, "input": p.name, "salm": None, "heatmap": None, "error": None}
        try:
            img = read_image_file(p)
            smap = compute_saliency(img, cfg.saliency_provider, _load_sidecar(cfg, p, img))
            salm_name = f"{i:08d}_{p.stem}.salm"
            heat_name = f"{i:08d}_{p.stem}.png"
            write_salm(smap, out_dir / salm_name)
            write_image_file(heatmap_image(smap), out_dir / heat_name, "png")
            row["salm"] = salm_name
            row["heatmap"] = heat_name
        except (AugmentError, OSError) as e:
            row["error"] = str(e)
            failures += 1
            if strict:
                raise StrictAbort(f"image {i}: {e}") from None
        rows.append(row)
    manifest = out_dir / MANIFEST_NAME
    _write_manifest(manifest, manifest_header(cfg, "saliency", str(input_path)), rows)
    return BatchOutcome(total=len(rows), failures=failures, manifest_path=manifest)


GUTTER = 4
_BBOX_COLOR = (255, 0, 0)
_DEST_COLOR = (0, 255, 0)


def _to_rgb(img: Image) -> np.ndarray:
    if img.channels == 3:
        return img.data.copy()
    return np.repeat(img.data, 3, axis=2)


def draw_outline(rgb: np.ndarray, r: Rect, color: tuple[int, int, int]) -> None:
    """1-pixel perimeter strictly inside the rect."""
    x1, y1 = r.x + r.w - 1, r.y + r.h - 1
    rgb[r.y, r.x : x1 + 1] = color
    rgb[y1, r.x : x1 + 1] = color
    rgb[r.y : y1 + 1, r.x] = color
    rgb[r.y : y1 + 1, x1] = color


def preview_panels(img: Image, cfg: PipelineConfig, index: int,
                   external: SaliencyMap | None = None) -> list[np.ndarray]:
    """[original | heatmap | original with bbox/dest outlines | augmented]."""
    smap = compute_saliency(img, cfg.saliency_provider, external)
    out, plan = augment_image(
        img, cfg, RngStream(cfg.seed, index), image_index=index, external_map=external
    )
    annotated = _to_rgb(img)
    if plan.salient_bbox is not None:
        draw_outline(annotated, plan.salient_bbox, _BBOX_COLOR)
    if plan.dest_cell is not None:
        draw_outline(annotated, plan.dest_cell, _DEST_COLOR)
    heat = _to_rgb(heatmap_image(smap))
    return [_to_rgb(img), heat, annotated, _to_rgb(out)]


def run_preview(
    input_path: str | Path,
    output_file: str | Path,
    cfg: PipelineConfig,
    grid: tuple[int, int] = (2, 4),
) -> BatchOutcome:
    """Contact sheet: each sampled image occupies four consecutive cells."""
    rows_n, cols_n = grid
    if rows_n < 1 or cols_n < 1:
        raise FormatError(f"grid must be at least 1x1, got {rows_n}x{cols_n}")
    files = scan_corpus(Path(input_path))
    n_images = min(len(files), max(1, (rows_n * cols_n) // 4)) if files else 0
    panels: list[np.ndarray] = []
    for i in range(n_images):
        img = read_image_file(files[i])
        panels.extend(preview_panels(img, cfg, i, _load_sidecar(cfg, files[i], img)))
    panels = panels[: rows_n * cols_n]

    cell_w = max((p.shape[1] for p in panels), default=32)
    cell_h = max((p.shape[0] for p in panels), default=32)
    sheet_w = cols_n * cell_w + (cols_n + 1) * GUTTER
    sheet_h = rows_n * cell_h + (rows_n + 1) * GUTTER
    sheet = np.full((sheet_h, sheet_w, 3), 255, dtype=np.uint8)
    for k, p in enumerate(panels):
        r, c = divmod(k, cols_n)
        y0 = GUTTER + r * (cell_h + GUTTER)
        x0 = GUTTER + c * (cell_w + GUTTER)
        sheet[y0 : y0 + p.shape[0], x0 : x0 + p.shape[1]] = p
    write_image_file(Image(sheet), output_file, "png")
    return BatchOutcome(total=n_images, failures=0)


def _replay_corpus(header: dict, rows: list[dict], input_path: Path, out_dir: Path) -> list[str]:
    cfg = PipelineConfig.from_dict(header["config"])
    files = scan_corpus(input_path)
    problems = []
    for row in rows:
        idx = row["image_index"]
        if row.get("error"):
            continue
        if idx >= len(files):
            problems.append(f"index {idx}: input corpus has only {len(files)} files")
            continue
        src = files[idx]
        plan = AugmentPlan.from_row(row)
        img = read_image_file(src)
        external = _load_sidecar(cfg, src, img)
        out, redo = augment_image(
            img, cfg, RngStream(plan.seed, idx), image_index=idx, external_map=external
        )
        if redo.to_row() != row:
            problems.append(f"index {idx}: plan mismatch on replay")
            continue
        stored = out_dir / output_name(idx, src.stem)
        if not stored.exists():
            problems.append(f"index {idx}: missing output {stored.name}")
            continue
        if stored.read_bytes() != encode_image(out, "png"):
            problems.append(f"index {idx}: output bytes differ ({stored.name})")
    return problems


def _replay_cifar(header: dict, rows: list[dict], input_path: Path, out_dir: Path) -> list[str]:
    cfg = PipelineConfig.from_dict(header["config"])
    variant = "c10" if header["input_mode"] == "cifar10" else "c100"
    records = read_cifar_batch(input_path, variant)
    problems = []
    out_records = []
    for row in rows:
        idx = row["image_index"]
        if idx >= len(records):
            problems.append(f"index {idx}: input batch has only {len(records)} records")
            continue
        rec = records[idx]
        if row.get("error"):
            out_records.append(rec)
            continue
        plan = AugmentPlan.from_row(row)
        out, redo = augment_image(rec.image, cfg, RngStream(plan.seed, idx), image_index=idx)
        if redo.to_row() != row:
            problems.append(f"index {idx}: plan mismatch on replay")
        out_records.append(CifarRecord(label=rec.label, image=out, coarse=rec.coarse))
    stored = out_dir / input_path.name
    if not stored.exists():
        problems.append(f"missing output batch {stored.name}")
    elif stored.read_bytes() != encode_cifar_batch(out_records, variant):
        problems.append(f"output batch bytes differ ({stored.name})")
    return problems


def run_replay(manifest_path: str | Path, input_path: str | Path) -> tuple[int, list[str]]:
    """Re-execute every manifest row and byte-compare against stored outputs.

    Returns (rows checked, problem descriptions); empty problems = clean.
    """
    manifest = Path(manifest_path)
    header, rows = read_manifest(manifest)
    out_dir = manifest.parent
    mode = header.get("input_mode", "corpus")
    if mode == "corpus":
        problems = _replay_corpus(header, rows, Path(input_path), out_dir)
    elif mode in ("cifar10", "cifar100"):
        problems = _replay_cifar(header, rows, Path(input_path), out_dir)
    else:
        raise FormatError(f"cannot replay manifest with input_mode {mode!r}")
    return len(rows), problems


def _bench_task(args: tuple) -> int:
    index, raw, size, cfg_dict = args
    cfg = PipelineConfig.from_dict(cfg_dict)
    img = Image(np.frombuffer(raw, dtype=np.uint8).reshape(size, size, 3).copy())
    augment_image(img, cfg, RngStream(cfg.seed, index), image_index=index)
    return index


def synthetic_images(count: int, size: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).integers(0, 256, size=(count, size, size, 3), dtype=np.uint8)


def run_bench(count: int, size: int, cfg: PipelineConfig) -> dict:
    """Time the full configured method over seeded synthetic images."""
    report: dict = {"count": count, "size": size, "runs": [], "stages": {}}
    if count == 0:
        return report
    batch = synthetic_images(count, size, cfg.seed)

    timings: dict = {}
    t0 = time.perf_counter()
    for i in range(count):
        img = Image(batch[i].copy())
        augment_image(img, cfg, RngStream(cfg.seed, i), image_index=i, timings=timings)
    wall = time.perf_counter() - t0
    report["stages"] = {k: round(v, 6) for k, v in sorted(timings.items())}
    report["runs"].append(
        {"workers": 1, "wall_s": round(wall, 6), "images_per_s": round(count / wall, 2)}
    )

    if cfg.workers > 1:
        tasks = [(i, batch[i].tobytes(), size, cfg.to_dict()) for i in range(count)]
        t0 = time.perf_counter()
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            for _ in pool.map(_bench_task, tasks, chunksize=max(1, count // (cfg.workers * 8))):
                pass
        wall_n = time.perf_counter() - t0
        report["runs"].append(
            {
                "workers": cfg.workers,
                "wall_s": round(wall_n, 6),
                "images_per_s": round(count / wall_n, 2),
            }
        )
    return report


def run_cifar_roundtrip(input_path: str | Path, cifar: int) -> tuple[int, bool]:
    """Decode + re-encode the batch; report (records, byte-identical)."""
    variant = "c10" if cifar == 10 else "c100"
    in_path = Path(input_path)
    records = read_cifar_batch(in_path, variant)
    return len(records), encode_cifar_batch(records, variant) == in_path.read_bytes()
