"""Command-line surface.

Config resolution: built-in defaults, then the config file (--config flag
or KEEPORIG_CONFIG env var), then explicit flags. The fully resolved
config is echoed into every manifest header.

Exit codes: 0 success, 1 per-image failures or verification mismatches,
2 invocation/config errors.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .core import AugmentError, ConfigError, FormatError, PipelineConfig
from .pipeline import (
    StrictAbort,
    run_augment,
    run_bench,
    run_cifar_roundtrip,
    run_preview,
    run_replay,
    run_saliency,
)

ENV_CONFIG = "KEEPORIG_CONFIG"

_FIELD_PARSERS = {
    "tau": float,
    "window_ratio": float,
    "keep_prob": float,
    "rand_m": float,
    "growth_step": float,
    "rand_n": int,
    "seed": int,
    "workers": int,
    "placement": str,
    "aug_target": str,
    "method": str,
    "saliency_provider": str,
}


def _parse_bool(raw: str) -> bool:
    low = raw.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError(raw)


_FIELD_PARSERS["also_restore_bbox"] = _parse_bool


def parse_config_file(path: str | Path) -> dict:
    """Flat `key = value` lines, # comments; keys are config field names."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from None
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected `key = value`, got {raw.strip()!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        parser = _FIELD_PARSERS.get(key)
        if parser is None:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        try:
            out[key] = parser(value)
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {value!r}") from None
    return out


_FLAG_TO_FIELD = {
    "method": "method",
    "placement": "placement",
    "aug_target": "aug_target",
    "tau": "tau",
    "window_ratio": "window_ratio",
    "keep_prob": "keep_prob",
    "rand_n": "rand_n",
    "rand_m": "rand_m",
    "provider": "saliency_provider",
    "seed": "seed",
    "workers": "workers",
}


def resolve_config(args: argparse.Namespace) -> PipelineConfig:
    """defaults < config file < flags."""
    merged: dict = {}
    cfg_path = getattr(args, "config", None) or os.environ.get(ENV_CONFIG)
    if cfg_path:
        merged.update(parse_config_file(cfg_path))
    for flag, field in _FLAG_TO_FIELD.items():
        value = getattr(args, flag, None)
        if value is not None:
            merged[field] = value
    return PipelineConfig.from_dict(merged)


def _add_config_flags(p: argparse.ArgumentParser, include_workers: bool = True) -> None:
    p.add_argument("--config", help="config file (flat key = value)")
    p.add_argument("--method", choices=[
        "keep_original", "keep_original_cutout", "keep_augment", "salfmix",
        "cutout", "random_erasing", "gridmask", "hide_and_seek", "none",
    ])
    p.add_argument("--placement", choices=["min", "max", "random"])
    p.add_argument("--aug-target", dest="aug_target", choices=["salient", "non_salient", "both"])
    p.add_argument("--tau", type=float)
    p.add_argument("--window-ratio", dest="window_ratio", type=float)
    p.add_argument("--keep-prob", dest="keep_prob", type=float)
    p.add_argument("--rand-n", dest="rand_n", type=int)
    p.add_argument("--rand-m", dest="rand_m", type=float)
    p.add_argument("--provider", choices=["fine_grained", "gradient_magnitude", "external"])
    p.add_argument("--seed", type=int)
    if include_workers:
        p.add_argument("--workers", type=int)


def _parse_grid(raw: str) -> tuple[int, int]:
    parts = raw.lower().split("x")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"grid must look like RxC, got {raw!r}")
    try:
        rows, cols = int(parts[0]), int(parts[1])
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like RxC, got {raw!r}") from None
    if rows < 1 or cols < 1:
        raise argparse.ArgumentTypeError(f"grid dims must be positive, got {raw!r}")
    return rows, cols


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="keeporig",
        description="Saliency-guided salient-region relocation augmentation over image corpora.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("augment", help="augment a corpus directory or CIFAR batch")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--cifar", type=int, choices=[10, 100])
    p.add_argument("--strict", action="store_true", help="abort on first per-image error")
    _add_config_flags(p)

    p = sub.add_parser("saliency", help="dump saliency maps and heatmaps")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--strict", action="store_true")
    _add_config_flags(p)

    p = sub.add_parser("preview", help="render a contact sheet")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True, help="output PNG path")
    p.add_argument("--grid", type=_parse_grid, default=(2, 4), help="RxC panel grid")
    _add_config_flags(p)

    p = sub.add_parser("cifar-roundtrip", help="verify CIFAR decode/encode identity")
    p.add_argument("--input", required=True)
    p.add_argument("--cifar", type=int, choices=[10, 100], default=10)

    p = sub.add_parser("replay", help="re-execute a manifest and verify outputs")
    p.add_argument("--manifest", required=True)
    p.add_argument("--input", required=True)

    p = sub.add_parser("bench", help="throughput benchmark over synthetic images")
    p.add_argument("--count", type=int, default=10000)
    p.add_argument("--size", type=int, default=32)
    _add_config_flags(p)

    return ap


def _cmd_augment(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    try:
        outcome = run_augment(args.input, args.output, cfg, cifar=args.cifar, strict=args.strict)
    except StrictAbort as e:
        print(f"aborted: {e}", file=sys.stderr)
        return 1
    print(
        f"augment: {outcome.total} images, {outcome.failures} failures, "
        f"manifest {outcome.manifest_path}"
    )
    return 1 if outcome.failures else 0


def _cmd_saliency(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    try:
        outcome = run_saliency(args.input, args.output, cfg, strict=args.strict)
    except StrictAbort as e:
        print(f"aborted: {e}", file=sys.stderr)
        return 1
    print(f"saliency: {outcome.total} images, {outcome.failures} failures")
    return 1 if outcome.failures else 0


def _cmd_preview(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    outcome = run_preview(args.input, args.output, cfg, grid=args.grid)
    print(f"preview: {outcome.total} images -> {args.output}")
    return 0


def _cmd_cifar_roundtrip(args: argparse.Namespace) -> int:
    count, same = run_cifar_roundtrip(args.input, args.cifar)
    verdict = "byte-identical" if same else "MISMATCH"
    print(f"cifar-roundtrip: {count} records, re-encode {verdict}")
    return 0 if same else 1


def _cmd_replay(args: argparse.Namespace) -> int:
    total, problems = run_replay(args.manifest, args.input)
    if problems:
        for p in problems:
            print(f"replay mismatch: {p}", file=sys.stderr)
        print(f"replay: {total} rows, {len(problems)} mismatches")
        return 1
    print(f"replay: {total} rows verified, clean")
    return 0


def _cmd_bench(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    report = run_bench(args.count, args.size, cfg)
    print(f"bench: {report['count']} synthetic {report['size']}x{report['size']} images")
    for run in report["runs"]:
        print(
            f"  workers={run['workers']}: {run['wall_s']:.3f}s "
            f"({run['images_per_s']:.1f} images/s)"
        )
    if report["stages"]:
        total_staged = sum(report["stages"].values())
        breakdown = ", ".join(f"{k}={v:.3f}s" for k, v in report["stages"].items())
        print(f"  stages: {breakdown} (sum {total_staged:.3f}s)")
    return 0


_COMMANDS = {
    "augment": _cmd_augment,
    "saliency": _cmd_saliency,
    "preview": _cmd_preview,
    "cifar-roundtrip": _cmd_cifar_roundtrip,
    "replay": _cmd_replay,
    "bench": _cmd_bench,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, FormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except AugmentError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
