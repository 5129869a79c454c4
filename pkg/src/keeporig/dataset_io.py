"""Corpus ingestion and emission: CIFAR binary batches, image files, scans.

CIFAR layout (the standard binary distribution): each record is one or two
label bytes followed by 3072 pixel bytes as three 1024-byte planes (R, G,
B), each plane row-major 32x32. pixel(i, j, c) = plane_c[j*32 + i].
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage, UnidentifiedImageError

from .core import FormatError, Image, ValidationError

CIFAR10_CLASSES = 10
CIFAR100_FINE = 100
CIFAR100_COARSE = 20
_PIXELS = 3072


@dataclass(frozen=True)
class CifarRecord:
    """label: the primary (fine) class; coarse: CIFAR-100 superclass or None."""

    label: int
    image: Image
    coarse: int | None = None


def _record_size(variant: str) -> int:
    if variant == "c10":
        return 1 + _PIXELS
    if variant == "c100":
        return 2 + _PIXELS
    raise ValidationError(f"variant must be 'c10' or 'c100', got {variant!r}")


def _planes_to_image(pixels: bytes) -> Image:
    planes = np.frombuffer(pixels, dtype=np.uint8).reshape(3, 32, 32)
    return Image(np.ascontiguousarray(planes.transpose(1, 2, 0)))


def _image_to_planes(img: Image) -> bytes:
    if (img.width, img.height, img.channels) != (32, 32, 3):
        raise ValidationError(
            f"CIFAR images must be 32x32x3, got {img.width}x{img.height}x{img.channels}"
        )
    return np.ascontiguousarray(img.data.transpose(2, 0, 1)).tobytes()


def read_cifar_batch(path: str | os.PathLike, variant: str) -> list[CifarRecord]:
    """Decode a batch file in record order; errors carry the byte offset."""
    rec_size = _record_size(variant)
    try:
        blob = Path(path).read_bytes()
    except OSError as e:
        raise FormatError(f"cannot read CIFAR batch {path}: {e}") from None
    if len(blob) % rec_size != 0:
        raise FormatError(
            f"{path}: length {len(blob)} is not a multiple of the {rec_size}-byte "
            f"record size (stray {len(blob) % rec_size} bytes at offset "
            f"{len(blob) - len(blob) % rec_size})"
        )
    records = []
    for i in range(len(blob) // rec_size):
        off = i * rec_size
        if variant == "c10":
            label = blob[off]
            if label >= CIFAR10_CLASSES:
                raise FormatError(f"{path}: label {label} out of range at offset {off}")
            coarse = None
            body = blob[off + 1 : off + rec_size]
        else:
            coarse = blob[off]
            label = blob[off + 1]
            if coarse >= CIFAR100_COARSE:
                raise FormatError(f"{path}: coarse label {coarse} out of range at offset {off}")
            if label >= CIFAR100_FINE:
                raise FormatError(f"{path}: fine label {label} out of range at offset {off + 1}")
            body = blob[off + 2 : off + rec_size]
        records.append(CifarRecord(label=label, image=_planes_to_image(body), coarse=coarse))
    return records


def encode_cifar_batch(records: list[CifarRecord], variant: str) -> bytes:
    """Serialize records to batch bytes; inverse of read_cifar_batch."""
    rec_size = _record_size(variant)
    chunks = []
    for i, rec in enumerate(records):
        if variant == "c10":
            if not 0 <= rec.label < CIFAR10_CLASSES:
                raise ValidationError(f"record {i}: label {rec.label} out of range")
            head = bytes([rec.label])
        else:
            coarse = rec.coarse if rec.coarse is not None else 0
            if not 0 <= coarse < CIFAR100_COARSE:
                raise ValidationError(f"record {i}: coarse label {coarse} out of range")
            if not 0 <= rec.label < CIFAR100_FINE:
                raise ValidationError(f"record {i}: fine label {rec.label} out of range")
            head = bytes([coarse, rec.label])
        body = _image_to_planes(rec.image)
        assert len(head) + len(body) == rec_size
        chunks.append(head + body)
    return b"".join(chunks)


def write_cifar_batch(
    records: list[CifarRecord], path: str | os.PathLike, variant: str
) -> None:
    """Inverse of read_cifar_batch; read(write(x)) is byte-identity."""
    Path(path).write_bytes(encode_cifar_batch(records, variant))


def read_image_file(path: str | os.PathLike) -> Image:
    """Decode PNG/JPEG (and whatever else the codec stack accepts) to 8-bit.

    Grayscale stays single-channel; palette, 16-bit, and alpha modes are
    down-converted: P/RGBA/anything colored -> RGB, I;16/I -> high byte of
    the 16-bit range as grayscale.
    """
    try:
        with PILImage.open(path) as im:
            im.load()
            if im.mode == "L":
                arr = np.asarray(im, dtype=np.uint8)
            elif im.mode in ("I;16", "I"):
                wide = np.asarray(im, dtype=np.int32)
                arr = np.clip(wide >> 8, 0, 255).astype(np.uint8)
            elif im.mode == "LA":
                arr = np.asarray(im.convert("L"), dtype=np.uint8)
            else:
                arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except UnidentifiedImageError:
        raise FormatError(f"not a decodable image: {path}") from None
    except OSError as e:
        raise FormatError(f"cannot read image {path}: {e}") from None
    return Image.from_array(arr)


def write_image_file(img: Image, path: str | os.PathLike, format: str = "png") -> None:
    """Write PNG (lossless) or JPEG (quality 95)."""
    Path(path).write_bytes(encode_image(img, format))


def encode_image(img: Image, format: str = "png") -> bytes:
    """Encode to in-memory bytes; used for byte-exact replay comparison."""
    import io

    arr = img.data[:, :, 0] if img.channels == 1 else img.data
    pil = PILImage.fromarray(arr)
    buf = io.BytesIO()
    if format == "png":
        pil.save(buf, format="PNG")
    elif format == "jpeg":
        pil.save(buf, format="JPEG", quality=95)
    else:
        raise ValidationError(f"format must be 'png' or 'jpeg', got {format!r}")
    return buf.getvalue()


DEFAULT_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp")


def scan_corpus(
    root: str | os.PathLike, extensions: tuple[str, ...] = DEFAULT_EXTENSIONS
) -> list[Path]:
    """Recursive scan, ordered lexicographically by relative POSIX path bytes.

    The ordering feeds per-image seeds, so it must not depend on platform
    directory enumeration order.
    """
    rootp = Path(root)
    if not rootp.is_dir():
        raise FormatError(f"not a directory: {root}")
    exts = tuple(e.lower() for e in extensions)
    found = []
    for dirpath, dirnames, filenames in os.walk(rootp):
        dirnames.sort()
        for name in filenames:
            if name.lower().endswith(exts):
                p = Path(dirpath) / name
                found.append((p.relative_to(rootp).as_posix().encode("utf-8"), p))
    found.sort(key=lambda t: t[0])
    return [p for _, p in found]
