"""Deterministic saliency-guided image augmentation and corpus tooling."""
from __future__ import annotations

from .core import (
    AugmentError,
    AugTarget,
    ConfigError,
    FormatError,
    GeometryError,
    Image,
    Method,
    NoPlacementError,
    PipelineConfig,
    PlacementStrategy,
    Rect,
    RngStream,
    SaliencyProvider,
    ValidationError,
)

__all__ = [
    "AugmentError",
    "AugTarget",
    "ConfigError",
    "FormatError",
    "GeometryError",
    "Image",
    "Method",
    "NoPlacementError",
    "PipelineConfig",
    "PlacementStrategy",
    "Rect",
    "RngStream",
    "SaliencyProvider",
    "ValidationError",
]

__version__ = "0.1.0"
