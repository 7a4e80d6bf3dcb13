"""Patch-embedding extraction front end for the FTB1 + manifest contract."""

from .extract import (
    ExtractConfig,
    ExtractError,
    ExtractResult,
    PatchEmbedder,
    extract_features,
)
from .ftb import write_ftb1, write_manifest

__version__ = "0.1.0"

__all__ = [
    "ExtractConfig",
    "ExtractError",
    "ExtractResult",
    "PatchEmbedder",
    "extract_features",
    "write_ftb1",
    "write_manifest",
]
