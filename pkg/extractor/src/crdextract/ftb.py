"""Writers for the FTB1 tensor and CSV manifest interchange contract.

Implemented from the documented byte layout on purpose, without importing
the consumer package, so the two sides of the contract stay independent.

FTB1 (all integers little-endian): magic b"FTB1", uint32 rank (2), uint64
dims [n_rows, n_cols], uint8 dtype tag (1 = float32), uint64 payload byte
length, then the float32 payload row-major. Manifest: UTF-8 CSV with header
``feature_path,image_id,label,mask_path,grid_h,grid_w``.
"""

from __future__ import annotations

import csv
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

_HEADER = struct.Struct("<4sIQQBQ")
MANIFEST_FIELDS = ["feature_path", "image_id", "label", "mask_path", "grid_h", "grid_w"]


def _atomic_write(path: Path, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_ftb1(path: str | Path, rows: np.ndarray) -> None:
    """Write a nonempty 2-D float array as an FTB1 tensor."""
    arr = np.ascontiguousarray(rows, dtype="<f4")
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"FTB1 tensors are nonempty 2-D, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"refusing to write non-finite values to {path}")
    n, d = arr.shape
    header = _HEADER.pack(b"FTB1", 2, n, d, 1, arr.nbytes)
    _atomic_write(Path(path), header + arr.tobytes())


def write_manifest(path: str | Path, rows: list[tuple]) -> None:
    """Write manifest rows of (feature_path, image_id, label, mask_path, h, w)."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_FIELDS)
        for feature_path, image_id, label, mask_path, h, w in rows:
            writer.writerow([feature_path, image_id, label, mask_path or "", h, w])
