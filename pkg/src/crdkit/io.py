"""Binary interchange formats, model persistence, and dataset manifests.

FTB1 feature-tensor layout (every integer little-endian):

    bytes 0:4    magic b"FTB1"
    bytes 4:8    uint32 rank, always 2
    bytes 8:24   uint64 dims [n_rows, n_cols]; one row per patch vector
    byte  24     uint8 dtype tag, 1 = float32
    bytes 25:33  uint64 payload length in bytes (n_rows * n_cols * 4)
    bytes 33:    payload, float32, row-major

CRD1 scorer-model layout:

    bytes 0:4        magic b"CRD1"
    bytes 4:8        uint32 d
    bytes 8:16       float64 ridge weight
    bytes 16:16+8dd  float64 matrix, row-major
    last 4 bytes     uint32 CRC-32 of all preceding bytes

Feature values are float32 on disk (matching upstream extractor precision)
and widened to float64 in memory; model matrices are float64 end to end, so
a save/load round-trip is bit-exact. Files are written to a temp file in the
target directory and renamed into place, so concurrent writers on distinct
paths are safe and readers never observe a partial file.

The dataset manifest is a UTF-8 CSV with header
``feature_path,image_id,label,mask_path,grid_h,grid_w`` where label is 0 for
normal and 1 for anomalous; relative paths resolve against the manifest's
directory.
"""

from __future__ import annotations

import csv
import os
import struct
import tempfile
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import CrdScorer, FeatureBank
from .errors import ChecksumError, FormatError, ValidationError
from .evalkit import PatchGrid

__all__ = [
    "ManifestEntry",
    "write_feature_tensor",
    "read_feature_tensor",
    "write_ftb1",
    "read_ftb1",
    "save_model",
    "load_model",
    "model_byte_size",
    "tensor_byte_size",
    "write_manifest",
    "read_manifest",
    "resolve_manifest_path",
    "load_entry_rows",
    "load_entry_mask",
    "write_pgm16",
]

_TENSOR_MAGIC = b"FTB1"
_MODEL_MAGIC = b"CRD1"
_DTYPE_F32 = 1
_TENSOR_HEADER = struct.Struct("<4sIQQBQ")  # 33 bytes
MANIFEST_FIELDS = ["feature_path", "image_id", "label", "mask_path", "grid_h", "grid_w"]


def _atomic_write(path: str | Path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def tensor_byte_size(n_rows: int, n_cols: int) -> int:
    """Exact FTB1 file size for an (n_rows, n_cols) tensor."""
    return _TENSOR_HEADER.size + 4 * n_rows * n_cols


def model_byte_size(d: int) -> int:
    """Exact CRD1 file size for dimension d; independent of the bank size."""
    return 4 + 4 + 8 + 8 * d * d + 4


def write_ftb1(path: str | Path, rows: np.ndarray) -> None:
    """Write a 2-D array as an FTB1 tensor (float32, row-major)."""
    arr = np.asarray(rows, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValidationError(f"FTB1 tensors are nonempty 2-D, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValidationError(f"refusing to write non-finite values to {path}")
    with np.errstate(over="ignore"):  # overflow is caught right below
        payload = np.ascontiguousarray(arr, dtype="<f4")
    if not np.isfinite(payload).all():
        raise ValidationError(f"values overflow float32 when writing {path}")
    n, d = arr.shape
    header = _TENSOR_HEADER.pack(_TENSOR_MAGIC, 2, n, d, _DTYPE_F32, payload.nbytes)
    _atomic_write(path, header + payload.tobytes())


def read_ftb1(path: str | Path) -> np.ndarray:
    """Read an FTB1 tensor as an (n_rows, n_cols) float64 array."""
    data = Path(path).read_bytes()
    if len(data) < _TENSOR_HEADER.size:
        raise FormatError(f"{path}: truncated header ({len(data)} bytes)")
    magic, rank, n, d, dtype, payload_len = _TENSOR_HEADER.unpack_from(data)
    if magic != _TENSOR_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {_TENSOR_MAGIC!r}")
    if rank != 2:
        raise FormatError(f"{path}: rank {rank} not supported, expected 2")
    if dtype != _DTYPE_F32:
        raise FormatError(f"{path}: unknown dtype tag {dtype}")
    if n < 1 or d < 1:
        raise ValidationError(f"{path}: empty dims ({n}, {d})")
    if payload_len != 4 * n * d:
        raise FormatError(
            f"{path}: header claims {payload_len} payload bytes, dims need {4 * n * d}"
        )
    actual = len(data) - _TENSOR_HEADER.size
    if actual != payload_len:
        raise FormatError(
            f"{path}: payload is {actual} bytes, header declares {payload_len}"
        )
    values = np.frombuffer(data, dtype="<f4", count=n * d, offset=_TENSOR_HEADER.size)
    rows = values.reshape(n, d).astype(np.float64)
    if not np.isfinite(rows).all():
        raise ValidationError(f"{path}: payload contains non-finite values")
    return rows


def write_feature_tensor(path: str | Path, bank: FeatureBank) -> None:
    """Write a feature bank as an FTB1 tensor, one patch vector per row."""
    write_ftb1(path, bank.columns.T)


def read_feature_tensor(path: str | Path) -> FeatureBank:
    """Read an FTB1 tensor back into a feature bank (values widened to f64)."""
    return FeatureBank.from_rows(read_ftb1(path))


def save_model(path: str | Path, scorer: CrdScorer) -> None:
    """Persist a scorer as a CRD1 file (bit-exact float64 round-trip)."""
    matrix = np.ascontiguousarray(scorer.matrix, dtype="<f8")
    body = (
        _MODEL_MAGIC
        + struct.pack("<I", scorer.d)
        + struct.pack("<d", scorer.lam)
        + matrix.tobytes()
    )
    checksum = zlib.crc32(body) & 0xFFFFFFFF
    _atomic_write(path, body + struct.pack("<I", checksum))


def load_model(path: str | Path) -> CrdScorer:
    """Load a CRD1 file, verifying checksum and symmetry.

    The file does not record the bank size used at build time, so the loaded
    scorer has ``built_from_n = None``.
    """
    data = Path(path).read_bytes()
    if len(data) < 20:
        raise FormatError(f"{path}: truncated header ({len(data)} bytes)")
    if data[:4] != _MODEL_MAGIC:
        raise FormatError(f"{path}: bad magic {data[:4]!r}, expected {_MODEL_MAGIC!r}")
    (d,) = struct.unpack_from("<I", data, 4)
    expected = model_byte_size(d)
    if len(data) != expected:
        raise FormatError(f"{path}: {len(data)} bytes, expected {expected} for d={d}")
    stored = struct.unpack_from("<I", data, expected - 4)[0]
    actual = zlib.crc32(data[: expected - 4]) & 0xFFFFFFFF
    if stored != actual:
        raise ChecksumError(
            f"{path}: checksum {actual:#010x} does not match stored {stored:#010x}"
        )
    (lam,) = struct.unpack_from("<d", data, 8)
    matrix = np.frombuffer(data, dtype="<f8", count=d * d, offset=16).reshape(d, d).copy()
    if not lam > 0:
        raise ValidationError(f"{path}: stored ridge weight {lam} is not positive")
    return CrdScorer(matrix=matrix, lam=lam, built_from_n=None)


@dataclass(frozen=True)
class ManifestEntry:
    """One dataset image: its feature file, label, optional mask, and grid."""

    feature_path: str
    image_id: str
    label: int
    mask_path: str | None
    grid: PatchGrid


def write_manifest(path: str | Path, entries: list[ManifestEntry]) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_FIELDS)
        for e in entries:
            writer.writerow(
                [e.feature_path, e.image_id, e.label, e.mask_path or "", e.grid.h, e.grid.w]
            )


def read_manifest(path: str | Path) -> list[ManifestEntry]:
    path = Path(path)
    with path.open("r", newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != MANIFEST_FIELDS:
            raise FormatError(
                f"{path}: manifest header {reader.fieldnames} != {MANIFEST_FIELDS}"
            )
        entries = []
        for lineno, row in enumerate(reader, start=2):
            if row["label"] not in ("0", "1"):
                raise FormatError(f"{path}:{lineno}: label must be 0 or 1, got {row['label']!r}")
            try:
                grid = PatchGrid(int(row["grid_h"]), int(row["grid_w"]))
            except (TypeError, ValueError) as exc:
                raise FormatError(f"{path}:{lineno}: bad grid dims: {exc}") from exc
            entries.append(
                ManifestEntry(
                    feature_path=row["feature_path"],
                    image_id=row["image_id"],
                    label=int(row["label"]),
                    mask_path=row["mask_path"] or None,
                    grid=grid,
                )
            )
    return entries


def resolve_manifest_path(manifest_path: str | Path, entry_path: str) -> Path:
    """Resolve an entry path relative to the manifest's directory."""
    p = Path(entry_path)
    return p if p.is_absolute() else Path(manifest_path).parent / p


def load_entry_rows(manifest_path: str | Path, entry: ManifestEntry) -> np.ndarray:
    """Load an entry's feature tensor and check it matches the declared grid."""
    rows = read_ftb1(resolve_manifest_path(manifest_path, entry.feature_path))
    if rows.shape[0] != entry.grid.p:
        raise ValidationError(
            f"{entry.feature_path}: {rows.shape[0]} patch rows but grid is "
            f"{entry.grid.h}x{entry.grid.w} = {entry.grid.p}"
        )
    return rows


def load_entry_mask(manifest_path: str | Path, entry: ManifestEntry) -> np.ndarray | None:
    """Load an entry's per-patch label mask as an (h, w) 0/1 array, if any."""
    if entry.mask_path is None:
        return None
    mask = read_ftb1(resolve_manifest_path(manifest_path, entry.mask_path))
    if mask.shape != (entry.grid.h, entry.grid.w):
        raise ValidationError(
            f"{entry.mask_path}: mask shape {mask.shape} but grid is "
            f"{entry.grid.h}x{entry.grid.w}"
        )
    if not np.isin(mask, (0.0, 1.0)).all():
        raise ValidationError(f"{entry.mask_path}: mask values must be 0 or 1")
    return mask.astype(np.int64)


def write_pgm16(path: str | Path, values: np.ndarray) -> None:
    """Write a 2-D score map as a 16-bit binary PGM.

    Scores are mapped affinely with min -> 0 and max -> 65535; a constant map
    writes all zeros. PGM samples above 255 are big-endian by format.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise ValidationError(f"PGM maps are nonempty 2-D, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValidationError(f"refusing to write non-finite values to {path}")
    lo, hi = arr.min(), arr.max()
    if hi > lo:
        scaled = np.round((arr - lo) * (65535.0 / (hi - lo)))
    else:
        scaled = np.zeros_like(arr)
    header = f"P5\n{arr.shape[1]} {arr.shape[0]}\n65535\n".encode("ascii")
    _atomic_write(path, header + scaled.astype(">u2").tobytes())
