"""Multi-scale patch embeddings from a pretrained backbone.

Images are resized, pushed through WideResNet-50, and the outputs of the
tapped stages are fused on the finest tapped grid (coarser stages upsampled
with nearest neighbor, then channel-concatenated). Each image becomes one
(h_p * w_p, d) float32 tensor with one row per grid cell in row-major order,
where d is the sum of the tapped channel widths (1536 for the default
layer2+layer3 taps). For a 256 px input that grid is 32 x 32, one cell per
8 x 8 pixel patch.

The extractor walks a category directory laid out as
``train/good``, ``test/<kind>``, ``ground_truth/<kind>`` and emits, under
the output directory: per-image feature tensors, per-patch defect masks
(ground-truth pixel masks reduced to the grid, a patch counting as anomalous
if any of its pixels is), train and test manifests, and ``bank.ftb`` with
all training patch rows concatenated, ready for scorer fitting.

Inference runs image by image under ``torch.no_grad`` with the network in
eval mode, so outputs are deterministic; unreadable images are skipped with
a warning and reported in the result.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .ftb import write_ftb1, write_manifest

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


class ExtractError(Exception):
    """Fatal extraction failure (bad configuration, unavailable weights)."""


@dataclass
class ExtractConfig:
    """Extraction settings; defaults give 1536-dim features on a 32x32 grid."""

    input_dir: Path
    output_dir: Path
    backbone: str = "wide_resnet50_2"
    blocks: tuple[str, ...] = ("layer2", "layer3")
    resize: int = 256
    pretrained: bool = True
    init_seed: int = 0  # weight seed when pretrained is False (testing mode)


@dataclass
class ExtractResult:
    feature_dim: int
    grid: tuple[int, int]
    images_written: int
    images_skipped: int
    bank_path: Path | None
    train_manifest: Path
    test_manifest: Path
    skipped: list[str] = field(default_factory=list)


def _load_backbone(config: ExtractConfig) -> torch.nn.Module:
    from torchvision import models

    if config.backbone != "wide_resnet50_2":
        raise ExtractError(f"unsupported backbone {config.backbone!r}")
    if config.pretrained:
        try:
            weights = models.Wide_ResNet50_2_Weights.IMAGENET1K_V1
            net = models.wide_resnet50_2(weights=weights)
        except Exception as exc:
            raise ExtractError(f"pretrained weights unavailable: {exc}") from exc
    else:
        torch.manual_seed(config.init_seed)
        net = models.wide_resnet50_2(weights=None)
    return net.eval()


class PatchEmbedder:
    """Maps an image to an (h_p * w_p, d) float32 patch-feature array."""

    def __init__(self, config: ExtractConfig):
        if not config.blocks:
            raise ExtractError("at least one block must be tapped")
        self.config = config
        self.net = _load_backbone(config)
        self._taps: dict[str, torch.Tensor] = {}
        for name in config.blocks:
            module = getattr(self.net, name, None)
            if module is None:
                raise ExtractError(f"backbone has no block named {name!r}")
            module.register_forward_hook(self._keep(name))
        self.channels = self._channel_widths()

    def _keep(self, name: str):
        def hook(_module, _inputs, output):
            self._taps[name] = output

        return hook

    def _channel_widths(self) -> dict[str, int]:
        with torch.no_grad():
            self.net(torch.zeros(1, 3, self.config.resize, self.config.resize))
        return {name: int(self._taps[name].shape[1]) for name in self.config.blocks}

    @property
    def feature_dim(self) -> int:
        return sum(self.channels.values())

    def preprocess(self, image: Image.Image) -> torch.Tensor:
        size = (self.config.resize, self.config.resize)
        rgb = image.convert("RGB").resize(size, Image.BILINEAR)
        x = torch.from_numpy(np.asarray(rgb, dtype=np.float32) / 255.0)
        x = x.permute(2, 0, 1)
        mean = torch.tensor(IMAGENET_MEAN).view(3, 1, 1)
        std = torch.tensor(IMAGENET_STD).view(3, 1, 1)
        return ((x - mean) / std).unsqueeze(0)

    def embed(self, image: Image.Image) -> tuple[np.ndarray, tuple[int, int]]:
        """Returns (rows, (h_p, w_p)); rows are grid cells in row-major order."""
        with torch.no_grad():
            self.net(self.preprocess(image))
        maps = [self._taps[name] for name in self.config.blocks]
        target = max((m.shape[-2], m.shape[-1]) for m in maps)
        fused = []
        for m in maps:
            if (m.shape[-2], m.shape[-1]) != target:
                m = torch.nn.functional.interpolate(m, size=target, mode="nearest")
            fused.append(m)
        stacked = torch.cat(fused, dim=1)[0]  # (d, h_p, w_p)
        d, h, w = stacked.shape
        rows = stacked.permute(1, 2, 0).reshape(h * w, d).numpy().astype(np.float32)
        return rows, (h, w)


def _image_files(directory: Path) -> list[Path]:
    exts = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}
    if not directory.is_dir():
        return []
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in exts)


def _patch_mask(mask_path: Path, resize: int, grid: tuple[int, int]) -> np.ndarray:
    """Reduce a ground-truth pixel mask to per-patch 0/1 labels (any-pixel rule)."""
    h, w = grid
    with Image.open(mask_path) as img:
        pixels = np.asarray(img.convert("L").resize((resize, resize), Image.NEAREST))
    anomalous = pixels > 0
    if resize % h == 0 and resize % w == 0:
        blocks = anomalous.reshape(h, resize // h, w, resize // w)
        return blocks.any(axis=(1, 3)).astype(np.float32)
    with Image.open(mask_path) as img:
        coarse = np.asarray(img.convert("L").resize((w, h), Image.NEAREST))
    return (coarse > 0).astype(np.float32)


def extract_features(config: ExtractConfig) -> ExtractResult:
    """Walk one category directory and emit tensors, masks, and manifests."""
    root = Path(config.input_dir)
    out = Path(config.output_dir)
    if not root.is_dir():
        raise ExtractError(f"input directory {root} does not exist")
    (out / "features").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(exist_ok=True)

    embedder = PatchEmbedder(config)
    written = 0
    skipped: list[str] = []
    grid: tuple[int, int] | None = None

    def embed_file(path: Path):
        nonlocal written, grid
        try:
            with Image.open(path) as img:
                rows, got_grid = embedder.embed(img)
        except (OSError, ValueError) as exc:
            print(f"warning: skipping unreadable image {path}: {exc}", file=sys.stderr)
            skipped.append(str(path))
            return None
        grid = got_grid
        written += 1
        return rows

    train_rows, train_entries = [], []
    for path in _image_files(root / "train" / "good"):
        rows = embed_file(path)
        if rows is None:
            continue
        rel = f"features/train_good_{path.stem}.ftb"
        write_ftb1(out / rel, rows)
        train_rows.append(rows)
        train_entries.append((rel, f"train/good/{path.stem}", 0, None, grid[0], grid[1]))

    test_entries = []
    test_root = root / "test"
    kinds = sorted(p.name for p in test_root.iterdir() if p.is_dir()) if test_root.is_dir() else []
    for kind in kinds:
        label = 0 if kind == "good" else 1
        for path in _image_files(test_root / kind):
            rows = embed_file(path)
            if rows is None:
                continue
            rel = f"features/test_{kind}_{path.stem}.ftb"
            write_ftb1(out / rel, rows)
            mask_rel = None
            gt = root / "ground_truth" / kind / f"{path.stem}_mask.png"
            if label == 1 and gt.is_file():
                mask_rel = f"masks/test_{kind}_{path.stem}_mask.ftb"
                write_ftb1(out / mask_rel, _patch_mask(gt, config.resize, grid))
            test_entries.append((rel, f"test/{kind}/{path.stem}", label, mask_rel, grid[0], grid[1]))

    bank_path = None
    if train_rows:
        bank_path = out / "bank.ftb"
        write_ftb1(bank_path, np.vstack(train_rows))

    train_manifest = out / "manifest_train.csv"
    test_manifest = out / "manifest_test.csv"
    write_manifest(train_manifest, train_entries)
    write_manifest(test_manifest, test_entries)

    return ExtractResult(
        feature_dim=embedder.feature_dim,
        grid=grid if grid is not None else (0, 0),
        images_written=written,
        images_skipped=len(skipped),
        bank_path=bank_path,
        train_manifest=train_manifest,
        test_manifest=test_manifest,
        skipped=skipped,
    )
