"""Command-line entry point: fit, score, eval, bench, and synth workflows.

Exit codes: 0 success, 1 usage or parameter error, 2 I/O, format, or data
validation error, 3 numerical failure. Every command is deterministic given
its flags (timings in bench reports vary, the computed scores do not).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import bench as bench_mod
from . import io
from .baselines import greedy_coreset, knn_avg_distance, nn_distance
from .core import CrdScorer, FeatureBank, QueryBatch, build_scorer, crd_score
from .errors import (
    CrdError,
    FormatError,
    NumericalError,
    ParameterError,
    UndefinedMetricError,
    ValidationError,
)
from .evalkit import (
    PatchGrid,
    ScoredImage,
    auroc,
    calibrate_threshold,
    flag_anomalies,
    render_heatmap,
    synth_dataset,
)

__all__ = ["RunConfig", "run", "main", "entrypoint", "LAMBDA_SWEEP_GRID"]

LAMBDA_SWEEP_GRID = (0.1, 1.0, 3.0, 5.0, 10.0)


@dataclass
class RunConfig:
    """Parsed invocation: one command plus every flag it may consume."""

    command: str
    lam: float = 5.0
    k: int = 1
    coreset_fraction: float | None = None
    seed: int = 0
    threads: int | None = None
    bank: Path | None = None
    model: Path | None = None
    manifest: Path | None = None
    out: Path | None = None
    heatmaps: Path | None = None
    heatmap_format: str = "pgm"
    heatmap_scale: int = 8
    sweep_lambda: bool = False
    baselines: bool = False
    threshold: float | None = None
    # bench sizes
    d: int = 128
    n: int = 10_000
    m: int = 1_000
    reps: int = 5
    warmup: int = 1
    # synth sizes
    train_images: int = 20
    test_normal: int = 20
    test_anom: int = 20
    grid_h: int = 8
    grid_w: int = 8
    shift: float = 0.5
    mean_scale: float = 1.0


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # exit 1 instead of argparse's 2
        raise _UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="crdkit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: _Parser) -> None:
        p.add_argument("--lambda", dest="lam", type=float, default=5.0,
                       help="ridge weight (default 5.0)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=None,
                       help="cap BLAS threads for this command")

    p_fit = sub.add_parser("fit", help="build a scorer from a feature bank")
    common(p_fit)
    p_fit.add_argument("--bank", type=Path, required=True)
    p_fit.add_argument("--model", type=Path, required=True, help="output CRD1 path")

    p_score = sub.add_parser("score", help="score manifest images with a model")
    common(p_score)
    p_score.add_argument("--model", type=Path, required=True)
    p_score.add_argument("--manifest", type=Path, required=True)
    p_score.add_argument("--out", type=Path, required=True, help="output CSV path")
    p_score.add_argument("--threshold", type=float, default=None,
                         help="decision threshold; default: max score over label-0 rows")
    p_score.add_argument("--heatmaps", type=Path, default=None,
                         help="directory for per-image localization maps")
    p_score.add_argument("--heatmap-format", choices=("pgm", "ftb1"), default="pgm")
    p_score.add_argument("--heatmap-scale", type=int, default=8)

    p_eval = sub.add_parser("eval", help="AUROC evaluation on a labeled manifest")
    common(p_eval)
    p_eval.add_argument("--manifest", type=Path, required=True)
    p_eval.add_argument("--model", type=Path, default=None)
    p_eval.add_argument("--bank", type=Path, default=None)
    p_eval.add_argument("--k", type=int, default=1)
    p_eval.add_argument("--coreset-fraction", type=float, default=None)
    p_eval.add_argument("--baselines", action="store_true",
                        help="also evaluate exact NN (and k-NN when --k > 1)")
    p_eval.add_argument("--sweep-lambda", action="store_true",
                        help="evaluate over the ridge-weight grid "
                             + str(list(LAMBDA_SWEEP_GRID)))
    p_eval.add_argument("--out", type=Path, default=None, help="JSON report path")

    p_bench = sub.add_parser("bench", help="time precomputed scoring vs the NN scan")
    common(p_bench)
    p_bench.add_argument("--d", type=int, default=128)
    p_bench.add_argument("--n", type=int, default=10_000)
    p_bench.add_argument("--m", type=int, default=1_000)
    p_bench.add_argument("--k", type=int, default=1)
    p_bench.add_argument("--reps", type=int, default=5)
    p_bench.add_argument("--warmup", type=int, default=1)
    p_bench.add_argument("--out", type=Path, default=None, help="append JSON line here")

    p_synth = sub.add_parser("synth", help="write a synthetic dataset to disk")
    common(p_synth)
    p_synth.add_argument("--out", type=Path, required=True, help="output directory")
    p_synth.add_argument("--d", type=int, default=16)
    p_synth.add_argument("--train-images", type=int, default=20)
    p_synth.add_argument("--test-normal", type=int, default=20)
    p_synth.add_argument("--test-anom", type=int, default=20)
    p_synth.add_argument("--grid-h", type=int, default=8)
    p_synth.add_argument("--grid-w", type=int, default=8)
    p_synth.add_argument("--shift", type=float, default=0.5)
    p_synth.add_argument("--mean-scale", type=float, default=1.0,
                         help="spread of the mixture component means")

    return parser


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    fields = {f for f in RunConfig.__dataclass_fields__}
    return RunConfig(**{k: v for k, v in vars(args).items() if k in fields})


def _limits(config: RunConfig):
    return threadpool_limits(limits=config.threads) if config.threads else _NullContext()


class _NullContext:
    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False


def _load_scored_images(
    manifest: Path, entries: list[io.ManifestEntry], scorer: CrdScorer
) -> list[ScoredImage]:
    images = []
    for entry in entries:
        rows = io.load_entry_rows(manifest, entry)
        scores = crd_score(scorer, QueryBatch.from_rows(rows))
        images.append(
            ScoredImage.from_patch_scores(entry.image_id, entry.grid, scores, entry.label)
        )
    return images


def _cmd_fit(config: RunConfig) -> int:
    bank = io.read_feature_tensor(config.bank)
    t0 = time.perf_counter()
    with _limits(config):
        scorer = build_scorer(bank, config.lam)
    elapsed = time.perf_counter() - t0
    io.save_model(config.model, scorer)
    print(f"bank: {config.bank} (d={bank.d}, n={bank.n})")
    print(f"model: {config.model} ({io.model_byte_size(bank.d):,} bytes, "
          f"lambda={scorer.lam}, built in {elapsed:.3f}s)")
    return 0


def _cmd_score(config: RunConfig) -> int:
    scorer = io.load_model(config.model)
    entries = io.read_manifest(config.manifest)
    with _limits(config):
        images = _load_scored_images(config.manifest, entries, scorer)
    if config.threshold is not None:
        threshold = config.threshold
    else:
        normal = [img.image_score for img in images if img.label == 0]
        if not normal:
            raise ParameterError(
                "no label-0 rows to calibrate a threshold; pass --threshold"
            )
        threshold = calibrate_threshold(normal)
    predictions = flag_anomalies([img.image_score for img in images], threshold)
    with Path(config.out).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_id", "image_score", "label", "prediction"])
        for img, pred in zip(images, predictions):
            writer.writerow([img.image_id, repr(img.image_score), img.label, int(pred)])
    if config.heatmaps is not None:
        config.heatmaps.mkdir(parents=True, exist_ok=True)
        for img in images:
            heat = render_heatmap(
                img.grid,
                img.patch_scores,
                img.grid.h * config.heatmap_scale,
                img.grid.w * config.heatmap_scale,
            )
            if config.heatmap_format == "pgm":
                io.write_pgm16(config.heatmaps / f"{img.image_id}.pgm", heat)
            else:
                io.write_ftb1(config.heatmaps / f"{img.image_id}.ftb", heat)
    print(f"scored {len(images)} images, threshold {threshold!r}, "
          f"{int(predictions.sum())} flagged anomalous -> {config.out}")
    return 0


def _image_and_pixel_auroc(
    images: list[ScoredImage],
    masks: dict[str, np.ndarray | None],
) -> tuple[float, float | None]:
    image_scores = [img.image_score for img in images]
    image_labels = [img.label for img in images]
    image_auc = auroc(image_scores, image_labels)
    patch_scores: list[np.ndarray] = []
    patch_labels: list[np.ndarray] = []
    for img in images:
        if img.label == 0:
            patch_scores.append(img.patch_scores)
            patch_labels.append(np.zeros(img.grid.p, dtype=np.int64))
        elif masks.get(img.image_id) is not None:
            patch_scores.append(img.patch_scores)
            patch_labels.append(masks[img.image_id].reshape(-1))
    pixel_auc = None
    if patch_labels and any(m.any() for m in patch_labels):
        pixel_auc = auroc(np.concatenate(patch_scores), np.concatenate(patch_labels))
    return image_auc, pixel_auc


def _baseline_images(
    manifest: Path,
    entries: list[io.ManifestEntry],
    bank: FeatureBank,
    k: int,
) -> list[ScoredImage]:
    images = []
    for entry in entries:
        rows = io.load_entry_rows(manifest, entry)
        if k == 1:
            scores = [nn_distance(bank, y).score for y in rows]
        else:
            scores = [knn_avg_distance(bank, y, k) for y in rows]
        images.append(
            ScoredImage.from_patch_scores(entry.image_id, entry.grid, scores, entry.label)
        )
    return images


def _cmd_eval(config: RunConfig) -> int:
    if config.model is None and config.bank is None:
        raise ParameterError("eval needs --model or --bank")
    needs_bank = config.baselines or config.sweep_lambda or config.coreset_fraction is not None
    if needs_bank and config.bank is None:
        raise ParameterError("--baselines, --coreset-fraction and --sweep-lambda need --bank")
    entries = io.read_manifest(config.manifest)
    masks = {
        e.image_id: io.load_entry_mask(config.manifest, e) for e in entries
    }
    bank = io.read_feature_tensor(config.bank) if config.bank is not None else None
    report: dict = {}
    with _limits(config):
        scorer = (
            io.load_model(config.model)
            if config.model is not None
            else build_scorer(bank, config.lam)
        )
        images = _load_scored_images(config.manifest, entries, scorer)
        image_auc, pixel_auc = _image_and_pixel_auroc(images, masks)
        report["crd"] = {"lambda": scorer.lam, "image_auroc": image_auc,
                         "pixel_auroc": pixel_auc}
        print(f"image AUROC (crd, lambda={scorer.lam}): {image_auc:.4f}")
        if pixel_auc is not None:
            print(f"pixel AUROC (crd, lambda={scorer.lam}): {pixel_auc:.4f}")

        if config.baselines:
            nn_images = _baseline_images(config.manifest, entries, bank, 1)
            nn_auc, nn_pixel = _image_and_pixel_auroc(nn_images, masks)
            report["nn"] = {"image_auroc": nn_auc, "pixel_auroc": nn_pixel}
            print(f"image AUROC (nn): {nn_auc:.4f}")
            if nn_pixel is not None:
                print(f"pixel AUROC (nn): {nn_pixel:.4f}")
            if config.k > 1:
                knn_images = _baseline_images(config.manifest, entries, bank, config.k)
                knn_auc, knn_pixel = _image_and_pixel_auroc(knn_images, masks)
                report["knn"] = {"k": config.k, "image_auroc": knn_auc,
                                 "pixel_auroc": knn_pixel}
                print(f"image AUROC (knn, k={config.k}): {knn_auc:.4f}")
        if config.coreset_fraction is not None:
            selection = greedy_coreset(bank, config.coreset_fraction, config.seed)
            sub = FeatureBank(bank.columns[:, selection.indices])
            cs_images = _baseline_images(config.manifest, entries, sub, 1)
            cs_auc, cs_pixel = _image_and_pixel_auroc(cs_images, masks)
            report["coreset_nn"] = {
                "fraction": config.coreset_fraction,
                "kept": len(selection.indices),
                "image_auroc": cs_auc,
                "pixel_auroc": cs_pixel,
            }
            print(f"image AUROC (coreset nn, fraction={config.coreset_fraction}): "
                  f"{cs_auc:.4f} ({len(selection.indices)} columns kept)")

        if config.sweep_lambda:
            sweep = []
            print("lambda sweep (image AUROC):")
            for lam in LAMBDA_SWEEP_GRID:
                sw_scorer = build_scorer(bank, lam)
                sw_images = _load_scored_images(config.manifest, entries, sw_scorer)
                sw_auc, _ = _image_and_pixel_auroc(sw_images, masks)
                sweep.append({"lambda": lam, "image_auroc": sw_auc})
                print(f"  lambda={lam:<5g} {sw_auc:.4f}")
            best = max(sweep, key=lambda row: row["image_auroc"])
            print(f"  peak at lambda={best['lambda']:g}")
            report["lambda_sweep"] = sweep

    if config.out is not None:
        Path(config.out).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
        print(f"report -> {config.out}")
    return 0


def _cmd_bench(config: RunConfig) -> int:
    rng = np.random.default_rng(config.seed)
    bank = FeatureBank(rng.standard_normal((config.d, config.n)))
    queries = QueryBatch(rng.standard_normal((config.d, config.m)))
    report = bench_mod.bench_compare(
        bank,
        queries,
        lam=config.lam,
        k=config.k,
        reps=config.reps,
        warmup=config.warmup,
        threads=config.threads or 1,
    )
    print(bench_mod.format_report(report))
    if config.out is not None:
        with Path(config.out).open("a", encoding="utf-8") as fh:
            fh.write(report.to_json_line() + "\n")
        print(f"report line -> {config.out}")
    return 0


def _cmd_synth(config: RunConfig) -> int:
    grid = PatchGrid(config.grid_h, config.grid_w)
    p = grid.p
    n_train = config.train_images * p
    n_normal_vectors = config.test_normal * p + config.test_anom * (p - 1)
    bank, queries, _ = synth_dataset(
        d=config.d,
        n_train=n_train,
        n_test_normal=max(1, n_normal_vectors),
        n_test_anom=config.test_anom,
        shift=config.shift,
        seed=config.seed,
        mean_scale=config.mean_scale,
    )
    normal_rows = queries.columns.T[:n_normal_vectors]
    anom_rows = queries.columns.T[n_normal_vectors:]
    out = Path(config.out)
    (out / "train").mkdir(parents=True, exist_ok=True)
    (out / "test").mkdir(exist_ok=True)
    (out / "masks").mkdir(exist_ok=True)

    io.write_feature_tensor(out / "bank.ftb", bank)

    train_rows = bank.columns.T
    train_entries = []
    for i in range(config.train_images):
        rel = f"train/train_{i:04d}.ftb"
        io.write_ftb1(out / rel, train_rows[i * p : (i + 1) * p])
        train_entries.append(
            io.ManifestEntry(rel, f"train_{i:04d}", 0, None, grid)
        )
    io.write_manifest(out / "manifest_train.csv", train_entries)

    placer = np.random.default_rng([config.seed, 1])
    test_entries = []
    cursor = 0
    for i in range(config.test_normal):
        rel = f"test/normal_{i:04d}.ftb"
        io.write_ftb1(out / rel, normal_rows[cursor : cursor + p])
        cursor += p
        test_entries.append(io.ManifestEntry(rel, f"normal_{i:04d}", 0, None, grid))
    for i in range(config.test_anom):
        pos = int(placer.integers(0, p))
        rows = np.empty((p, config.d))
        fill = normal_rows[cursor : cursor + p - 1]
        cursor += p - 1
        rows[:pos] = fill[:pos]
        rows[pos] = anom_rows[i]
        rows[pos + 1 :] = fill[pos:]
        rel = f"test/anom_{i:04d}.ftb"
        mask_rel = f"masks/anom_{i:04d}_mask.ftb"
        io.write_ftb1(out / rel, rows)
        mask = np.zeros(p)
        mask[pos] = 1.0
        io.write_ftb1(out / mask_rel, mask.reshape(grid.h, grid.w))
        test_entries.append(io.ManifestEntry(rel, f"anom_{i:04d}", 1, mask_rel, grid))
    io.write_manifest(out / "manifest_test.csv", test_entries)

    print(f"wrote bank (d={config.d}, n={n_train}), {config.train_images} train images, "
          f"{config.test_normal}+{config.test_anom} test images -> {out}")
    return 0


_COMMANDS = {
    "fit": _cmd_fit,
    "score": _cmd_score,
    "eval": _cmd_eval,
    "bench": _cmd_bench,
    "synth": _cmd_synth,
}


def run(config: RunConfig) -> int:
    """Execute one parsed command; raises package errors on failure."""
    if not config.lam > 0:
        raise ParameterError(f"ridge weight must be positive, got {config.lam}")
    return _COMMANDS[config.command](config)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        return run(_config_from_args(args))
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FormatError, ValidationError, UndefinedMetricError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except CrdError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
