"""Image-level decisions and metrics on top of per-patch scores.

An image is anomalous as soon as one patch is, so the image score is the
maximum patch score, the decision threshold is the largest score seen on
normal calibration images (strict inequality flags an anomaly, which makes
the calibration set itself all-negative), and ranking quality is measured
with a tie-aware AUROC. A bilinear, corner-aligned upsampler turns a patch
score grid into a dense localization map, and a seeded synthetic generator
provides desk-scale datasets where the planted separation is known by
construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import FeatureBank, QueryBatch
from .errors import ParameterError, UndefinedMetricError, ValidationError

__all__ = [
    "PatchGrid",
    "ScoredImage",
    "RocCurve",
    "aggregate_image_score",
    "calibrate_threshold",
    "flag_anomalies",
    "auroc",
    "roc_curve",
    "render_heatmap",
    "synth_dataset",
]


@dataclass(frozen=True)
class PatchGrid:
    """Spatial layout of an image's patches: h rows by w columns, row-major."""

    h: int
    w: int

    def __post_init__(self) -> None:
        if self.h < 1 or self.w < 1:
            raise ValidationError(f"patch grid must be at least 1x1, got {self.h}x{self.w}")

    @property
    def p(self) -> int:
        return self.h * self.w


@dataclass(frozen=True)
class ScoredImage:
    """Per-patch scores for one image plus the max-aggregated image score."""

    image_id: str
    grid: PatchGrid
    patch_scores: np.ndarray
    image_score: float
    label: int | None = None

    @classmethod
    def from_patch_scores(
        cls,
        image_id: str,
        grid: PatchGrid,
        patch_scores: np.ndarray,
        label: int | None = None,
    ) -> "ScoredImage":
        scores = np.asarray(patch_scores, dtype=np.float64).reshape(-1)
        if scores.size != grid.p:
            raise ValidationError(
                f"{image_id}: {scores.size} patch scores for a {grid.h}x{grid.w} grid"
            )
        return cls(
            image_id=image_id,
            grid=grid,
            patch_scores=scores,
            image_score=aggregate_image_score(scores),
            label=label,
        )


def aggregate_image_score(patch_scores: np.ndarray) -> float:
    """Image score = maximum patch score."""
    scores = np.asarray(patch_scores, dtype=np.float64).reshape(-1)
    if scores.size == 0:
        raise ParameterError("cannot aggregate an empty score list")
    return float(scores.max())


def calibrate_threshold(normal_image_scores: np.ndarray) -> float:
    """Decision threshold = largest image score among normal samples."""
    scores = np.asarray(normal_image_scores, dtype=np.float64).reshape(-1)
    if scores.size == 0:
        raise ParameterError("cannot calibrate on an empty score list")
    return float(scores.max())


def flag_anomalies(scores: np.ndarray, threshold: float) -> np.ndarray:
    """Anomalous iff score strictly exceeds the threshold."""
    return np.asarray(scores, dtype=np.float64) > threshold


def _check_binary_labels(scores: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if scores.size != labels.size:
        raise ParameterError(f"{scores.size} scores vs {labels.size} labels")
    if not np.isin(labels, (0, 1)).all():
        raise ParameterError("labels must be 0 (normal) or 1 (anomalous)")
    labels = labels.astype(np.int64)
    if labels.min() == labels.max():
        raise UndefinedMetricError("AUROC needs both classes present")
    return scores, labels


def auroc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Tie-aware AUROC: probability that a random anomalous score exceeds a
    random normal one, counting equal pairs as half. Computed from midranks."""
    scores, labels = _check_binary_labels(scores, labels)
    order = np.argsort(scores, kind="stable")
    s = scores[order]
    edges = np.flatnonzero(np.r_[True, s[1:] != s[:-1], True])
    # average 1-based rank within each tie group
    group_rank = 0.5 * (edges[:-1] + edges[1:] + 1)
    ranks_sorted = np.repeat(group_rank, np.diff(edges))
    ranks = np.empty_like(ranks_sorted)
    ranks[order] = ranks_sorted
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass(frozen=True)
class RocCurve:
    """ROC points swept over the distinct score values, highest first.

    ``fpr`` and ``tpr`` are nondecreasing and start at (0, 0); ``auc`` is the
    trapezoidal area, which matches :func:`auroc` including ties.
    """

    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float


def roc_curve(scores: np.ndarray, labels: np.ndarray) -> RocCurve:
    """Build the ROC curve with one point per distinct score (predict
    anomalous iff score >= threshold)."""
    scores, labels = _check_binary_labels(scores, labels)
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    pos = labels[order] == 1
    distinct = np.r_[s[1:] != s[:-1], True]
    tp = np.cumsum(pos)[distinct]
    fp = np.cumsum(~pos)[distinct]
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    thresholds = np.r_[np.inf, s[distinct]]
    tpr = np.r_[0.0, tp / n_pos]
    fpr = np.r_[0.0, fp / n_neg]
    trapezoid = getattr(np, "trapezoid", np.trapz)
    return RocCurve(
        thresholds=thresholds, fpr=fpr, tpr=tpr, auc=float(trapezoid(tpr, fpr))
    )


def _axis_coords(in_size: int, out_size: int) -> tuple[np.ndarray, np.ndarray]:
    # Corner-aligned: output endpoints sample input endpoints exactly.
    pos = np.linspace(0.0, in_size - 1.0, out_size)
    if in_size == 1:
        return np.zeros(out_size, dtype=np.intp), np.zeros(out_size)
    lo = np.minimum(pos.astype(np.intp), in_size - 2)
    return lo, pos - lo


def render_heatmap(
    grid: PatchGrid, patch_scores: np.ndarray, out_h: int, out_w: int
) -> np.ndarray:
    """Bilinear, corner-aligned upsampling of a patch score grid.

    Output values are convex combinations of the inputs, so they stay within
    [min, max] of the patch scores, and corner points reproduce the input
    exactly.
    """
    if out_h < grid.h or out_w < grid.w:
        raise ParameterError(
            f"output {out_h}x{out_w} must be at least the grid size {grid.h}x{grid.w}"
        )
    scores = np.asarray(patch_scores, dtype=np.float64).reshape(-1)
    if scores.size != grid.p:
        raise ParameterError(
            f"{scores.size} patch scores for a {grid.h}x{grid.w} grid"
        )
    s = scores.reshape(grid.h, grid.w)
    r0, tr = _axis_coords(grid.h, out_h)
    c0, tc = _axis_coords(grid.w, out_w)
    r1 = np.minimum(r0 + 1, grid.h - 1)
    c1 = np.minimum(c0 + 1, grid.w - 1)
    tr = tr[:, None]
    tc = tc[None, :]
    top = (1.0 - tc) * s[r0][:, c0] + tc * s[r0][:, c1]
    bottom = (1.0 - tc) * s[r1][:, c0] + tc * s[r1][:, c1]
    return (1.0 - tr) * top + tr * bottom


def synth_dataset(
    d: int,
    n_train: int,
    n_test_normal: int,
    n_test_anom: int,
    shift: float,
    seed: int,
    *,
    components: int = 3,
    mean_scale: float = 1.0,
    component_std: float = 0.05,
    noise_std: float = 0.05,
) -> tuple[FeatureBank, QueryBatch, np.ndarray]:
    """Seeded synthetic bank and queries with a planted anomaly direction.

    Normal vectors are a Gaussian mixture living on a random rank-(d//2)
    subspace plus isotropic noise (sigma = 0.05 by default). Anomalies are
    normal draws displaced by ``shift`` along one fixed unit vector orthogonal
    to that subspace, so reconstruction-residual scorers separate them by
    construction once shift dominates the noise. Deterministic per seed; the
    keyword knobs shape the mixture without changing the construction.

    Returns (bank, queries, labels) with the n_test_normal normal queries
    first and labels in {0, 1}.
    """
    if d < 2:
        raise ParameterError(f"dimension must be at least 2, got {d}")
    for name, value in (
        ("n_train", n_train),
        ("n_test_normal", n_test_normal),
        ("n_test_anom", n_test_anom),
    ):
        if value < 1:
            raise ParameterError(f"{name} must be at least 1, got {value}")
    rng = np.random.default_rng(seed)
    r = d // 2
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    basis = q[:, :r]
    complement = q[:, r:]
    means = mean_scale * rng.standard_normal((components, r))

    def draw(count: int) -> np.ndarray:
        comp = rng.integers(0, components, size=count)
        latent = means[comp] + component_std * rng.standard_normal((count, r))
        return latent @ basis.T + noise_std * rng.standard_normal((count, d))

    train = draw(n_train)
    test_normal = draw(n_test_normal)
    test_anom = draw(n_test_anom)
    direction = complement @ rng.standard_normal(d - r)
    direction /= np.linalg.norm(direction)
    test_anom = test_anom + shift * direction
    labels = np.r_[np.zeros(n_test_normal, dtype=np.int64), np.ones(n_test_anom, dtype=np.int64)]
    return (
        FeatureBank.from_rows(train),
        QueryBatch.from_rows(np.vstack([test_normal, test_anom])),
        labels,
    )
