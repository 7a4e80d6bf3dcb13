"""Collaborative-representation scoring over a bank of patch features.

A query vector is reconstructed as an L2-regularized linear combination of
all bank columns and scored by the squared norm of the reconstruction
residual. The residual map is linear in the query, so the entire scoring
rule collapses into one d x d matrix that is built once offline; scoring a
batch of queries is then a single dense multiply plus column norms.

Two routes compute the same score:

* the deployed route, :func:`build_scorer` + :func:`crd_score`, which works
  on the d x d Gram matrix of the bank and never touches anything of size n;
* the reference route, :func:`solve_coefficients` + :func:`residual_score`,
  which solves the n x n normal equations explicitly. It is O(n^3) and kept
  as an independent oracle for the fast path.

All arithmetic is float64. Scorers are immutable and safe to share across
threads; every score depends on one query column only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import NumericalError, ParameterError, ValidationError

__all__ = [
    "FeatureBank",
    "QueryBatch",
    "CrdScorer",
    "build_scorer",
    "crd_score",
    "solve_coefficients",
    "residual_score",
]

SYMMETRY_TOL = 1e-9


def _as_matrix(values: np.ndarray, what: str) -> np.ndarray:
    arr = np.ascontiguousarray(np.asarray(values, dtype=np.float64))
    if arr.ndim != 2:
        raise ValidationError(f"{what} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValidationError(f"{what} must be nonempty, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValidationError(f"{what} contains non-finite values")
    return arr


@dataclass(frozen=True)
class FeatureBank:
    """Stored patch features: one embedding per column, shape (d, n), float64."""

    columns: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "columns", _as_matrix(self.columns, "feature bank"))

    @classmethod
    def from_rows(cls, rows: np.ndarray) -> "FeatureBank":
        """Build from an (n, d) array with one patch vector per row."""
        return cls(np.asarray(rows, dtype=np.float64).T)

    @property
    def d(self) -> int:
        return self.columns.shape[0]

    @property
    def n(self) -> int:
        return self.columns.shape[1]


@dataclass(frozen=True)
class QueryBatch:
    """Query vectors to score in one multiply: shape (d, m), float64."""

    columns: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "columns", _as_matrix(self.columns, "query batch"))

    @classmethod
    def from_rows(cls, rows: np.ndarray) -> "QueryBatch":
        return cls(np.asarray(rows, dtype=np.float64).T)

    @classmethod
    def from_vector(cls, y: np.ndarray) -> "QueryBatch":
        return cls(np.asarray(y, dtype=np.float64).reshape(-1, 1))

    @property
    def d(self) -> int:
        return self.columns.shape[0]

    @property
    def m(self) -> int:
        return self.columns.shape[1]


@dataclass(frozen=True)
class CrdScorer:
    """Precomputed scoring matrix plus the ridge weight it was built with.

    ``matrix`` is d x d, symmetric to 1e-9, with eigenvalues in (-1, 0]; a
    query y scores ``||matrix @ y||^2``. ``built_from_n`` records how many
    bank columns went into the build (None when loaded from disk, which does
    not store it).
    """

    matrix: np.ndarray
    lam: float
    built_from_n: int | None = field(default=None)

    def __post_init__(self) -> None:
        m = _as_matrix(self.matrix, "scorer matrix")
        if m.shape[0] != m.shape[1]:
            raise ValidationError(f"scorer matrix must be square, got {m.shape}")
        if not self.lam > 0:
            raise ParameterError(f"ridge weight must be positive, got {self.lam}")
        asym = np.abs(m - m.T).max()
        if asym > SYMMETRY_TOL:
            raise ValidationError(
                f"scorer matrix asymmetry {asym:.3e} exceeds {SYMMETRY_TOL:.0e}"
            )
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "lam", float(self.lam))

    @property
    def d(self) -> int:
        return self.matrix.shape[0]


def build_scorer(bank: FeatureBank, lam: float) -> CrdScorer:
    """Precompute the d x d scoring matrix for a feature bank.

    Works entirely on the Gram matrix G = F F^T: the matrix is
    G (G + lam I)^(-1) - I, which equals the residual map of the
    n-dimensional ridge reconstruction by the push-through identity, so
    nothing of size n x n is ever materialized. G + lam I is symmetric
    positive definite for lam > 0, so the solve uses a Cholesky-backed
    routine, and the result is symmetrized to remove factorization
    round-off.
    """
    if not lam > 0:
        raise ParameterError(f"ridge weight must be positive, got {lam}")
    f = bank.columns
    gram = f @ f.T
    eye = np.eye(bank.d)
    try:
        x = scipy.linalg.solve(gram + lam * eye, gram, assume_a="pos")
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"Gram solve failed at lam={lam}: {exc}") from exc
    if not np.isfinite(x).all():
        raise NumericalError(f"Gram solve produced non-finite values at lam={lam}")
    m = x - eye
    m = 0.5 * (m + m.T)
    return CrdScorer(matrix=m, lam=float(lam), built_from_n=bank.n)


def crd_score(scorer: CrdScorer, queries: QueryBatch) -> np.ndarray:
    """Score every query column: one (d x d)(d x m) multiply, then squared
    column norms. Returns an array of m nonnegative floats."""
    if queries.d != scorer.d:
        raise ParameterError(
            f"query dimension {queries.d} does not match scorer dimension {scorer.d}"
        )
    z = scorer.matrix @ queries.columns
    return (z * z).sum(axis=0)


def solve_coefficients(bank: FeatureBank, y: np.ndarray, lam: float) -> np.ndarray:
    """Reconstruction coefficients of y over the bank columns.

    Solves the n x n normal equations (F^T F + lam I) rho = F^T y directly.
    This is the unique minimizer of ||y - F rho||^2 + lam ||rho||^2. It is
    the slow reference path; use it at small n only.
    """
    if not lam > 0:
        raise ParameterError(f"ridge weight must be positive, got {lam}")
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y.size != bank.d:
        raise ParameterError(f"query has {y.size} entries, bank dimension is {bank.d}")
    f = bank.columns
    lhs = f.T @ f + lam * np.eye(bank.n)
    try:
        coef = scipy.linalg.solve(lhs, f.T @ y, assume_a="pos")
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"normal-equation solve failed at lam={lam}: {exc}") from exc
    if not np.isfinite(coef).all():
        raise NumericalError("coefficient solve produced non-finite values")
    return coef


def residual_score(bank: FeatureBank, y: np.ndarray, lam: float) -> float:
    """Squared residual of the explicit ridge reconstruction of y.

    Reference implementation of the score: must agree with
    :func:`crd_score` on the same bank and query.
    """
    coef = solve_coefficients(bank, y, lam)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    r = bank.columns @ coef - y
    return float(r @ r)
