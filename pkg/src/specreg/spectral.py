"""Thin SVD of a design matrix and generic spectral filtering.

Every closed-form estimator in the package is a spectral filter

    beta = (1/n) V g(L/n) S U^T Y,      L = S**2,

evaluated on the thin SVD ``X = U S V^T``. The generator ``g`` is always
evaluated on the 1/n-scaled eigenvalues of ``X^T X``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

DEFAULT_RANK_TOL = 1e-12


class InputError(ValueError):
    """Malformed or non-finite input data."""


class RankZeroError(InputError):
    """The design matrix has no singular value above the rank cutoff."""


@dataclass(frozen=True)
class RegressionProblem:
    """Design matrix ``X`` (n x p), response ``Y`` (n,), optional noise scale.

    ``noise_scale`` is the per-observation standard deviation; the
    discrepancy principle uses ``sqrt(n) * noise_scale`` as its proxy for
    the noise norm when no explicit norm is given.
    """

    X: np.ndarray
    Y: np.ndarray
    noise_scale: float | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        Y = np.asarray(self.Y, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise InputError(f"X must be a nonempty 2-d array, got shape {X.shape}")
        Y = Y.reshape(-1)
        if Y.shape[0] != X.shape[0]:
            raise InputError(f"Y has length {Y.shape[0]} but X has {X.shape[0]} rows")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise InputError("X and Y must be finite")
        if self.noise_scale is not None and not (self.noise_scale >= 0):
            raise InputError("noise_scale must be nonnegative")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def noise_norm(self) -> float | None:
        if self.noise_scale is None:
            return None
        return float(np.sqrt(self.n) * self.noise_scale)


@dataclass(frozen=True)
class SpectralDecomposition:
    """Thin SVD ``X = U diag(singular_values) V^T`` truncated to rank ``s``."""

    U: np.ndarray
    singular_values: np.ndarray
    V: np.ndarray
    n: int = field(default=0)

    @property
    def rank(self) -> int:
        return self.singular_values.shape[0]

    @property
    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues ``lambda_k`` of ``X^T X`` (squared singular values)."""
        return self.singular_values**2

    @property
    def scaled_eigenvalues(self) -> np.ndarray:
        """Eigenvalues of ``X^T X / n``, the argument of every generator."""
        return self.singular_values**2 / self.n

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.singular_values) @ self.V.T


def thin_svd(problem: RegressionProblem | np.ndarray, rank_tol: float = DEFAULT_RANK_TOL) -> SpectralDecomposition:
    """Thin SVD keeping singular values above ``rank_tol * sigma_max``.

    Accepts either a :class:`RegressionProblem` or a bare matrix.
    """
    X = problem.X if isinstance(problem, RegressionProblem) else np.asarray(problem, dtype=float)
    if X.ndim != 2:
        raise InputError("design matrix must be 2-d")
    if not np.all(np.isfinite(X)):
        raise InputError("design matrix has non-finite entries")
    if rank_tol < 0:
        raise InputError("rank_tol must be nonnegative")
    U, sv, Vt = np.linalg.svd(X, full_matrices=False)
    if sv.size == 0 or sv[0] == 0.0:
        raise RankZeroError("rank zero design matrix")
    # LAPACK returns descending order; argsort with a stable kind keeps ties in place.
    order = np.argsort(-sv, kind="stable")
    sv, U, Vt = sv[order], U[:, order], Vt[order]
    keep = sv > rank_tol * sv[0]
    return SpectralDecomposition(
        U=U[:, keep], singular_values=sv[keep], V=Vt[keep].T, n=X.shape[0]
    )


def apply_spectral_filter(
    dec: SpectralDecomposition,
    g_at: Callable[[np.ndarray], np.ndarray],
    Y: np.ndarray,
    n: int | None = None,
) -> np.ndarray:
    """Return ``(1/n) V g(L/n) S U^T Y``.

    ``g_at`` is called once with the array of scaled eigenvalues ``L/n`` and
    must return an array of the same shape. ``Y`` may be a vector or an
    ``(n, m)`` matrix of stacked responses.
    """
    n = dec.n if n is None else n
    Y = np.asarray(Y, dtype=float)
    if Y.shape[0] != dec.U.shape[0]:
        raise InputError(f"Y has {Y.shape[0]} rows, expected {dec.U.shape[0]}")
    lam = dec.singular_values**2 / n
    gv = np.asarray(g_at(lam), dtype=float)
    if gv.shape != lam.shape:
        raise InputError("filter must return one value per eigenvalue")
    if not np.all(np.isfinite(gv)):
        raise InputError("filter is not finite on the spectrum")
    weights = gv * dec.singular_values / n
    coeffs = dec.U.T @ Y
    if coeffs.ndim == 1:
        return dec.V @ (weights * coeffs)
    return dec.V @ (weights[:, None] * coeffs)


def condition_number(dec: SpectralDecomposition) -> float:
    sv = dec.singular_values
    return float(sv[0] / sv[-1])


def operator_norm_sq(X: np.ndarray) -> float:
    """Squared spectral norm ``||X||^2``, the Landweber step-size scale."""
    return float(np.linalg.norm(X, 2) ** 2)


# CSV helpers: headerless, row-major, repr-formatted so values round-trip.

def read_csv_matrix(path: str | Path) -> np.ndarray:
    path = Path(path)
    try:
        data = np.loadtxt(path, delimiter=",", dtype=float, ndmin=2)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot parse {path}: {exc}") from exc
    return data


def read_csv_vector(path: str | Path) -> np.ndarray:
    data = read_csv_matrix(path)
    if 1 not in data.shape:
        raise InputError(f"{path} is not a vector (shape {data.shape})")
    return data.reshape(-1)


def write_csv(path: str | Path, array: np.ndarray) -> None:
    array = np.asarray(array, dtype=float)
    if array.ndim == 1:
        array = array[:, None]
    lines = (",".join(repr(float(v)) for v in row) for row in array)
    Path(path).write_text("\n".join(lines) + "\n")
