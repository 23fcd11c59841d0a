"""Dense linear algebra primitives shared by the solvers.

All arithmetic is 64-bit IEEE floating point. Matrices are plain 2-D
numpy arrays validated on entry; operations are pure and treat their
inputs as read-only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class NonFiniteError(ValueError):
    """NaN or Inf encountered where finite data is required."""


class SvdError(RuntimeError):
    """SVD iteration failed to converge."""


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate and return a as a float64 2-D array with finite entries."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NonFiniteError(f"{name} contains non-finite entries")
    return m


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions differ: {a.shape} x {b.shape}")
    return a @ b


def frobenius_norm(a) -> float:
    a = as_matrix(a)
    return float(np.sqrt(np.sum(a * a)))


def svd(a) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin SVD a = U @ diag(s) @ Vt with s nonincreasing and nonnegative."""
    a = as_matrix(a)
    try:
        return np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise SvdError(f"SVD did not converge for shape {a.shape}: {exc}") from exc


def singular_values(a) -> np.ndarray:
    a = as_matrix(a)
    if a.size == 0:
        return np.zeros(0)
    try:
        return np.linalg.svd(a, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise SvdError(f"SVD did not converge for shape {a.shape}: {exc}") from exc


@dataclass(frozen=True)
class RankReport:
    """Singular spectrum, the threshold applied to it, and the resulting rank."""

    singular_values: np.ndarray
    threshold: float
    rank: int


def numerical_rank(a, threshold: float = 1e-3, relative: bool = False,
                   center: bool = False) -> RankReport:
    """Rank of a as the count of singular values strictly above threshold.

    The threshold is absolute by default; with relative=True it is scaled
    by the largest singular value, which is the right choice for data of
    arbitrary scale. center=True removes each row's mean first (rows as
    features, columns as samples); the default is the raw matrix.
    """
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    mat = as_matrix(a)
    if center and mat.shape[1]:
        mat = mat - mat.mean(axis=1, keepdims=True)
    s = singular_values(mat)
    cut = threshold
    if relative and s.size:
        cut = threshold * float(s[0])
    rank = int(np.sum(s > cut))
    return RankReport(singular_values=s, threshold=float(cut), rank=rank)


def stack_rows(a, b) -> np.ndarray:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"column counts differ: {a.shape} vs {b.shape}")
    return np.vstack([a, b])


def row_space_contained(psi, phi, threshold: float = 1e-10, relative: bool = True) -> bool:
    """True iff the row space of psi lies in the row space of phi.

    Tested as rank([phi; psi]) == rank(phi). Both ranks use the same
    threshold; the default is relative and permissive since this is a
    subspace question, not a noise-floor estimate.
    """
    psi = as_matrix(psi, "psi")
    phi = as_matrix(phi, "phi")
    if psi.shape[1] != phi.shape[1]:
        raise ShapeError(f"column counts differ: psi {psi.shape}, phi {phi.shape}")
    stacked = np.vstack([phi, psi])
    s_stack = singular_values(stacked)
    if relative and s_stack.size:
        cut = threshold * float(s_stack[0])
    else:
        cut = threshold
    r_stack = int(np.sum(s_stack > cut))
    r_phi = int(np.sum(singular_values(phi) > cut))
    return r_stack == r_phi
