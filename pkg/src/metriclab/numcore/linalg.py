from __future__ import annotations

import numpy as np

from ..errors import NotPositiveDefinite, ShapeMismatch


def cholesky_factor(S: np.ndarray, sym_tol: float = 1e-9) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == S`` (Cholesky-Banachiewicz, row by row).

    Raises NotPositiveDefinite as soon as a pivot is not strictly positive.
    """
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ShapeMismatch(f"expected a square matrix, got shape {S.shape}")
    scale = max(1.0, float(np.max(np.abs(S)))) if S.size else 1.0
    if S.size and np.max(np.abs(S - S.T)) > sym_tol * scale:
        raise ShapeMismatch("matrix is not symmetric")

    d = S.shape[0]
    L = np.zeros_like(S)
    for j in range(d):
        row = L[j, :j]
        pivot = S[j, j] - row @ row
        if not pivot > 0.0:
            raise NotPositiveDefinite(f"non-positive pivot {pivot!r} at index {j}")
        L[j, j] = np.sqrt(pivot)
        if j + 1 < d:
            L[j + 1:, j] = (S[j + 1:, j] - L[j + 1:, :j] @ row) / L[j, j]
    return L
