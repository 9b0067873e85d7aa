"""Dense Hermitian linear algebra used by the rate formulas.

Everything here returns natural-log quantities; rate-facing code divides by
``ln 2``.  Functions accept single matrices of shape ``(n, n)`` or stacks of
shape ``(..., n, n)``.
"""

from __future__ import annotations

import numpy as np

from .errors import FactorizationError

LN2 = np.log(2.0)

# pivot k accepted if > PIVOT_RTOL * M[k, k]
PIVOT_RTOL = 1e-14


def _check_square(M: np.ndarray) -> None:
    if M.ndim < 2 or M.shape[-1] != M.shape[-2]:
        raise ValueError(f"expected square matrix (or stack), got shape {M.shape}")


def _first_bad_pivot(M: np.ndarray) -> int:
    """Locate the failing pivot with an explicit (slow) Cholesky sweep."""
    A = np.array(M, dtype=complex)
    n = A.shape[0]
    diag = np.real(np.diag(A)).copy()
    for k in range(n):
        d = np.real(A[k, k])
        if not (diag[k] > 0 and d > PIVOT_RTOL * diag[k]):
            return k
        l = A[k + 1:, k] / np.sqrt(d)
        A[k + 1:, k + 1:] -= np.outer(l, l.conj())
    return n - 1


def cholesky(M: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor with the scale-invariant pivot check.

    Raises :class:`FactorizationError` naming the first failing pivot.
    """
    M = np.asarray(M)
    _check_square(M)
    n = M.shape[-1]
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        L = None
    if L is not None:
        piv = np.real(np.diagonal(L, axis1=-2, axis2=-1)) ** 2
        if np.all(piv > PIVOT_RTOL * np.real(np.diagonal(M, axis1=-2, axis2=-1))):
            return L
    # find the offending matrix of the stack, then its pivot
    flat = M.reshape(-1, n, n)
    for idx, A in enumerate(flat):
        try:
            Lk = np.linalg.cholesky(A)
            ok = np.real(np.diag(Lk)) ** 2 > PIVOT_RTOL * np.real(np.diag(A))
            if np.all(ok):
                continue
            bad = int(np.argmin(ok))
        except np.linalg.LinAlgError:
            bad = _first_bad_pivot(A)
        raise FactorizationError(bad, None if flat.shape[0] == 1 else idx)
    raise FactorizationError(0)  # pragma: no cover


def logdet(M: np.ndarray) -> np.ndarray | float:
    """Natural-log determinant of a positive definite Hermitian matrix."""
    L = cholesky(M)
    d = np.real(np.diagonal(L, axis1=-2, axis2=-1))
    out = 2.0 * np.sum(np.log(d), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def inverse(M: np.ndarray) -> np.ndarray:
    """Inverse of a positive definite Hermitian matrix via its Cholesky factor.

    The result is exactly Hermitian (formed as ``L^-H L^-1``).
    """
    L = cholesky(M)
    Linv = np.linalg.inv(L)
    return np.swapaxes(Linv.conj(), -1, -2) @ Linv


def rank_one_accumulate(vectors, weights, dim: int | None = None) -> np.ndarray:
    """Return ``sum_j w_j v_j v_j^H``.

    Parameters
    ----------
    vectors : array_like, shape (L, U) or sequence of U length-L vectors
        Column vectors; a 2-D array is read column-wise.
    weights : array_like, shape (U,)
        Nonnegative weights.
    dim : int, optional
        Vector dimension; only needed for an empty list.
    """
    if isinstance(vectors, np.ndarray) and vectors.ndim == 2:
        V = vectors
    else:
        vectors = [np.ravel(np.asarray(v)) for v in vectors]
        if not vectors:
            if dim is None:
                raise ValueError("empty vector list needs an explicit dim")
            return np.zeros((dim, dim))
        dims = {v.shape[0] for v in vectors}
        if len(dims) != 1:
            raise ValueError(f"dimension mismatch among vectors: {sorted(dims)}")
        V = np.stack(vectors, axis=1)
    w = np.asarray(weights, dtype=float).ravel()
    if w.shape[0] != V.shape[1]:
        raise ValueError(f"{V.shape[1]} vectors but {w.shape[0]} weights")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    out = (V * w) @ V.conj().T
    return 0.5 * (out + out.conj().T)
