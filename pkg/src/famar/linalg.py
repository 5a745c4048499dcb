"""Dense linear-algebra building blocks.

All routines share the column-stacking vectorization convention, so that
``vec(A @ X @ B) == kron(B.T, A) @ vec(X)``.  Panels of matrices are stored
as 3-d arrays of shape ``(n, p1, p2)``; their row-stacked vectorized form is
the ``(n, p1*p2)`` matrix whose i-th row is ``vec(X_i)``.
"""

import numpy as np

# relative cut used when counting nonzero singular values
RANK_RTOL = 1e-8


def kron(a, b):
    """Kronecker product ``a ⊗ b``.

    Block ``(i, j)`` of the result is ``a[i, j] * b``.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    rows = a.shape[0] * b.shape[0]
    cols = a.shape[1] * b.shape[1]
    if rows * cols > np.iinfo(np.intp).max:
        raise OverflowError(f"kron result of shape {rows}x{cols} is too large")
    out = a[:, None, :, None] * b[None, :, None, :]
    return out.reshape(rows, cols)


def vec(a):
    """Column-stacking vectorization (first column first)."""
    a = np.asarray(a, dtype=float)
    return a.reshape(-1, order="F")


def unvec(v, rows, cols):
    """Inverse of :func:`vec`."""
    return np.asarray(v, dtype=float).reshape(rows, cols, order="F")


def panel_to_rows(panel):
    """Stack ``vec(X_i)`` as rows: ``(n, p1, p2) -> (n, p1*p2)``."""
    panel = np.asarray(panel, dtype=float)
    n, p1, p2 = panel.shape
    return np.ascontiguousarray(panel.transpose(0, 2, 1)).reshape(n, p1 * p2)


def rows_to_panel(rows, p1, p2):
    """Inverse of :func:`panel_to_rows`."""
    rows = np.asarray(rows, dtype=float)
    n = rows.shape[0]
    return np.ascontiguousarray(rows.reshape(n, p2, p1).transpose(0, 2, 1))


def block_sum_matrix(p, q):
    """``E_{pq}``: ``q`` copies of ``I_p`` side by side, shape ``p x pq``."""
    if p < 1 or q < 1:
        raise ValueError("p and q must be positive")
    return np.tile(np.eye(p), (1, q))


def shuffle_indices(p, q):
    """Row order of :func:`shuffle_matrix` as 0-based indices into ``I_pq``.

    Slices ``i, i+q, i+2q, ...`` for ``i = 0..q-1`` stacked in turn.
    """
    if p < 1 or q < 1:
        raise ValueError("p and q must be positive")
    return np.concatenate([np.arange(i, p * q, q) for i in range(q)])


def shuffle_matrix(p, q):
    """Shuffle (commutation) matrix ``S_pq`` of size ``pq x pq``.

    For a ``q x p`` matrix ``X``, ``S_pq @ vec(X) == vec(X.T)``.
    """
    return np.eye(p * q)[shuffle_indices(p, q)]


def svd(c):
    """Thin SVD with descending singular values; raises on non-finite input."""
    c = np.asarray(c, dtype=float)
    if not np.all(np.isfinite(c)):
        raise np.linalg.LinAlgError("SVD of a matrix with non-finite entries")
    return np.linalg.svd(c, full_matrices=False)


def svt(c, threshold, return_singular_values=False):
    """Singular value thresholding, the proximal map of ``threshold * ||.||_*``.

    Every singular value ``d`` becomes ``max(0, d - threshold)``; singular
    vectors are kept.  Ties (``d == threshold``) map to zero.  With
    ``return_singular_values`` the thresholded spectrum is returned as well.
    """
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    u, d, vt = svd(c)
    d = np.maximum(d - threshold, 0.0)
    keep = d > 0
    out = (u[:, keep] * d[keep]) @ vt[keep]
    if return_singular_values:
        return out, d
    return out


def soft_threshold(x, threshold):
    """Entrywise soft thresholding, the proximal map of ``threshold * ||.||_1``."""
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.maximum(np.abs(x) - threshold, 0.0)


def nuclear_norm(a):
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return 0.0
    return float(np.linalg.svd(a, compute_uv=False).sum())


def numerical_rank(a, rtol=RANK_RTOL):
    """Number of singular values above ``rtol`` times the largest one."""
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return 0
    s = np.linalg.svd(a, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def top_eigenvectors(s, k):
    """Leading ``k`` eigenvectors of a symmetric matrix, sign-normalized.

    Each eigenvector is flipped so that its largest-magnitude entry is
    positive.  Returns ``(values, vectors)`` in descending order.
    """
    s = np.asarray(s, dtype=float)
    p = s.shape[0]
    if not 1 <= k <= p:
        raise ValueError(f"k={k} must lie in [1, {p}]")
    if not np.all(np.isfinite(s)):
        raise np.linalg.LinAlgError("eigendecomposition of non-finite matrix")
    vals, vecs = np.linalg.eigh(s)
    vals = vals[::-1][:k]
    vecs = vecs[:, ::-1][:, :k]
    lead = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[lead, np.arange(k)])
    signs[signs == 0] = 1.0
    return vals, vecs * signs
