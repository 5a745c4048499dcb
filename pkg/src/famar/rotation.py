"""Varimax rotation of loading matrices."""

import numpy as np

from .errors import ConvergenceError


def normalize_columns(loading):
    """Scale each column to unit l2 norm; zero columns are left as is."""
    loading = np.asarray(loading, dtype=float)
    norms = np.linalg.norm(loading, axis=0)
    norms[norms == 0] = 1.0
    return loading / norms


def varimax_criterion(loading):
    """Sum over columns of the variance of the squared entries."""
    sq = np.asarray(loading, dtype=float) ** 2
    return float(np.sum(np.mean(sq**2, axis=0) - np.mean(sq, axis=0) ** 2))


def _pair_angle(x, y):
    # closed-form maximizer of the two-column criterion (Kaiser 1958)
    p = x.shape[0]
    u = x * x - y * y
    v = 2.0 * x * y
    a, b = u.sum(), v.sum()
    c = np.sum(u * u - v * v)
    d = 2.0 * np.sum(u * v)
    return 0.25 * np.arctan2(d - 2.0 * a * b / p, c - (a * a - b * b) / p)


def varimax(loading, max_iter=500, tol=1e-10, return_rotation=False):
    """Varimax rotation by successive pairwise plane rotations.

    Columns are first normalized to unit l2 norm, then rotated pair by pair
    until no plane rotation exceeds ``tol`` radians.

    Parameters
    ----------
    loading : ndarray, shape (p, k)
    max_iter : int
        Maximum number of sweeps over all column pairs.
    tol : float
        Convergence threshold on the largest rotation angle in a sweep.
    return_rotation : bool
        Also return the orthogonal ``k x k`` matrix ``T``.

    Returns
    -------
    rotated : ndarray, shape (p, k)
        ``normalize_columns(loading) @ T``.
    T : ndarray, shape (k, k), optional

    Raises
    ------
    ConvergenceError
        If the sweeps do not settle within ``max_iter``.
    """
    x = normalize_columns(loading).copy()
    k = x.shape[1]
    t = np.eye(k)
    if k >= 2:
        for _ in range(max_iter):
            largest = 0.0
            for i in range(k - 1):
                for j in range(i + 1, k):
                    phi = _pair_angle(x[:, i], x[:, j])
                    largest = max(largest, abs(phi))
                    if phi == 0.0:
                        continue
                    cs, sn = np.cos(phi), np.sin(phi)
                    g = np.array([[cs, -sn], [sn, cs]])
                    x[:, [i, j]] = x[:, [i, j]] @ g
                    t[:, [i, j]] = t[:, [i, j]] @ g
            if largest < tol:
                break
        else:
            raise ConvergenceError(f"varimax did not converge in {max_iter} sweeps")
    if return_rotation:
        return x, t
    return x
