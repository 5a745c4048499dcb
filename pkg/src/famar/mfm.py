"""Matrix factor model estimation by pre-trained projection and block averaging.

The model is ``X_i = R F_i C^T + U_i`` with ``R`` of shape ``p1 x k1`` and
``C`` of shape ``p2 x k2``.  Estimation is non-iterative:

1. ``pretrain_projections`` builds ``W1, W2`` from the leading eigenvectors
   of the row and column second-moment matrices of an independent panel.
2. ``project_factors`` computes ``F_i = W1^T X_i W2 / (p1 p2)``.
3. ``ols_loading`` regresses the vectorized panel on the vectorized factors.
4. ``block_average`` exploits the Kronecker structure of that loading to
   obtain row and column loadings.
5. ``idiosyncratic_kron`` / ``idiosyncratic_projection`` recover ``U_i``.

Panels are 3-d arrays of shape ``(n, p1, p2)``.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import (
    DegenerateScaleError,
    DegenerateSpectrumError,
    ShapeError,
    SingularGramError,
)
from .linalg import panel_to_rows, rows_to_panel, top_eigenvectors

KRONECKER = "kronecker"
PROJECTION = "projection"
U_MODES = (KRONECKER, PROJECTION)

# cond(F^T F) above this is treated as singular
MAX_GRAM_CONDITION = 1e12
# |c_s * r_s| at or below this signals failed identification
MIN_SCALE_PRODUCT = 1e-10


def as_panel(x, name="panel"):
    """Validate and return a float panel of shape ``(n, p1, p2)``."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ShapeError(f"{name} must be 3-d (n, p1, p2), got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1 or arr.shape[2] < 1:
        raise ShapeError(f"{name} must be nonempty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ShapeError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class ProjectionPair:
    """Diversified projection matrices ``w1`` (p1 x k1) and ``w2`` (p2 x k2)."""

    w1: np.ndarray
    w2: np.ndarray

    @property
    def k1(self):
        return self.w1.shape[1]

    @property
    def k2(self):
        return self.w2.shape[1]

    @property
    def p1(self):
        return self.w1.shape[0]

    @property
    def p2(self):
        return self.w2.shape[0]


def second_moments(panel):
    """Row and column second-moment matrices ``S1`` (p1 x p1), ``S2`` (p2 x p2).

    ``S1 = sum_i X_i X_i^T / (p1 p2 n)`` and ``S2 = sum_i X_i^T X_i / (p1 p2 n)``.
    """
    panel = as_panel(panel)
    n, p1, p2 = panel.shape
    scale = 1.0 / (p1 * p2 * n)
    s1 = np.tensordot(panel, panel, axes=([0, 2], [0, 2])) * scale
    s2 = np.tensordot(panel, panel, axes=([0, 1], [0, 1])) * scale
    return 0.5 * (s1 + s1.T), 0.5 * (s2 + s2.T)


def _leading(s, k, which):
    vals, vecs = top_eigenvectors(s, k)
    if vals[0] <= 0 or vals[-1] <= 1e-12 * vals[0]:
        raise DegenerateSpectrumError(
            f"{which} second-moment matrix has fewer than {k} positive eigenvalues"
        )
    return vecs


def pretrain_projections(pretrain_panel, k1, k2):
    """Projection matrices from a pre-training panel.

    ``W1 = sqrt(p1) * (top-k1 eigenvectors of S1)`` and likewise ``W2``.
    The pre-training panel must be independent of the panel the projections
    are later applied to; splitting is the caller's job.
    """
    panel = as_panel(pretrain_panel, "pretrain_panel")
    _, p1, p2 = panel.shape
    if not (1 <= k1 <= p1 and 1 <= k2 <= p2):
        raise ShapeError(f"need 1 <= k1 <= {p1} and 1 <= k2 <= {p2}, got ({k1}, {k2})")
    s1, s2 = second_moments(panel)
    w1 = np.sqrt(p1) * _leading(s1, k1, "row")
    w2 = np.sqrt(p2) * _leading(s2, k2, "column")
    return ProjectionPair(w1, w2)


def project_factors(panel, proj):
    """Crude factor estimates ``F_i = W1^T X_i W2 / (p1 p2)``."""
    panel = as_panel(panel)
    _, p1, p2 = panel.shape
    if (p1, p2) != (proj.p1, proj.p2):
        raise ShapeError(
            f"panel is {p1}x{p2} but projections expect {proj.p1}x{proj.p2}"
        )
    return np.matmul(np.matmul(proj.w1.T, panel), proj.w2) / (p1 * p2)


def gram_condition(design):
    """Condition number of ``design^T design``."""
    s = np.linalg.svd(design, compute_uv=False)
    if s.size == 0 or s[-1] == 0:
        return float("inf")
    return float((s[0] / s[-1]) ** 2)


def ols_coefficients(design, response):
    """``(D^T D)^{-1} D^T Y`` via column-pivoted QR.

    Raises :class:`SingularGramError` when ``cond(D^T D)`` exceeds
    ``MAX_GRAM_CONDITION`` or ``D`` has fewer rows than columns.
    """
    design = np.asarray(design, dtype=float)
    response = np.asarray(response, dtype=float)
    n, k = design.shape
    if n < k:
        raise SingularGramError(f"{n} samples cannot identify {k} coefficients")
    cond = gram_condition(design)
    if not cond <= MAX_GRAM_CONDITION:
        raise SingularGramError(
            f"Gram matrix condition number {cond:.3g} exceeds {MAX_GRAM_CONDITION:.0e}",
            condition=cond,
        )
    q, r, piv = scipy.linalg.qr(design, mode="economic", pivoting=True)
    coef = scipy.linalg.solve_triangular(r, q.T @ response)
    out = np.empty_like(coef)
    out[piv] = coef
    return out


def ols_loading(panel, f_hat):
    """Vectorized OLS loading ``Gamma = XX^T F (F^T F)^{-1}``, shape ``p1p2 x k1k2``.

    Rows of ``XX`` and ``F`` are the column-stacked samples.
    """
    panel = as_panel(panel)
    f_hat = as_panel(f_hat, "f_hat")
    if panel.shape[0] != f_hat.shape[0]:
        raise ShapeError("panel and f_hat must have the same number of samples")
    xx = panel_to_rows(panel)
    ff = panel_to_rows(f_hat)
    return ols_coefficients(ff, xx).T


def block_average(gamma_tilde, p1, p2, k1, k2):
    """Block-wise averages of a ``p1p2 x k1k2`` loading.

    Returns ``(r_hat, c_hat, c_s, r_s)``.  ``r_hat`` averages the ``p2*k2``
    blocks of size ``p1 x k1``; ``c_hat`` averages the blocks of the shuffled
    loading.  For an exact ``C ⊗ R`` input this gives ``mean(C) * R`` and
    ``mean(R) * C``.  ``c_s`` and ``r_s`` are the entry means of ``c_hat`` and
    ``r_hat``; both equal the grand mean of ``gamma_tilde``.
    """
    g = np.asarray(gamma_tilde, dtype=float)
    if g.shape != (p1 * p2, k1 * k2):
        raise ShapeError(f"gamma_tilde must be {p1 * p2}x{k1 * k2}, got {g.shape}")
    # g4[k, j, b, a] = g[j + p1*k, a + k1*b]
    g4 = g.reshape(p2, p1, k2, k1)
    r_hat = g4.mean(axis=(0, 2))
    c_hat = g4.mean(axis=(1, 3))
    return r_hat, c_hat, float(c_hat.mean()), float(r_hat.mean())


def idiosyncratic_kron(panel, f_hat, r_hat, c_hat, c_s, r_s):
    """``U_i = X_i - R F_i C^T / s`` with ``s`` the common block scale.

    ``r_hat`` estimates ``c_s R`` and ``c_hat`` estimates ``r_s C``, so the
    product ``r_hat F c_hat^T`` carries the factor ``c_s r_s`` once; it is
    removed by dividing by ``r_s`` (which equals ``c_s``).
    """
    panel = as_panel(panel)
    f_hat = as_panel(f_hat, "f_hat")
    if abs(c_s * r_s) <= MIN_SCALE_PRODUCT:
        raise DegenerateScaleError(
            f"block-averaging scale product {c_s * r_s:.3g} is numerically zero"
        )
    common = np.matmul(np.matmul(r_hat, f_hat), c_hat.T) / r_s
    return panel - common


def idiosyncratic_projection(panel, f_hat):
    """Residual of projecting the vectorized panel off the factor columns.

    Satisfies ``F^T U = 0`` up to round-off.
    """
    panel = as_panel(panel)
    f_hat = as_panel(f_hat, "f_hat")
    _, p1, p2 = panel.shape
    xx = panel_to_rows(panel)
    ff = panel_to_rows(f_hat)
    resid = xx - ff @ ols_coefficients(ff, xx)
    return rows_to_panel(resid, p1, p2)


@dataclass(frozen=True)
class MfmFit:
    """Fitted matrix factor model.

    ``mean`` is the entrywise estimation-sample mean removed before
    projection (``None`` when fitting without demeaning).
    """

    projections: ProjectionPair
    f_hat: np.ndarray
    gamma_tilde: np.ndarray
    r_hat: np.ndarray
    c_hat: np.ndarray
    c_s: float
    r_s: float
    u_hat: np.ndarray
    u_hat_mode: str
    mean: Optional[np.ndarray] = None

    @property
    def dims(self):
        n, p1, p2 = self.u_hat.shape
        return n, p1, p2, self.projections.k1, self.projections.k2

    def common_component(self, f_hat):
        """Block-averaged common component ``R F C^T / s`` for each sample."""
        f_hat = as_panel(f_hat, "f_hat")
        return np.matmul(np.matmul(self.r_hat, f_hat), self.c_hat.T) / self.r_s

    def transform(self, panel):
        """Factor and idiosyncratic estimates for new samples.

        Uses the fitted projections, mean and loadings; no refitting.
        """
        panel = as_panel(panel)
        if self.mean is not None:
            panel = panel - self.mean
        f_new = project_factors(panel, self.projections)
        if self.u_hat_mode == KRONECKER:
            u_new = panel - self.common_component(f_new)
        else:
            _, p1, p2 = panel.shape
            fitted = panel_to_rows(f_new) @ self.gamma_tilde.T
            u_new = panel - rows_to_panel(fitted, p1, p2)
        return f_new, u_new


def fit_mfm(pretrain, panel, k1, k2, u_mode=KRONECKER, demean=True):
    """Full matrix factor model pipeline.

    ``pretrain`` builds the projections and must be independent of
    ``panel``.  With ``demean`` each panel is centred by its own entrywise
    sample mean first.
    """
    if u_mode not in U_MODES:
        raise ValueError(f"u_mode must be one of {U_MODES}, got {u_mode!r}")
    pretrain = as_panel(pretrain, "pretrain")
    panel = as_panel(panel)
    if pretrain.shape[1:] != panel.shape[1:]:
        raise ShapeError(
            f"pretrain matrices are {pretrain.shape[1:]} but panel matrices are {panel.shape[1:]}"
        )
    _, p1, p2 = panel.shape
    mean = None
    if demean:
        pretrain = pretrain - pretrain.mean(axis=0)
        mean = panel.mean(axis=0)
        panel = panel - mean

    proj = pretrain_projections(pretrain, k1, k2)
    f_hat = project_factors(panel, proj)
    gamma = ols_loading(panel, f_hat)
    r_hat, c_hat, c_s, r_s = block_average(gamma, p1, p2, k1, k2)
    if u_mode == KRONECKER:
        u_hat = idiosyncratic_kron(panel, f_hat, r_hat, c_hat, c_s, r_s)
    else:
        u_hat = idiosyncratic_projection(panel, f_hat)
    return MfmFit(
        projections=proj,
        f_hat=f_hat,
        gamma_tilde=gamma,
        r_hat=r_hat,
        c_hat=c_hat,
        c_s=c_s,
        r_s=r_s,
        u_hat=u_hat,
        u_hat_mode=u_mode,
        mean=mean,
    )
