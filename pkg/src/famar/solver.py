"""Penalized matrix factor regression.

Solves

    min_{A, B}  (2n)^{-1} sum_i (y_i - <A, F_i> - <B, U_i>)^2 + lam * pen(B)

with ``pen`` the nuclear norm (low-rank path) or the entrywise l1 norm
(sparse path).  Both paths share one accelerated proximal gradient core
with backtracking on the step parameter ``L``.  The baseline matrix
regression on the raw covariates is the nuclear path with an empty factor
block.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ShapeError
from .linalg import (
    RANK_RTOL,
    numerical_rank,
    panel_to_rows,
    soft_threshold,
    svt,
    unvec,
    vec,
)
from .mfm import as_panel, ols_coefficients

logger = logging.getLogger(__name__)

NUCLEAR = "nuclear"
SPARSE = "sparse"

MAX_BACKTRACK = 200
DUALITY_GAP_TOL = 1e-7
# relative inflation of the nuclear null threshold
NULL_MARGIN = 1e-10


def _empty_factor_panel(n):
    return np.zeros((n, 0, 0))


@dataclass(frozen=True)
class RegressionData:
    """Response with factor and idiosyncratic covariate panels.

    ``f_panel`` may be ``None`` (no factor block).  The stacked design matrix
    ``[vec(F_i)^T, vec(U_i)^T]`` is built once and cached on ``design``.
    """

    y: np.ndarray
    f_panel: Optional[np.ndarray]
    u_panel: np.ndarray
    design: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        u = as_panel(self.u_panel, "u_panel")
        n = u.shape[0]
        if self.f_panel is None or np.asarray(self.f_panel).size == 0:
            f = _empty_factor_panel(n)
        else:
            f = as_panel(self.f_panel, "f_panel")
        if not (y.shape[0] == f.shape[0] == n):
            raise ShapeError(
                f"sample counts differ: y={y.shape[0]}, f={f.shape[0]}, u={n}"
            )
        if not np.all(np.isfinite(y)):
            raise ShapeError("y contains non-finite entries")
        if f.size:
            design = np.hstack([panel_to_rows(f), panel_to_rows(u)])
        else:
            design = panel_to_rows(u)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "f_panel", f)
        object.__setattr__(self, "u_panel", u)
        object.__setattr__(self, "design", design)

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def a_shape(self):
        return self.f_panel.shape[1:]

    @property
    def b_shape(self):
        return self.u_panel.shape[1:]

    @property
    def ka(self):
        k1, k2 = self.a_shape
        return k1 * k2

    def subset(self, idx):
        idx = np.asarray(idx)
        f = self.f_panel[idx] if self.ka else None
        return RegressionData(self.y[idx], f, self.u_panel[idx])


@dataclass(frozen=True)
class SolverConfig:
    """Inputs of the accelerated solver.

    ``l0`` is the initial step parameter, ``gamma`` its backtracking
    multiplier and ``epsilon`` the tolerance on the relative change of the
    iterates.  ``a0``/``b0`` default to zero matrices.
    """

    lam: float = 0.0
    l0: float = 1.0
    gamma: float = 2.0
    epsilon: float = 1e-6
    max_iter: int = 5000
    a0: Optional[np.ndarray] = None
    b0: Optional[np.ndarray] = None
    check_majorization: bool = False

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError("lam must be nonnegative")
        if not self.l0 > 0:
            raise ValueError("l0 must be positive")
        if not self.gamma > 1:
            raise ValueError("gamma must exceed 1")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")

    def replace(self, **changes):
        fields = {k: getattr(self, k) for k in self.__dataclass_fields__}
        fields.update(changes)
        return SolverConfig(**fields)


@dataclass(frozen=True)
class RegressionFit:
    a_hat: np.ndarray
    b_hat: np.ndarray
    lam: float
    iterations: int
    objective_trace: np.ndarray
    rank_b: int
    converged: bool
    lipschitz: float = float("nan")
    penalty: str = NUCLEAR

    @property
    def objective(self):
        return float(self.objective_trace[-1]) if len(self.objective_trace) else float("nan")


def _theta(a, b):
    return np.concatenate([vec(a), vec(b)])


def residual(a, b, data):
    """``y_i - <A, F_i> - <B, U_i>`` for every sample."""
    return data.y - data.design @ _theta(a, b)


def objective(a, b, data, lam, penalty=NUCLEAR):
    """``(2n)^{-1} ||residual||^2 + lam * pen(B)``."""
    r = residual(a, b, data)
    if penalty == NUCLEAR:
        pen = np.linalg.svd(np.asarray(b, dtype=float), compute_uv=False).sum() if np.size(b) else 0.0
    else:
        pen = np.abs(b).sum()
    return float(r @ r / (2 * data.n) + lam * pen)


def gradients(a, b, data):
    """Partial gradients of the smooth loss with respect to ``A`` and ``B``."""
    r = residual(a, b, data)
    g = -(data.design.T @ r) / data.n
    k1, k2 = data.a_shape
    p1, p2 = data.b_shape
    ka = data.ka
    return unvec(g[:ka], k1, k2), unvec(g[ka:], p1, p2)


def _nuclear_prox(p1, p2):
    def prox(v, t):
        b, d = svt(unvec(v, p1, p2), t, return_singular_values=True)
        return vec(b), float(d.sum())

    return prox


def _l1_prox(v, t):
    out = soft_threshold(v, t)
    return out, float(np.abs(out).sum())


def _lasso_gap_ok(z, y, lam):
    """Closure testing the relative lasso duality gap at an iterate."""
    n = y.shape[0]

    def ok(theta, r):
        if lam == 0:
            return True
        primal = r @ r / (2 * n) + lam * np.abs(theta).sum()
        corr = np.max(np.abs(z.T @ r)) if r.size else 0.0
        scale = 1.0 if corr <= n * lam else n * lam / corr
        nu = scale * r
        dual = (nu @ y - 0.5 * nu @ nu) / n
        return primal - dual <= DUALITY_GAP_TOL * max(1.0, abs(primal))

    return ok


def _accelerated_prox_grad(z, y, prox, lam, cfg, b0, a_of=None, extra_check=None, restart=True):
    """Accelerated proximal gradient with backtracking on the step ``L``.

    Minimizes ``(2n)^{-1} ||y - z b||^2 + lam * pen(b)`` where ``prox(v, t)``
    returns ``(prox_{t pen}(v), pen(value))``.  ``a_of(b)``, when given, maps
    ``b`` to the profiled unpenalized coefficients so that their relative
    change enters the stopping rule.  ``L`` is carried over between
    iterations and only ever increased.

    Returns ``(b, trace, iterations, converged, L)``.
    """
    n = y.shape[0]
    b_prev = b0.copy()
    r_prev = y - z @ b_prev
    a_prev = a_of(b_prev) if a_of is not None else None
    search = b_prev.copy()
    r_search = r_prev.copy()
    alpha = 1.0
    L = cfg.l0
    trace = []
    converged = False
    k = 0
    for k in range(1, cfg.max_iter + 1):
        g = -(z.T @ r_search) / n
        for _ in range(MAX_BACKTRACK):
            cand, pen = prox(search - g / L, lam / L)
            delta = cand - search
            r_cand = y - z @ cand
            d = r_search - r_cand
            # f(cand) <= f(search) + <g, delta> + L/2 ||delta||^2 for a
            # quadratic f reduces to ||z delta||^2 / n <= L ||delta||^2
            if d @ d <= n * L * (delta @ delta):
                break
            L *= cfg.gamma
        else:
            logger.warning("backtracking did not find a step after %d tries", MAX_BACKTRACK)
        if cfg.check_majorization:
            _assert_majorized(r_search, r_cand, g, delta, L, lam, pen, n)
        trace.append(r_cand @ r_cand / (2 * n) + lam * pen)

        change = np.linalg.norm(cand - b_prev) / (1 + np.linalg.norm(b_prev))
        if a_of is not None:
            a_cand = a_of(cand)
            change += np.linalg.norm(a_cand - a_prev) / (1 + np.linalg.norm(a_prev))
            a_prev = a_cand

        alpha_next = 0.5 * (1 + math.sqrt(1 + 4 * alpha * alpha))
        mom = (alpha - 1) / alpha_next
        step = cand - b_prev
        if restart and (search - cand) @ step > 0:
            # momentum points uphill: drop it (gradient-based adaptive restart)
            alpha_next, mom = 1.0, 0.0
        search = cand + mom * step
        r_search = r_cand + mom * (r_cand - r_prev)
        b_prev, r_prev, alpha = cand, r_cand, alpha_next

        if (
            change < cfg.epsilon
            and _stationary(z, r_cand, cand, prox, lam, L, cfg.epsilon)
            and (extra_check is None or extra_check(cand, r_cand))
        ):
            converged = True
            break
    return b_prev, np.asarray(trace), k, converged, L


def _stationary(z, r, b, prox, lam, L, eps):
    """Prox-gradient fixed-point certificate ``||b - prox(b - grad / L)|| <= eps``."""
    g = -(z.T @ r) / r.shape[0]
    moved, _ = prox(b - g / L, lam / L)
    return np.linalg.norm(b - moved) <= eps


def _assert_majorized(r_search, r_cand, g, delta, L, lam, pen, n):
    f_search = r_search @ r_search / (2 * n)
    f_cand = r_cand @ r_cand / (2 * n)
    model = f_search + g @ delta + 0.5 * L * (delta @ delta) + lam * pen
    value = f_cand + lam * pen
    slack = 1e-9 * max(1.0, abs(model))
    if value > model + slack:
        raise AssertionError(f"majorization violated: F={value!r} > model={model!r}")


def _initial_b(data, cfg):
    k1, k2 = data.a_shape
    p1, p2 = data.b_shape
    b0 = np.zeros((p1, p2)) if cfg.b0 is None else np.asarray(cfg.b0, dtype=float)
    if b0.shape != (p1, p2) or (cfg.a0 is not None and np.shape(cfg.a0) != (k1, k2)):
        raise ShapeError("initial values do not match the data dimensions")
    return vec(b0)


def _make_fit(a, b, data, lam, trace, iters, converged, L, penalty):
    k1, k2 = data.a_shape
    p1, p2 = data.b_shape
    a = unvec(a, k1, k2)
    b = unvec(b, p1, p2)
    if penalty == NUCLEAR:
        rank = numerical_rank(b, RANK_RTOL)
    else:
        rank = int(np.count_nonzero(b))
    if not converged:
        logger.info("solver stopped at max_iter=%d without meeting the tolerance", iters)
    return RegressionFit(
        a_hat=a,
        b_hat=b,
        lam=float(lam),
        iterations=int(iters),
        objective_trace=trace,
        rank_b=rank,
        converged=bool(converged),
        lipschitz=float(L),
        penalty=penalty,
    )


def _profile_factors(data):
    """Eliminate the unpenalized factor block by exact least squares.

    Returns ``(z, y, a_of)``: the idiosyncratic design and response with the
    factor column space projected out, and the map ``vec(B) -> vec(A(B))``
    giving the optimal factor coefficients for a fixed ``B``.
    """
    zu = data.design[:, data.ka:]
    if not data.ka:
        return zu, data.y, None
    ff = data.design[:, : data.ka]
    a_ols = ols_coefficients(ff, data.y)
    gain = ols_coefficients(ff, zu)
    zp = zu - ff @ gain
    yp = data.y - ff @ a_ols

    def a_of(b):
        return a_ols - gain @ b

    return zp, yp, a_of


def apgd_nuclear(data, config=None):
    """Nuclear-norm penalized factor regression by accelerated proximal gradient.

    The unpenalized ``A`` is profiled out: for fixed ``B`` its optimum is the
    least-squares fit of the remaining residual on the factors, which leaves
    a problem in ``B`` alone with the same objective values.  This removes
    the scale mismatch between the factor and idiosyncratic blocks that
    otherwise forces tiny steps on ``B``.  ``config.a0`` is therefore only
    shape-checked.

    Non-convergence within ``max_iter`` is reported through
    ``RegressionFit.converged`` rather than raised.
    """
    cfg = config or SolverConfig()
    p1, p2 = data.b_shape
    b0 = _initial_b(data, cfg)
    z, y, a_of = _profile_factors(data)
    b, trace, iters, conv, L = _accelerated_prox_grad(
        z, y, _nuclear_prox(p1, p2), cfg.lam, cfg, b0, a_of=a_of
    )
    a = a_of(b) if a_of is not None else np.zeros(0)
    return _make_fit(a, b, data, cfg.lam, trace, iters, conv, L, NUCLEAR)


def fit_baseline_nuclear(y, x_panel, config=None):
    """Nuclear-penalized matrix regression directly on the covariates."""
    return apgd_nuclear(RegressionData(y, None, x_panel), config)


def fit_sparse(data, lam, config=None):
    """Two-step sparse factor regression.

    ``vec(A)`` is the OLS of ``y`` on the factors; ``B`` is the lasso of the
    factor-projected response on the idiosyncratic panel, solved with the
    shared accelerated core (soft-threshold prox) until both the iterate
    tolerance and a relative duality gap of ``1e-7`` are met.  The
    idiosyncratic panel is expected to be orthogonal to the factors (the
    projection-mode estimate).
    """
    cfg = (config or SolverConfig()).replace(lam=lam)
    k1, k2 = data.a_shape
    p1, p2 = data.b_shape
    y = data.y
    if data.ka:
        ff = data.design[:, : data.ka]
        a = ols_coefficients(ff, y)
        y_tilde = y - ff @ a
    else:
        a = np.zeros(0)
        y_tilde = y
    zu = data.design[:, data.ka:]
    b0 = _initial_b(data, cfg)
    b, trace, iters, conv, L = _accelerated_prox_grad(
        zu, y_tilde, _l1_prox, lam, cfg, b0, extra_check=_lasso_gap_ok(zu, y_tilde, lam)
    )
    return _make_fit(a, b, data, lam, trace, iters, conv, L, SPARSE)


def predict(fit, f_new, u_new):
    """``<A, F_i> + <B, U_i>`` for new samples."""
    u_new = as_panel(u_new, "u_new")
    if u_new.shape[1:] != fit.b_hat.shape:
        raise ShapeError(f"u_new matrices are {u_new.shape[1:]}, fit expects {fit.b_hat.shape}")
    out = panel_to_rows(u_new) @ vec(fit.b_hat)
    if fit.a_hat.size:
        f_new = as_panel(f_new, "f_new")
        if f_new.shape[1:] != fit.a_hat.shape or f_new.shape[0] != u_new.shape[0]:
            raise ShapeError("f_new does not match the fit or u_new")
        out = out + panel_to_rows(f_new) @ vec(fit.a_hat)
    return out


def lambda_max_nuclear(data):
    """Smallest ``lam`` at which ``B = 0`` is optimal for the nuclear path.

    Spectral norm of the ``B``-gradient at ``(A_ols, 0)``, computed along the
    solver's own path and inflated by ``NULL_MARGIN`` so that the solver
    returns ``B = 0`` exactly at this value despite rounding in the SVD.
    """
    z, y, _ = _profile_factors(data)
    p1, p2 = data.b_shape
    g = unvec(z.T @ y / data.n, p1, p2)
    return float(np.linalg.norm(g, 2)) * (1 + NULL_MARGIN)


def lambda_max_sparse(data):
    """Smallest ``lam`` at which ``B = 0`` solves the lasso step."""
    z = data.design
    ka = data.ka
    r = data.y
    if ka:
        r = r - z[:, :ka] @ ols_coefficients(z[:, :ka], r)
    return float(np.max(np.abs(z[:, ka:].T @ r)) / data.n)


def default_lambda_grid(lam_max, num=20, ratio=1e-4):
    """Log-spaced grid on ``[ratio, 1] * lam_max``, largest value first."""
    return lam_max * np.logspace(0.0, math.log10(ratio), num)


def _fold_indices(n, folds, seed):
    if folds < 2:
        raise ValueError("folds must be at least 2")
    if folds > n:
        raise ValueError(f"{folds} folds need at least {folds} samples, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    return np.array_split(perm, folds)


def fit_path(data, lambdas, method=NUCLEAR, config=None):
    """Solve along ``lambdas`` (any order), warm-starting in decreasing order.

    Returns fits in the order of ``lambdas``.
    """
    cfg = config or SolverConfig()
    lambdas = np.asarray(lambdas, dtype=float)
    order = np.argsort(-lambdas, kind="stable")
    fits = [None] * len(lambdas)
    warm = cfg
    for j in order:
        lam = float(lambdas[j])
        if method == NUCLEAR:
            fit = apgd_nuclear(data, warm.replace(lam=lam))
        elif method == SPARSE:
            fit = fit_sparse(data, lam, warm)
        else:
            raise ValueError(f"unknown method {method!r}")
        fits[j] = fit
        warm = warm.replace(a0=fit.a_hat, b0=fit.b_hat)
    return fits


def cross_validate(data, lambda_grid, folds=5, seed=0, method=NUCLEAR, config=None):
    """K-fold choice of the penalty level.

    Returns ``(lambda_star, cv_curve)`` where ``cv_curve[j]`` is the mean
    over folds of the held-out mean squared prediction error at
    ``lambda_grid[j]``.  Ties go to the larger penalty.
    """
    grid = np.asarray(lambda_grid, dtype=float).ravel()
    if grid.size == 0:
        raise ValueError("lambda_grid is empty")
    if grid.size == 1:
        return float(grid[0]), np.full(1, np.nan)
    splits = _fold_indices(data.n, folds, seed)
    errors = np.zeros((len(splits), grid.size))
    all_idx = np.arange(data.n)
    for f, test in enumerate(splits):
        train = np.setdiff1d(all_idx, test)
        train_data = data.subset(train)
        test_data = data.subset(test)
        for j, fit in enumerate(fit_path(train_data, grid, method, config)):
            pred = predict(fit, test_data.f_panel, test_data.u_panel)
            errors[f, j] = np.mean((test_data.y - pred) ** 2)
    curve = errors.mean(axis=0)
    best = curve.min()
    tied = np.flatnonzero(curve <= best + 1e-12 * max(abs(best), 1e-300))
    lam_star = float(grid[tied].max())
    return lam_star, curve
