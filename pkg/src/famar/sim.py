"""Monte-Carlo harness for synthetic factor-augmented matrix regression.

Data follow

    X_i = R F_i C^T + U_i,    y_i = <A, F_i> + <B, U_i> + eps_i

with Gaussian entries throughout.  Distribution parameters are given as
``(mean, sd)`` pairs; ``N(2, 4)`` in variance notation is ``(2.0, 2.0)``.

Every replication draws from its own Philox stream keyed by
``(seed, point, replication)``, so results do not depend on the order or
the process in which replications run.
"""

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import stats
from threadpoolctl import threadpool_limits

from .errors import EstimationError
from .mfm import KRONECKER, PROJECTION, fit_mfm, ols_coefficients
from .solver import (
    NUCLEAR,
    RegressionData,
    SolverConfig,
    apgd_nuclear,
    cross_validate,
    default_lambda_grid,
    lambda_max_nuclear,
    predict,
)
from .linalg import panel_to_rows, vec

logger = logging.getLogger(__name__)

SCALED_RTBC = "scaled_rtbc"
IID_NORMAL = "iid_normal"
A_KINDS = (SCALED_RTBC, IID_NORMAL)

METHODS = ("oracle", "famar", "baseline")
ROLLING_METHODS = ("famar", "factors_only", "idio_only", "baseline_x")

# spawn-key slot for draws shared by all replications of a grid point
SHARED_STREAM = 2**32 - 1


@dataclass(frozen=True)
class SimConfig:
    """Generative recipe for one grid point.

    ``a_mode`` is ``{"kind": "scaled_rtbc", "scale": s}`` for
    ``A = s * R^T B C``, or ``{"kind": "iid_normal", "mean": m, "sd": s}``;
    with ``"dim_scaled": true`` the iid mean and sd are multiplied by
    ``p1 * p2``.  ``fixed_loadings`` draws ``R, C, A, B`` once per grid
    point instead of once per replication.
    """

    n: int = 1000
    n_pretrain: int = 500
    n_new: int = 1000
    p1: int = 20
    p2: int = 20
    k1: int = 2
    k2: int = 2
    rank_b: int = 2
    loading_dist: tuple = (2.0, 2.0)
    factor_sd: float = 1.0
    idio_sd: float = 0.2
    noise_sd: float = 1.0
    b_dist: tuple = (0.5, 0.5)
    a_mode: dict = field(default_factory=lambda: {"kind": SCALED_RTBC, "scale": 0.5})
    seed: int = 0
    replications: int = 100
    fixed_loadings: bool = False

    def __post_init__(self):
        for name in ("n", "n_pretrain", "p1", "p2", "k1", "k2", "replications"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be positive")
        if self.n_new < 0:
            raise ValueError("n_new must be nonnegative")
        if not 0 <= self.rank_b <= min(self.p1, self.p2):
            raise ValueError(f"rank_b must lie in [0, {min(self.p1, self.p2)}]")
        if self.k1 > self.p1 or self.k2 > self.p2:
            raise ValueError("factor dimensions exceed matrix dimensions")
        for name in ("factor_sd", "idio_sd", "noise_sd"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.loading_dist[1] <= 0 or self.b_dist[1] < 0:
            raise ValueError("distribution sds must be positive")
        kind = self.a_mode.get("kind")
        if kind not in A_KINDS:
            raise ValueError(f"a_mode kind must be one of {A_KINDS}, got {kind!r}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        object.__setattr__(self, "loading_dist", tuple(float(v) for v in self.loading_dist))
        object.__setattr__(self, "b_dist", tuple(float(v) for v in self.b_dist))

    def to_dict(self):
        out = asdict(self)
        out["loading_dist"] = list(self.loading_dist)
        out["b_dist"] = list(self.b_dist)
        return out


def stream(seed, point, replication):
    """Independent generator for ``(seed, point, replication)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(point), int(replication)))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class Truth:
    r: np.ndarray
    c: np.ndarray
    a: np.ndarray
    b: np.ndarray
    f: np.ndarray
    u: np.ndarray
    f_new: np.ndarray
    u_new: np.ndarray


@dataclass(frozen=True)
class SimData:
    pretrain: np.ndarray
    x: np.ndarray
    x_new: np.ndarray
    y: np.ndarray
    y_new: np.ndarray
    truth: Truth


def generate_lowrank_b(p1, p2, r, dist, rng):
    """Gaussian ``p1 x p2`` draw truncated to its best rank-``r`` approximation."""
    if not 0 <= r <= min(p1, p2):
        raise ValueError(f"rank {r} must lie in [0, {min(p1, p2)}]")
    raw = rng.normal(dist[0], dist[1], size=(p1, p2))
    if r == min(p1, p2):
        return raw
    u, s, vt = np.linalg.svd(raw, full_matrices=False)
    return (u[:, :r] * s[:r]) @ vt[:r]


def _draw_coefficients(cfg, rng):
    r = rng.normal(cfg.loading_dist[0], cfg.loading_dist[1], size=(cfg.p1, cfg.k1))
    c = rng.normal(cfg.loading_dist[0], cfg.loading_dist[1], size=(cfg.p2, cfg.k2))
    b = generate_lowrank_b(cfg.p1, cfg.p2, cfg.rank_b, cfg.b_dist, rng)
    mode = cfg.a_mode
    if mode["kind"] == SCALED_RTBC:
        a = float(mode.get("scale", 0.5)) * r.T @ b @ c
    else:
        scale = cfg.p1 * cfg.p2 if mode.get("dim_scaled", False) else 1.0
        a = rng.normal(mode.get("mean", 0.0) * scale, mode.get("sd", 1.0) * scale,
                       size=(cfg.k1, cfg.k2))
    return r, c, a, b


def _draw_panel(cfg, r, c, n, rng):
    f = cfg.factor_sd * rng.standard_normal((n, cfg.k1, cfg.k2))
    u = cfg.idio_sd * rng.standard_normal((n, cfg.p1, cfg.p2))
    x = np.matmul(np.matmul(r, f), c.T) + u
    return f, u, x


def _response(a, b, f, u, noise_sd, rng):
    y = panel_to_rows(f) @ vec(a) + panel_to_rows(u) @ vec(b)
    return y + noise_sd * rng.standard_normal(y.shape[0])


def generate(cfg, replication_index, point_index=0):
    """Draw one replication; deterministic in ``(cfg.seed, point_index, replication_index)``."""
    rng = stream(cfg.seed, point_index, replication_index)
    if cfg.fixed_loadings:
        coef = _draw_coefficients(cfg, stream(cfg.seed, point_index, SHARED_STREAM))
    else:
        coef = _draw_coefficients(cfg, rng)
    r, c, a, b = coef
    _, _, pretrain = _draw_panel(cfg, r, c, cfg.n_pretrain, rng)
    f, u, x = _draw_panel(cfg, r, c, cfg.n, rng)
    y = _response(a, b, f, u, cfg.noise_sd, rng)
    f_new, u_new, x_new = _draw_panel(cfg, r, c, cfg.n_new, rng)
    y_new = _response(a, b, f_new, u_new, cfg.noise_sd, rng)
    truth = Truth(r=r, c=c, a=a, b=b, f=f, u=u, f_new=f_new, u_new=u_new)
    return SimData(pretrain=pretrain, x=x, x_new=x_new, y=y, y_new=y_new, truth=truth)


@dataclass(frozen=True)
class OracleRotation:
    """Rotations ``H1 = W1^T R / p1``, ``H2 = W2^T C / p2`` and the rotated truth."""

    h1: np.ndarray
    h2: np.ndarray
    r_ring: np.ndarray
    c_ring: np.ndarray
    c_s_ring: float
    r_s_ring: float

    @classmethod
    def from_truth(cls, projections, r, c):
        h1 = projections.w1.T @ r / projections.p1
        h2 = projections.w2.T @ c / projections.p2
        r_ring = np.linalg.solve(h1.T, r.T).T
        c_ring = np.linalg.solve(h2.T, c.T).T
        return cls(h1, h2, r_ring, c_ring, float(c_ring.mean()), float(r_ring.mean()))

    def rotate_factors(self, f):
        """``H1 F_i H2^T`` for each sample."""
        return np.matmul(np.matmul(self.h1, f), self.h2.T)


def _rel(est, target):
    denom = np.linalg.norm(target)
    return float(np.linalg.norm(est - target) / denom) if denom > 0 else float("nan")


# ---------------------------------------------------------------------------
# normality of the block-averaged loadings


@dataclass(frozen=True)
class NormalityResult:
    """Scaled loading errors over replications and their KS diagnostics.

    ``r_scaled`` has shape ``(reps, p1, k1)``; ``r_std`` is it divided by the
    entrywise sample sd.  ``r_ks``/``r_pvalue`` hold the one-sample KS
    statistic and p-value per entry; likewise for ``c_*``.
    """

    r_scaled: np.ndarray
    c_scaled: np.ndarray
    r_std: np.ndarray
    c_std: np.ndarray
    r_ks: np.ndarray
    r_pvalue: np.ndarray
    c_ks: np.ndarray
    c_pvalue: np.ndarray

    def pass_rate(self, level=0.01):
        p = np.concatenate([self.r_pvalue.ravel(), self.c_pvalue.ravel()])
        return float(np.mean(p > level))

    def mean_ok_rate(self):
        """Share of entries whose standardized mean is within ``4 / sqrt(reps)``."""
        reps = self.r_std.shape[0]
        means = np.concatenate([self.r_std.mean(axis=0).ravel(), self.c_std.mean(axis=0).ravel()])
        return float(np.mean(np.abs(means) < 4 / math.sqrt(reps)))


def _normality_replication(cfg, rep):
    data = generate(cfg, rep)
    fit = fit_mfm(data.pretrain, data.x, cfg.k1, cfg.k2, u_mode=KRONECKER, demean=False)
    rot = OracleRotation.from_truth(fit.projections, data.truth.r, data.truth.c)
    r_err = math.sqrt(cfg.n * cfg.p2 * cfg.k2) * (fit.r_hat - rot.c_s_ring * rot.r_ring)
    c_err = math.sqrt(cfg.n * cfg.p1 * cfg.k1) * (fit.c_hat - rot.r_s_ring * rot.c_ring)
    return r_err, c_err


def _standardize(seq, what):
    sd = seq.std(axis=0, ddof=1)
    if np.any(~(sd > 0)):
        raise EstimationError(f"{what} errors have zero variance across replications")
    return seq / sd


def _ks(std):
    flat = std.reshape(std.shape[0], -1)
    ks = np.empty(flat.shape[1])
    pv = np.empty(flat.shape[1])
    for j in range(flat.shape[1]):
        res = stats.kstest(flat[:, j], "norm")
        ks[j], pv[j] = res.statistic, res.pvalue
    return ks.reshape(std.shape[1:]), pv.reshape(std.shape[1:])


def normality_experiment(cfg, workers=None):
    """Entrywise standardized loading errors ``sqrt(n p2 k2)(R - c_s R_ring) / s``.

    The loadings are drawn once (``cfg.fixed_loadings`` is forced on) and
    every replication redraws the pre-training and estimation panels.
    """
    if cfg.replications < 100:
        raise ValueError("the normality experiment needs at least 100 replications")
    cfg = replace(cfg, fixed_loadings=True)
    outs = _map(_normality_replication, [(cfg, rep) for rep in range(cfg.replications)], workers)
    r_scaled = np.stack([o[0] for o in outs])
    c_scaled = np.stack([o[1] for o in outs])
    r_std = _standardize(r_scaled, "row loading")
    c_std = _standardize(c_scaled, "column loading")
    r_ks, r_p = _ks(r_std)
    c_ks, c_p = _ks(c_std)
    return NormalityResult(r_scaled, c_scaled, r_std, c_std, r_ks, r_p, c_ks, c_p)


# ---------------------------------------------------------------------------
# error curves


@dataclass(frozen=True)
class RegressionSpec:
    """How the penalized regressions of a setting are tuned.

    With ``lambda_ratio`` set, ``lam = lambda_ratio * lambda_max`` is used
    directly; otherwise ``lam`` is chosen by ``folds``-fold cross validation
    over ``grid_size`` log-spaced values down to ``grid_ratio * lambda_max``.
    ``cv_epsilon`` optionally loosens the solver tolerance inside the
    cross validation only; the final fit always uses ``solver``.
    """

    methods: tuple = METHODS
    folds: int = 5
    grid_size: int = 20
    grid_ratio: float = 1e-4
    lambda_ratio: Optional[float] = None
    cv_epsilon: Optional[float] = None
    solver: SolverConfig = field(default_factory=SolverConfig)


def _tuned_fit(data, spec, seed):
    lam_max = lambda_max_nuclear(data)
    if spec.lambda_ratio is not None:
        lam = spec.lambda_ratio * lam_max
    else:
        grid = default_lambda_grid(lam_max, spec.grid_size, spec.grid_ratio)
        cv_solver = spec.solver
        if spec.cv_epsilon is not None:
            cv_solver = cv_solver.replace(epsilon=spec.cv_epsilon)
        lam, _ = cross_validate(data, grid, spec.folds, seed, NUCLEAR, cv_solver)
    return apgd_nuclear(data, spec.solver.replace(lam=lam))


def _row(point, rep, method, cfg, **metrics):
    row = {
        "point": point,
        "replication": rep,
        "method": method,
        "n": cfg.n,
        "p1": cfg.p1,
        "p2": cfg.p2,
        "k1": cfg.k1,
        "k2": cfg.k2,
        "lambda": float("nan"),
        "rel_err_f": float("nan"),
        "rel_err_u": float("nan"),
        "rel_err_u_noavg": float("nan"),
        "rel_err_a": float("nan"),
        "rel_err_b": float("nan"),
        "rel_err_y_new": float("nan"),
        "rank_b": -1,
        "converged": 0,
        "failed": 0,
    }
    row.update(metrics)
    return row


def _regression_metrics(fit, truth, y_new, y_hat, a_target):
    return {
        "lambda": fit.lam,
        "rel_err_a": _rel(a_target, truth.a) if a_target is not None else float("nan"),
        "rel_err_b": _rel(fit.b_hat, truth.b),
        "rel_err_y_new": _rel(y_hat, y_new),
        "rank_b": fit.rank_b,
        "converged": int(fit.converged),
    }


def run_replication(cfg, point, rep, spec=None):
    """All method rows for one replication of one grid point.

    ``spec=None`` skips the regressions and reports the factor-model
    metrics only.  Estimation failures become rows with ``failed=1``.
    """
    data = generate(cfg, rep, point)
    truth = data.truth
    rows = []
    seed = int(stream(cfg.seed, point, rep).integers(2**63))
    try:
        fit = fit_mfm(data.pretrain, data.x, cfg.k1, cfg.k2, u_mode=KRONECKER, demean=False)
        fit_proj = fit_mfm(data.pretrain, data.x, cfg.k1, cfg.k2, u_mode=PROJECTION, demean=False)
    except EstimationError as exc:
        logger.warning("point %d replication %d: %s", point, rep, exc)
        return [_row(point, rep, "famar", cfg, failed=1)]
    rot = OracleRotation.from_truth(fit.projections, truth.r, truth.c)
    mfm_metrics = {
        "rel_err_f": _rel(fit.f_hat, rot.rotate_factors(truth.f)),
        "rel_err_u": _rel(fit.u_hat, truth.u),
        "rel_err_u_noavg": _rel(fit_proj.u_hat, truth.u),
    }
    if spec is None:
        return [_row(point, rep, "famar", cfg, **mfm_metrics)]

    for method in spec.methods:
        try:
            if method == "oracle":
                reg = RegressionData(data.y, truth.f, truth.u)
                f_new, u_new = truth.f_new, truth.u_new
            elif method == "famar":
                reg = RegressionData(data.y, fit.f_hat, fit.u_hat)
                f_new, u_new = fit.transform(data.x_new)
            elif method == "baseline":
                reg = RegressionData(data.y, None, data.x)
                f_new, u_new = None, data.x_new
            else:
                raise ValueError(f"unknown method {method!r}")
            rfit = _tuned_fit(reg, spec, seed)
        except EstimationError as exc:
            logger.warning("point %d replication %d %s: %s", point, rep, method, exc)
            rows.append(_row(point, rep, method, cfg, failed=1))
            continue
        y_hat = predict(rfit, f_new, u_new)
        if method == "oracle":
            a_target = rfit.a_hat
        elif method == "famar":
            a_target = rot.h1.T @ rfit.a_hat @ rot.h2
        else:
            a_target = None
        metrics = _regression_metrics(rfit, truth, data.y_new, y_hat, a_target)
        if method == "famar":
            metrics.update(mfm_metrics)
        rows.append(_row(point, rep, method, cfg, **metrics))
    return rows


def _call(args):
    fn, payload = args
    with threadpool_limits(limits=1):
        return fn(*payload)


def worker_count(workers=None):
    """Worker processes: explicit value, else ``FAMAR_THREADS``, else 1."""
    if workers is None:
        env = os.environ.get("FAMAR_THREADS", "").strip()
        workers = int(env) if env else 1
    if workers < 1:
        raise ValueError("worker count must be positive")
    return workers


def _map(fn, payloads, workers=None):
    """Ordered map with BLAS pinned to one thread; parallel over processes if asked."""
    workers = worker_count(workers)
    tasks = [(fn, p) for p in payloads]
    if workers == 1 or len(tasks) < 2:
        return [_call(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(_call, tasks, chunksize=1))


@dataclass(frozen=True)
class SimResult:
    """Per-replication rows plus per-point, per-method summaries."""

    rows: list
    configs: list

    def values(self, point, method, metric):
        out = [
            r[metric]
            for r in self.rows
            if r["point"] == point and r["method"] == method and not r["failed"]
        ]
        return np.asarray(out, dtype=float)

    def median(self, point, method, metric):
        v = self.values(point, method, metric)
        v = v[np.isfinite(v)]
        return float(np.median(v)) if v.size else float("nan")

    def aggregates(self):
        metrics = ("rel_err_f", "rel_err_u", "rel_err_u_noavg", "rel_err_a",
                   "rel_err_b", "rel_err_y_new", "rank_b", "lambda")
        out = []
        keys = sorted({(r["point"], r["method"]) for r in self.rows},
                      key=lambda k: (k[0], METHODS.index(k[1]) if k[1] in METHODS else 99))
        for point, method in keys:
            sel = [r for r in self.rows if r["point"] == point and r["method"] == method]
            entry = {"point": point, "method": method, "replications": len(sel),
                     "failed": int(sum(r["failed"] for r in sel)),
                     "not_converged": int(sum(1 for r in sel if not r["failed"] and not r["converged"]
                                              and np.isfinite(r["lambda"])))}
            for m in metrics:
                v = self.values(point, method, m)
                v = v[np.isfinite(v)]
                if m == "rank_b":
                    v = v[v >= 0]
                if v.size:
                    q25, med, q75 = np.quantile(v, [0.25, 0.5, 0.75])
                    entry[m] = {"mean": float(v.mean()), "sd": float(v.std(ddof=1)) if v.size > 1 else 0.0,
                                "q25": float(q25), "median": float(med), "q75": float(q75)}
                else:
                    entry[m] = None
            out.append(entry)
        return out


def run_setting(configs, spec=None, workers=None):
    """Run every replication of every grid point.

    Rows come back ordered by ``(point, replication, method)`` whatever the
    scheduling.
    """
    configs = list(configs)
    payloads = [(cfg, point, rep, spec)
                for point, cfg in enumerate(configs)
                for rep in range(cfg.replications)]
    results = _map(run_replication, payloads, workers)
    rows = [row for chunk in results for row in chunk]
    return SimResult(rows=rows, configs=configs)


# ---------------------------------------------------------------------------
# rolling-window prediction


def normalize_window(window, *rest):
    """Entrywise standardization by the mean and sd of ``window``.

    The same affine map is applied to every array in ``rest``.  Cells with
    zero sd are only centred.
    """
    mu = window.mean(axis=0)
    sd = window.std(axis=0, ddof=1) if window.shape[0] > 1 else np.ones_like(mu)
    sd = np.where(sd > 0, sd, 1.0)
    return tuple((x - mu) / sd for x in (window,) + rest)


def _rolling_fit_predict(method, pre, train_x, train_y, test_x, k1, k2, spec, seed):
    if method == "baseline_x":
        reg = RegressionData(train_y, None, train_x)
        fit = _tuned_fit(reg, spec, seed)
        return float(predict(fit, None, test_x)[0])
    mfm = fit_mfm(pre, train_x, k1, k2, u_mode=KRONECKER, demean=False)
    f_new, u_new = mfm.transform(test_x)
    if method == "factors_only":
        a = ols_coefficients(panel_to_rows(mfm.f_hat), train_y)
        return float((panel_to_rows(f_new) @ a)[0])
    if method == "idio_only":
        reg = RegressionData(train_y, None, mfm.u_hat)
        fit = _tuned_fit(reg, spec, seed)
        return float(predict(fit, None, u_new)[0])
    if method == "famar":
        reg = RegressionData(train_y, mfm.f_hat, mfm.u_hat)
        fit = _tuned_fit(reg, spec, seed)
        return float(predict(fit, f_new, u_new)[0])
    raise ValueError(f"unknown method {method!r}; expected one of {ROLLING_METHODS}")


@dataclass(frozen=True)
class RollingResult:
    method: str
    r2: float
    predictions: np.ndarray
    targets: np.ndarray
    benchmarks: np.ndarray


def out_of_sample_r2(y, y_hat, benchmark):
    """``1 - sum (y - y_hat)^2 / sum (y - benchmark)^2``."""
    y = np.asarray(y, dtype=float)
    den = np.sum((y - np.asarray(benchmark, dtype=float)) ** 2)
    if den == 0:
        return float("nan")
    return float(1.0 - np.sum((y - np.asarray(y_hat, dtype=float)) ** 2) / den)


def rolling_predict(panel, y, window, pretrain_len, k1, k2, method="famar", spec=None, seed=0):
    """One-step-ahead rolling-window prediction and its out-of-sample R^2.

    For each ``t >= window`` the samples ``t - window .. t - 1`` form the
    window: the first ``pretrain_len`` build the projections and the rest
    are the training set.  Covariates are standardized entrywise by the
    window mean and sd, ``y`` is centred by the training mean, which is also
    the benchmark prediction in the R^2.
    """
    panel = np.asarray(panel, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    total = panel.shape[0]
    if y.shape[0] != total:
        raise ValueError("panel and y have different lengths")
    if not 0 < pretrain_len < window:
        raise ValueError("need 0 < pretrain_len < window")
    if window >= total:
        raise ValueError(f"window {window} leaves no sample to predict out of {total}")
    spec = spec or RegressionSpec()
    preds, targets, bench = [], [], []
    for t in range(window, total):
        block = panel[t - window:t]
        xw, xt = normalize_window(block, panel[t:t + 1])
        pre, train_x = xw[:pretrain_len], xw[pretrain_len:]
        train_y = y[t - window + pretrain_len:t]
        ybar = train_y.mean()
        pred = _rolling_fit_predict(method, pre, train_x, train_y - ybar, xt, k1, k2, spec, seed + t)
        preds.append(pred + ybar)
        targets.append(y[t])
        bench.append(ybar)
    preds, targets, bench = map(np.asarray, (preds, targets, bench))
    return RollingResult(method, out_of_sample_r2(targets, preds, bench), preds, targets, bench)


# ---------------------------------------------------------------------------
# presets


def _sweep(base, name, values):
    return [replace(base, **{name: v}) for v in values]


SETTING1_P = (20, 30, 40, 50, 60, 70, 80, 90, 100)
SETTING2_N = (500, 1000, 1500, 2000, 2500, 3000, 3500, 4000, 4500, 5000)

PRESET_SWEEPS = {
    # preset -> (base config, swept field, default values)
    "setting1": (SimConfig(), "p", SETTING1_P),
    "setting2": (SimConfig(p1=80, p2=50, k1=2, k2=4), "n", SETTING2_N),
    "appendix-h1": (SimConfig(a_mode={"kind": IID_NORMAL, "mean": 1000.0, "sd": 1000.0}),
                    "p", SETTING1_P),
    "appendix-h2": (SimConfig(a_mode={"kind": IID_NORMAL, "mean": 1.0, "sd": 1.0, "dim_scaled": True}),
                    "p", SETTING1_P),
    "appendix-h3": (SimConfig(p1=70, p2=50, k1=2, k2=4,
                              a_mode={"kind": IID_NORMAL, "mean": 1000.0, "sd": 1000.0}),
                    "n", (500, 1000, 1500, 2000, 2500, 3000, 3500, 4000)),
}

NORMALITY_CONFIG = SimConfig(n=1000, n_pretrain=500, n_new=0, p1=20, p2=30, k1=3, k2=2,
                             rank_b=2, replications=2000, fixed_loadings=True)

PRESETS = ("normality",) + tuple(PRESET_SWEEPS)


def preset_grid(name, seed=0, reps=None, grid=None):
    """Configs for a sweep preset; ``grid`` overrides the swept values."""
    if name not in PRESET_SWEEPS:
        raise KeyError(f"unknown preset {name!r}; valid presets: {', '.join(PRESETS)}")
    base, swept, values = PRESET_SWEEPS[name]
    base = replace(base, seed=seed)
    if reps is not None:
        base = replace(base, replications=reps)
    values = tuple(grid) if grid is not None else values
    if swept == "p":
        return [replace(base, p1=int(v), p2=int(v)) for v in values]
    return _sweep(base, swept, [int(v) for v in values])


def rolling_series(cfg, length, replication=0):
    """A length-``length`` synthetic series of ``(X_t, y_t)`` from ``cfg``'s law."""
    rng = stream(cfg.seed, 0, replication)
    r, c, a, b = _draw_coefficients(cfg, rng)
    f, u, x = _draw_panel(cfg, r, c, length, rng)
    y = _response(a, b, f, u, cfg.noise_sd, rng)
    return x, y


def rolling_experiment(cfg, window, pretrain_len, n_test, methods=ROLLING_METHODS, spec=None,
                       replications=None, workers=None):
    """Out-of-sample R^2 per method and replication on synthetic series.

    Returns ``{method: array of R^2 over replications}``.
    """
    reps = cfg.replications if replications is None else replications
    payloads = [(cfg, window, pretrain_len, n_test, tuple(methods), spec, rep) for rep in range(reps)]
    outs = _map(_rolling_replication, payloads, workers)
    return {m: np.array([o[m] for o in outs]) for m in methods}


def _rolling_replication(cfg, window, pretrain_len, n_test, methods, spec, rep):
    x, y = rolling_series(cfg, window + n_test, rep)
    out = {}
    for m in methods:
        try:
            out[m] = rolling_predict(x, y, window, pretrain_len, cfg.k1, cfg.k2, m, spec, seed=rep).r2
        except EstimationError as exc:
            logger.warning("rolling replication %d %s: %s", rep, m, exc)
            out[m] = float("nan")
    return out
