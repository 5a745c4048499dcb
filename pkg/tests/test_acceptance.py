"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line (see ``conftest.record``) before
asserting, so the summary at the end of the run lists every criterion even
when some fail.  Run only these with ``pytest -m acceptance -s``.
"""

import dataclasses
import itertools
import os
import subprocess
import sys

import numpy as np
import pytest

from conftest import record
from famar.linalg import (
    block_sum_matrix,
    kron,
    numerical_rank,
    shuffle_matrix,
    svt,
    vec,
)
from famar.mfm import PROJECTION, fit_mfm
from famar.sim import (
    IID_NORMAL,
    NORMALITY_CONFIG,
    RegressionSpec,
    SimConfig,
    normality_experiment,
    preset_grid,
    rolling_experiment,
    run_setting,
    stream,
)
from famar.solver import (
    RegressionData,
    SolverConfig,
    apgd_nuclear,
    fit_sparse,
    gradients,
    lambda_max_nuclear,
)

pytestmark = pytest.mark.acceptance

# cross validation used wherever lambda is tuned (coarser than the library default)
CV_SPEC = RegressionSpec(folds=3, grid_size=10, grid_ratio=1e-4, cv_epsilon=1e-4)
REPS = 50


@pytest.fixture(scope="module")
def setting1():
    """Factor-model metrics at every Setting I grid point."""
    return run_setting(preset_grid("setting1", seed=0, reps=REPS))


def test_01_loading_normality():
    cfg = dataclasses.replace(NORMALITY_CONFIG, seed=1)
    rate = normality_experiment(cfg).pass_rate(0.01)
    entries = cfg.p1 * cfg.k1 + cfg.p2 * cfg.k2
    assert record(1, rate >= 0.95, f"KS pass rate {rate:.4f} over {entries} entries (need >= 0.95)")


def test_02_factor_error_rate(setting1):
    ps = [c.p1 for c in setting1.configs]
    sel = [ps.index(p) for p in (20, 40, 80)]
    med = np.array([setting1.median(i, "famar", "rel_err_f") for i in sel])
    slope = np.polyfit(np.log([20, 40, 80]), np.log(med), 1)[0]
    ok = -1.4 <= slope <= -0.6 and np.all(np.diff(med) < 0)
    assert record(2, ok, f"slope {slope:.3f} (need [-1.4, -0.6]), medians {np.round(med, 5).tolist()}")


def test_03_pretrain_size_invariance():
    res = run_setting(preset_grid("setting2", seed=0, reps=REPS, grid=(500, 1000, 2000)))
    f = np.array([res.median(i, "famar", "rel_err_f") for i in range(3)])
    u = np.array([res.median(i, "famar", "rel_err_u") for i in range(3)])
    spread = (f.max() - f.min()) / f.min()
    ok = spread < 0.2 and np.all(np.diff(u) < 0)
    assert record(3, ok, f"rel_err_f spread {spread:.3f} (need < 0.2), rel_err_u medians {np.round(u, 5).tolist()}")


def test_04_block_averaging(setting1):
    npts = len(setting1.configs)
    avg = np.array([setting1.median(i, "famar", "rel_err_u") for i in range(npts)])
    raw = np.array([setting1.median(i, "famar", "rel_err_u_noavg") for i in range(npts)])
    strict = int(np.sum(avg < raw))
    ok = np.all(avg <= raw) and strict >= 2 * npts / 3
    assert record(4, ok, f"averaged <= raw at {int(np.sum(avg <= raw))}/{npts} points, strictly at {strict}")


@pytest.mark.parametrize("preset,value", [("setting1", 40), ("setting2", 2000)])
def test_05_famar_vs_baseline(preset, value):
    cfg = preset_grid(preset, seed=0, reps=REPS, grid=(value,))
    res = run_setting(cfg, CV_SPEC)
    b_fam, b_base = res.median(0, "famar", "rel_err_b"), res.median(0, "baseline", "rel_err_b")
    r_fam, r_base = res.median(0, "famar", "rank_b"), res.median(0, "baseline", "rank_b")
    y_fam, y_orc = res.median(0, "famar", "rel_err_y_new"), res.median(0, "oracle", "rel_err_y_new")
    checks = {
        "B error": b_fam <= 0.8 * b_base,
        "rank": r_fam <= r_base,
        "y error": y_fam <= 1.1 * y_orc,
    }
    detail = (f"{preset} {value}: B ratio {b_fam / b_base:.3f} (<= 0.8), rank {r_fam:g} vs {r_base:g}, "
              f"y ratio {y_fam / y_orc:.3f} (<= 1.1); failing: {[k for k, v in checks.items() if not v]}")
    number = "5a" if preset == "setting1" else "5b"
    assert record(number, all(checks.values()), detail)


def _solver_instance(seed, n=300, p=(6, 5), k=(2, 2), rank=2, noise=0.3):
    rng = np.random.default_rng(seed)
    f = rng.standard_normal((n,) + k)
    u = rng.standard_normal((n,) + p)
    b = rng.normal(size=(p[0], rank)) @ rng.normal(size=(rank, p[1]))
    y = (np.einsum("ijk,jk->i", f, rng.normal(size=k)) + np.einsum("ijk,jk->i", u, b)
         + noise * rng.standard_normal(n))
    return RegressionData(y, f, u)


def test_06_solver_correctness():
    eps = 1e-6
    results = {}

    errs = []
    for seed in range(5):
        data = _solver_instance(seed)
        z = data.design
        theta = np.linalg.solve(z.T @ z, z.T @ data.y)
        fit = apgd_nuclear(data, SolverConfig(lam=0.0, epsilon=1e-10, max_iter=20000))
        est = np.concatenate([vec(fit.a_hat), vec(fit.b_hat)])
        errs.append(np.linalg.norm(est - theta) / np.linalg.norm(theta))
    results["a"] = max(errs) <= 1e-5

    zero = []
    for seed in range(5):
        data = _solver_instance(seed)
        zero.append(np.all(apgd_nuclear(data, SolverConfig(lam=lambda_max_nuclear(data))).b_hat == 0))
    results["b"] = all(zero)

    worst = 0.0
    for seed, frac in itertools.product(range(5), (0.01, 0.1, 0.5)):
        data = _solver_instance(seed)
        fit = apgd_nuclear(data, SolverConfig(lam=frac * lambda_max_nuclear(data), epsilon=eps))
        assert fit.converged
        _, gb = gradients(fit.a_hat, fit.b_hat, data)
        moved = svt(fit.b_hat - gb / fit.lipschitz, fit.lam / fit.lipschitz)
        worst = max(worst, np.linalg.norm(fit.b_hat - moved))
    results["c"] = worst <= 10 * eps

    trends = []
    for seed in range(20):
        data = _solver_instance(100 + seed, n=200, p=(8, 8), noise=1.0)
        lam = 0.05 * lambda_max_nuclear(data)
        fit = apgd_nuclear(data, SolverConfig(lam=lam, epsilon=1e-8))
        best = apgd_nuclear(data, SolverConfig(lam=lam, epsilon=1e-13, max_iter=50000)).objective
        gap = np.maximum(fit.objective_trace - min(best, fit.objective_trace.min()), 0.0)
        scaled = gap * np.arange(2, gap.size + 2) ** 2
        third = max(1, scaled.size // 3)
        early, late = np.median(scaled[:third]), np.median(scaled[-third:])
        trends.append(late <= 2 * early)
    results["d"] = all(trends)
    detail = (f"normal equations {max(errs):.2e}; null B {all(zero)}; fixed point {worst:.2e}; "
              f"O(1/k^2) envelope {sum(trends)}/20")
    assert record(6, all(results.values()), detail)


def test_07_kernel_oracles():
    rng = np.random.default_rng(7)
    ok = []
    c, r = rng.normal(size=(3, 2)), rng.normal(size=(4, 2))
    brute = np.zeros((12, 4))
    for i, j, a, b in itertools.product(range(3), range(2), range(4), range(2)):
        brute[i * 4 + a, j * 2 + b] = c[i, j] * r[a, b]
    ok.append(np.array_equal(kron(c, r), brute))
    a, x, b = rng.normal(size=(2, 3)), rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
    ok.append(np.allclose(vec(a @ x @ b), kron(b.T, a) @ vec(x), atol=1e-10, rtol=0))
    m = [rng.normal(size=s) for s in ((2, 3), (4, 2), (3, 2), (2, 5))]
    ok.append(np.allclose(kron(m[0], m[1]) @ kron(m[2], m[3]), kron(m[0] @ m[2], m[1] @ m[3]), atol=1e-10))
    e = block_sum_matrix(3, 4)
    ok.append(np.array_equal(e @ e.T, 4 * np.eye(3)))
    s = shuffle_matrix(3, 5)
    ok.append(np.array_equal(s @ s.T, np.eye(15)) and np.all(s.sum(axis=0) == 1))
    ok.append(np.array_equal(shuffle_matrix(2, 2), np.eye(4)[[0, 2, 1, 3]]))
    cm = rng.normal(size=(4, 3))
    uu, sv, vt = np.linalg.svd(cm, full_matrices=False)
    ok.append(np.allclose(svt(cm, 0.7), (uu * np.maximum(sv - 0.7, 0)) @ vt, atol=1e-12))
    c2 = rng.uniform(-1, 1, size=(2, 2))
    grid = np.linspace(-1.2, 1.2, 41)
    z = np.array(list(itertools.product(grid, repeat=4))).reshape(-1, 2, 2)
    obj = 0.5 * ((z - c2) ** 2).sum(axis=(1, 2)) + 0.4 * np.linalg.svd(z, compute_uv=False).sum(axis=1)
    zs = svt(c2, 0.4)
    f_svt = 0.5 * np.sum((zs - c2) ** 2) + 0.4 * np.linalg.svd(zs, compute_uv=False).sum()
    ok.append(f_svt <= obj.min() + 1e-12 and obj.min() - f_svt < 1e-2)
    ok.append(numerical_rank(svt(cm, sv[1] + 1e-9)) == 1)
    assert record(7, all(ok), f"{sum(ok)}/{len(ok)} kernel identities")


def _sparse_run(seed, p=15, k=2, n=2000, n_pre=500, sigma=0.1, idio=0.2):
    rng = stream(123, 0, seed)
    r, c = rng.normal(2, 2, (p, k)), rng.normal(2, 2, (p, k))

    def draw(m):
        f = rng.standard_normal((m, k, k))
        u = idio * rng.standard_normal((m, p, p))
        return f, u, r @ f @ c.T + u

    _, _, x_pre = draw(n_pre)
    f, u, x = draw(n)
    b = np.zeros((p, p))
    support = rng.choice(p * p, 5, replace=False)
    b.flat[support] = rng.choice([-1, 1], 5) * rng.uniform(1, 2, 5)
    a = rng.normal(0, 1, (k, k))
    y = np.einsum("ij,nij->n", a, f) + np.einsum("ij,nij->n", b, u) + sigma * rng.standard_normal(n)
    mfm = fit_mfm(x_pre, x, k, k, u_mode=PROJECTION, demean=False)
    # noise sd times idiosyncratic sd times the usual sqrt(2 log(dim) / n) rate
    lam = 1.5 * 2 * sigma * idio * np.sqrt(2 * np.log(2 * p * p) / n)
    fit = fit_sparse(RegressionData(y, mfm.f_hat, mfm.u_hat), lam)
    est, true = set(np.flatnonzero(fit.b_hat.ravel())), set(support.tolist())
    return est <= true, true <= est


def test_08_sparse_support():
    runs = [_sparse_run(seed) for seed in range(50)]
    subset = np.mean([r[0] for r in runs])
    full = np.mean([r[1] for r in runs])
    assert record(8, subset >= 0.9 and full >= 0.8,
                  f"support subset {subset:.2f} (>= 0.9), all signals found {full:.2f} (>= 0.8)")


ROLLING_CFG = SimConfig(p1=10, p2=14, k1=2, k2=2, rank_b=1, idio_sd=1.0, noise_sd=1.0, b_dist=(0.0, 0.2),
                        a_mode={"kind": IID_NORMAL, "mean": 0.0, "sd": 1.0}, seed=0)
ROLLING_WINDOW, ROLLING_PRETRAIN, ROLLING_TEST = 68, 32, 20


def test_09_rolling_ordering():
    res = rolling_experiment(ROLLING_CFG, ROLLING_WINDOW, ROLLING_PRETRAIN, ROLLING_TEST,
                             spec=CV_SPEC, replications=20)
    med = {m: float(np.nanmedian(v)) for m, v in res.items()}
    ok = med["famar"] >= med["factors_only"] > med["idio_only"] > med["baseline_x"]
    assert record(9, ok, "median R2 " + ", ".join(f"{m} {v:.3f}" for m, v in med.items()))


def _simulate(out, threads):
    env = dict(os.environ, FAMAR_THREADS=str(threads))
    cmd = [sys.executable, "-m", "famar.cli", "simulate", "--preset", "setting1", "--seed", "7",
           "--reps", "2", "--grid", "20,30", "--folds", "3", "--lambda-grid", "auto:5:1e-2",
           "--cv-epsilon", "1e-4", "--out", str(out)]
    subprocess.run(cmd, env=env, check=True, capture_output=True)
    return (out / "results.csv").read_bytes()


def test_10_determinism(tmp_path):
    first = _simulate(tmp_path / "a", 1)
    again = _simulate(tmp_path / "b", 1)
    wide = _simulate(tmp_path / "c", 8)
    ok = first == again == wide
    assert record(10, ok, f"{len(first)} bytes; repeat identical {first == again}, 1 vs 8 workers identical {first == wide}")
