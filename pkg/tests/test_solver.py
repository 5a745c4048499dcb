import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from famar.errors import ShapeError
from famar.linalg import nuclear_norm, panel_to_rows, svt, vec
from famar.solver import (
    RegressionData,
    SolverConfig,
    apgd_nuclear,
    cross_validate,
    default_lambda_grid,
    fit_baseline_nuclear,
    fit_path,
    fit_sparse,
    gradients,
    lambda_max_nuclear,
    lambda_max_sparse,
    objective,
    predict,
    residual,
)


def make_data(seed, n=200, k=(2, 2), p=(4, 3), noise=0.1, rank=1):
    rng = np.random.default_rng(seed)
    f = rng.standard_normal((n,) + k) if k else None
    u = rng.standard_normal((n,) + p)
    a = rng.normal(size=k) if k else np.zeros((0, 0))
    b = rng.normal(size=(p[0], rank)) @ rng.normal(size=(rank, p[1]))
    y = panel_to_rows(u) @ vec(b) + noise * rng.standard_normal(n)
    if k:
        y = y + panel_to_rows(f) @ vec(a)
    return RegressionData(y, f, u), a, b


def loop_objective(a, b, data, lam):
    total = 0.0
    for i in range(data.n):
        s = data.y[i]
        for j in range(a.shape[0]):
            for l in range(a.shape[1]):
                s -= a[j, l] * data.f_panel[i, j, l]
        for j in range(b.shape[0]):
            for l in range(b.shape[1]):
                s -= b[j, l] * data.u_panel[i, j, l]
        total += s * s
    return total / (2 * data.n) + lam * np.linalg.svd(b, compute_uv=False).sum()


def joint_ls(data):
    z = data.design
    theta = np.linalg.solve(z.T @ z, z.T @ data.y)
    return theta


class TestObjective:
    def test_exact_fit(self):
        data, a, b = make_data(0, noise=0.0)
        assert objective(a, b, data, 0.0) == pytest.approx(0.0, abs=1e-20)

    def test_null_model(self):
        data, a, b = make_data(1)
        val = objective(np.zeros_like(a), np.zeros_like(b), data, 3.0)
        assert val == pytest.approx(data.y @ data.y / (2 * data.n))

    def test_loop_oracle(self):
        data, a, b = make_data(2, n=15)
        rng = np.random.default_rng(0)
        a2, b2 = rng.normal(size=a.shape), rng.normal(size=b.shape)
        assert objective(a2, b2, data, 0.3) == pytest.approx(loop_objective(a2, b2, data, 0.3), rel=1e-12)


class TestGradients:
    def test_zero_at_exact_fit(self):
        data, a, b = make_data(3, noise=0.0)
        ga, gb = gradients(a, b, data)
        assert np.abs(ga).max() < 1e-12 and np.abs(gb).max() < 1e-12

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_finite_differences(self, seed):
        data, a, b = make_data(seed % 1000, n=30)
        rng = np.random.default_rng(seed)
        a0, b0 = rng.normal(size=a.shape), rng.normal(size=b.shape)
        da, db = rng.normal(size=a.shape), rng.normal(size=b.shape)
        ga, gb = gradients(a0, b0, data)
        h = 1e-6
        fd = (objective(a0 + h * da, b0 + h * db, data, 0.0) - objective(a0 - h * da, b0 - h * db, data, 0.0)) / (2 * h)
        exact = np.sum(ga * da) + np.sum(gb * db)
        assert fd == pytest.approx(exact, rel=1e-5, abs=1e-8)

    def test_scalar_case(self):
        data = RegressionData(np.array([2.0]), np.array([[[0.5]]]), np.array([[[3.0]]]))
        a, b = np.array([[1.0]]), np.array([[0.2]])
        ga, gb = gradients(a, b, data)
        r = 2.0 - 1.0 * 0.5 - 0.2 * 3.0
        assert gb[0, 0] == pytest.approx(-r * 3.0)
        assert ga[0, 0] == pytest.approx(-r * 0.5)


class TestNuclear:
    def test_lambda_max_gives_zero(self):
        data, _, _ = make_data(4)
        lam = lambda_max_nuclear(data)
        fit = apgd_nuclear(data, SolverConfig(lam=lam))
        assert np.all(fit.b_hat == 0) and fit.rank_b == 0
        ff = panel_to_rows(data.f_panel)
        a_ols = np.linalg.lstsq(ff, data.y, rcond=None)[0]
        np.testing.assert_allclose(vec(fit.a_hat), a_ols, rtol=1e-8)

    def test_null_threshold_from_ols_gradient(self):
        # twice the spectral norm of grad_B at (A_ols, 0) kills B
        data, _, _ = make_data(5)
        ff = panel_to_rows(data.f_panel)
        a_ols = np.linalg.lstsq(ff, data.y, rcond=None)[0].reshape(2, 2, order="F")
        _, gb = gradients(a_ols, np.zeros((4, 3)), data)
        fit = apgd_nuclear(data, SolverConfig(lam=2 * np.linalg.norm(gb, 2)))
        assert np.all(fit.b_hat == 0)
        np.testing.assert_allclose(fit.a_hat, a_ols, rtol=1e-8)

    def test_just_below_lambda_max_is_nonzero(self):
        data, _, _ = make_data(6)
        fit = apgd_nuclear(data, SolverConfig(lam=0.9 * lambda_max_nuclear(data)))
        assert fit.rank_b >= 1

    @pytest.mark.parametrize("seed", range(5))
    def test_normal_equations_oracle(self, seed):
        data, _, _ = make_data(seed, n=500, rank=2)
        fit = apgd_nuclear(data, SolverConfig(lam=0.0, epsilon=1e-10, max_iter=20000))
        theta = joint_ls(data)
        est = np.concatenate([vec(fit.a_hat), vec(fit.b_hat)])
        assert fit.converged
        assert np.linalg.norm(est - theta) / np.linalg.norm(theta) < 1e-5

    @pytest.mark.parametrize("frac", [0.01, 0.1, 0.5])
    def test_fixed_point_at_convergence(self, frac):
        data, _, _ = make_data(7, rank=2)
        eps = 1e-6
        fit = apgd_nuclear(data, SolverConfig(lam=frac * lambda_max_nuclear(data), epsilon=eps))
        assert fit.converged
        ga, gb = gradients(fit.a_hat, fit.b_hat, data)
        L = fit.lipschitz
        moved = svt(fit.b_hat - gb / L, fit.lam / L)
        assert np.linalg.norm(fit.b_hat - moved) <= 10 * eps
        assert np.linalg.norm(ga) <= 10 * eps * L

    def test_majorization_debug_mode(self):
        data, _, _ = make_data(8, rank=2)
        cfg = SolverConfig(lam=0.05 * lambda_max_nuclear(data), check_majorization=True)
        assert apgd_nuclear(data, cfg).converged

    def test_monotone_in_lambda(self):
        data, _, _ = make_data(9, rank=2, noise=0.5)
        grid = default_lambda_grid(lambda_max_nuclear(data), 12, 1e-3)
        norms = [nuclear_norm(f.b_hat) for f in fit_path(data, grid, config=SolverConfig(epsilon=1e-9))]
        # grid is decreasing, so norms must be nondecreasing
        assert np.all(np.diff(norms) >= -1e-6)

    def test_trace_length_and_objective(self):
        data, _, _ = make_data(10)
        lam = 0.1 * lambda_max_nuclear(data)
        fit = apgd_nuclear(data, SolverConfig(lam=lam))
        assert len(fit.objective_trace) == fit.iterations
        assert fit.objective == pytest.approx(objective(fit.a_hat, fit.b_hat, data, lam), rel=1e-10)

    def test_nonconvergence_is_reported(self):
        data, _, _ = make_data(11)
        fit = apgd_nuclear(data, SolverConfig(lam=0.01 * lambda_max_nuclear(data), max_iter=2))
        assert not fit.converged and fit.iterations == 2

    def test_profiled_matches_joint_objective(self):
        # the profiled solution is stationary for the joint problem: compare
        # with a long unprofiled-style check through the objective
        data, _, _ = make_data(12, rank=2)
        lam = 0.05 * lambda_max_nuclear(data)
        fit = apgd_nuclear(data, SolverConfig(lam=lam, epsilon=1e-10, max_iter=20000))
        base = objective(fit.a_hat, fit.b_hat, data, lam)
        rng = np.random.default_rng(0)
        for _ in range(20):
            da, db = rng.normal(size=fit.a_hat.shape), rng.normal(size=fit.b_hat.shape)
            assert objective(fit.a_hat + 1e-3 * da, fit.b_hat + 1e-3 * db, data, lam) >= base - 1e-12

    def test_bad_initial_shapes(self):
        data, _, _ = make_data(13)
        with pytest.raises(ShapeError):
            apgd_nuclear(data, SolverConfig(b0=np.zeros((2, 2))))

    @pytest.mark.parametrize("kw", [{"lam": -1.0}, {"gamma": 1.0}, {"epsilon": 0.0}, {"l0": 0.0}, {"max_iter": 0}])
    def test_config_validation(self, kw):
        with pytest.raises(ValueError):
            SolverConfig(**kw)


class TestBaseline:
    def test_same_as_empty_factor_block(self):
        data, _, _ = make_data(14, k=None)
        cfg = SolverConfig(lam=0.1 * lambda_max_nuclear(data))
        a = fit_baseline_nuclear(data.y, data.u_panel, cfg)
        b = apgd_nuclear(RegressionData(data.y, None, data.u_panel), cfg)
        np.testing.assert_array_equal(a.b_hat, b.b_hat)
        assert a.a_hat.size == 0

    def test_large_lambda_zero(self):
        data, _, _ = make_data(15, k=None)
        fit = fit_baseline_nuclear(data.y, data.u_panel, SolverConfig(lam=lambda_max_nuclear(data)))
        assert np.all(fit.b_hat == 0)


class TestSparse:
    def test_null_threshold(self):
        data, _, _ = make_data(16)
        fit = fit_sparse(data, lambda_max_sparse(data) * (1 + 1e-9))
        assert np.all(fit.b_hat == 0) and fit.rank_b == 0

    def test_least_squares_oracle(self):
        # with lam = 0 both steps are least squares; on an orthogonalized
        # design this equals the joint fit
        data, _, _ = make_data(17, n=400)
        ff, uu = panel_to_rows(data.f_panel), panel_to_rows(data.u_panel)
        uu = uu - ff @ np.linalg.lstsq(ff, uu, rcond=None)[0]
        u_perp = uu.reshape(400, 3, 4).transpose(0, 2, 1)
        d2 = RegressionData(data.y, data.f_panel, u_perp)
        fit = fit_sparse(d2, 0.0, SolverConfig(epsilon=1e-11, max_iter=50000))
        theta = joint_ls(d2)
        est = np.concatenate([vec(fit.a_hat), vec(fit.b_hat)])
        assert np.linalg.norm(est - theta) / np.linalg.norm(theta) < 1e-5

    def test_duality_gap_met(self):
        data, _, _ = make_data(18)
        lam = 0.1 * lambda_max_sparse(data)
        fit = fit_sparse(data, lam)
        assert fit.converged
        ff = panel_to_rows(data.f_panel)
        y_t = data.y - ff @ np.linalg.lstsq(ff, data.y, rcond=None)[0]
        z = panel_to_rows(data.u_panel)
        r = y_t - z @ vec(fit.b_hat)
        primal = r @ r / (2 * data.n) + lam * np.abs(fit.b_hat).sum()
        nu = r * min(1.0, data.n * lam / np.abs(z.T @ r).max())
        dual = (nu @ y_t - 0.5 * nu @ nu) / data.n
        assert primal - dual <= 1e-7 * max(1.0, primal)

    def test_agrees_with_nuclear_on_rank_one_one_sparse(self):
        rng = np.random.default_rng(19)
        n = 600
        u = rng.standard_normal((n, 5, 4))
        f = rng.standard_normal((n, 1, 1))
        b = np.zeros((5, 4))
        b[2, 1] = 3.0
        y = 0.5 * f[:, 0, 0] + 3.0 * u[:, 2, 1] + 0.1 * rng.standard_normal(n)
        data = RegressionData(y, f, u)
        sp = fit_sparse(data, 0.2 * lambda_max_sparse(data))
        nu = apgd_nuclear(data, SolverConfig(lam=0.2 * lambda_max_nuclear(data)))
        assert set(np.flatnonzero(sp.b_hat)) == {int(np.flatnonzero(b.ravel())[0])}
        assert nu.rank_b == 1
        np.testing.assert_array_equal(np.unravel_index(np.argmax(np.abs(nu.b_hat)), b.shape), (2, 1))


class TestPredict:
    def test_zero_panels(self):
        data, _, _ = make_data(20)
        fit = apgd_nuclear(data, SolverConfig(lam=0.1 * lambda_max_nuclear(data)))
        np.testing.assert_array_equal(predict(fit, np.zeros((3, 2, 2)), np.zeros((3, 4, 3))), np.zeros(3))

    def test_training_residuals(self):
        data, _, _ = make_data(21)
        lam = 0.1 * lambda_max_nuclear(data)
        fit = apgd_nuclear(data, SolverConfig(lam=lam))
        r = data.y - predict(fit, data.f_panel, data.u_panel)
        np.testing.assert_allclose(r, residual(fit.a_hat, fit.b_hat, data), atol=1e-12)
        val = r @ r / (2 * data.n) + lam * nuclear_norm(fit.b_hat)
        assert val == pytest.approx(fit.objective, rel=1e-10)

    def test_noiseless_oracle(self):
        data, a, b = make_data(22, n=400, noise=0.0, rank=2)
        fit = apgd_nuclear(data, SolverConfig(lam=0.0, epsilon=1e-12, max_iter=20000))
        new, _, _ = make_data(23, n=50, noise=0.0)
        truth = panel_to_rows(new.f_panel) @ vec(a) + panel_to_rows(new.u_panel) @ vec(b)
        np.testing.assert_allclose(predict(fit, new.f_panel, new.u_panel), truth, rtol=1e-6, atol=1e-8)

    def test_shape_mismatch(self):
        data, _, _ = make_data(24)
        fit = apgd_nuclear(data, SolverConfig(lam=1.0))
        with pytest.raises(ShapeError):
            predict(fit, data.f_panel, np.zeros((2, 3, 3)))


class TestCrossValidate:
    def test_single_lambda(self):
        data, _, _ = make_data(25)
        lam, _ = cross_validate(data, [0.37])
        assert lam == 0.37

    def test_pure_noise_prefers_largest(self):
        wins = 0
        for seed in range(20):
            rng = np.random.default_rng(1000 + seed)
            u = rng.standard_normal((80, 4, 3))
            f = rng.standard_normal((80, 1, 1))
            data = RegressionData(rng.standard_normal(80), f, u)
            grid = default_lambda_grid(lambda_max_nuclear(data), 5, 1e-2)
            lam, _ = cross_validate(data, grid, folds=5, seed=seed)
            wins += lam == grid.max()
        assert wins >= 16

    def test_deterministic(self):
        data, _, _ = make_data(26, noise=1.0)
        grid = default_lambda_grid(lambda_max_nuclear(data), 6, 1e-3)
        a = cross_validate(data, grid, folds=4, seed=5)
        b = cross_validate(data, grid, folds=4, seed=5)
        assert a[0] == b[0]
        np.testing.assert_array_equal(a[1], b[1])

    def test_signal_selects_interior(self):
        data, _, _ = make_data(27, n=300, noise=0.5, rank=1)
        grid = default_lambda_grid(lambda_max_nuclear(data), 8, 1e-3)
        lam, curve = cross_validate(data, grid, folds=5, seed=0)
        assert lam < grid.max()
        assert curve[np.argmax(grid == lam)] == curve.min()

    def test_fold_errors(self):
        data, _, _ = make_data(28, n=5)
        with pytest.raises(ValueError):
            cross_validate(data, [1.0, 2.0], folds=1)
        with pytest.raises(ValueError):
            cross_validate(data, [1.0, 2.0], folds=6)
        with pytest.raises(ValueError):
            cross_validate(data, [], folds=2)
