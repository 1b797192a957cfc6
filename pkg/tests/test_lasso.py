import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adml.errors import EstimationError
from adml.lasso import (
    CvPlan,
    coordinate_descent,
    cross_validate,
    default_lambda_grid,
    lambda_max,
    relaxed_refit,
    solve_gram,
    solve_wls,
)


def orthonormal_design(rng, n, p):
    """Mean-zero columns with (1/n) X'X = I, so the solver's internal
    standardization is the identity and soft-thresholding is exact."""
    M = rng.standard_normal((n, p))
    M -= M.mean(axis=0)
    Q, _ = np.linalg.qr(M)
    return Q * np.sqrt(n)


def soft(z, t):
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


def kkt_violation(X, y, fit, lam, pw=None, w=None, fit_intercept=True):
    """Worst stationarity violation in the units of lam (y-scale)."""
    X = np.asarray(X, float)
    n, p = X.shape
    pw = np.ones(p) if pw is None else np.asarray(pw, float)
    w = np.ones(n) if w is None else np.asarray(w, float)
    r = y - fit.predict(X)
    Xc = X - (w @ X) / w.sum() if fit_intercept else X
    s = np.sqrt((w @ (Xc * Xc)) / n)
    corr = (Xc * w[:, None]).T @ r / n
    worst = 0.0
    for j in range(p):
        if s[j] <= 1e-12:
            continue
        c = corr[j] / s[j]
        thr = lam * pw[j]
        if fit.coef[j] > 0:
            v = abs(c - thr)
        elif fit.coef[j] < 0:
            v = abs(c + thr)
        elif thr > 0:
            v = max(0.0, abs(c) - thr)
        else:
            v = abs(c)
        worst = max(worst, v)
    return worst


def objective(X, y, fit, lam, pw=None, w=None):
    n, p = X.shape
    pw = np.ones(p) if pw is None else np.asarray(pw, float)
    w = np.ones(n) if w is None else np.asarray(w, float)
    m = (w @ X) / w.sum()
    s = np.sqrt((w @ (X - m) ** 2) / n)
    r = y - fit.predict(X)
    return (w @ r**2) / (2 * n) + lam * float(pw * s @ np.abs(fit.coef))


class TestCoordinateDescent:
    def test_orthonormal_soft_threshold(self, rng):
        for _ in range(5):
            X = orthonormal_design(rng, 80, 6)
            y = 1.0 + 2.0 * rng.standard_normal(80)
            z = X.T @ y / 80
            lam = 0.5 * np.median(np.abs(z))
            fit = coordinate_descent(X, y, lam)
            assert np.max(np.abs(fit.coef - soft(z, lam))) < 1e-6
            assert fit.intercept == pytest.approx(y.mean(), abs=1e-10)
            assert fit.converged and fit.kkt_residual <= 1e-8

    def test_lam_zero_matches_normal_equations(self, rng):
        X = rng.standard_normal((60, 5))
        y = X @ rng.standard_normal(5) + rng.standard_normal(60)
        fit = coordinate_descent(X, y, 0.0)
        beta, *_ = np.linalg.lstsq(np.column_stack([np.ones(60), X]), y, rcond=None)
        assert fit.intercept == pytest.approx(beta[0], abs=1e-6)
        assert np.max(np.abs(fit.coef - beta[1:])) < 1e-6

    def test_full_shrinkage_at_lambda_max(self, rng):
        X = rng.standard_normal((50, 4))
        y = X @ np.array([1.0, -2.0, 0.0, 0.5]) + rng.standard_normal(50)
        lmax = lambda_max(X, y)
        fit = coordinate_descent(X, y, lmax)
        assert np.array_equal(fit.coef, np.zeros(4))
        assert fit.intercept == pytest.approx(y.mean())
        below = coordinate_descent(X, y, 0.99 * lmax)
        assert np.any(below.coef != 0.0)

    def test_full_shrinkage_weighted_intercept(self, rng):
        X = rng.standard_normal((40, 3))
        y = rng.standard_normal(40)
        w = rng.uniform(0.5, 2.0, size=40)
        lmax = lambda_max(X, y, obs_weights=w)
        fit = coordinate_descent(X, y, lmax, obs_weights=w)
        assert np.array_equal(fit.coef, np.zeros(3))
        assert fit.intercept == pytest.approx(w @ y / w.sum())

    def test_unpenalized_columns_stay_active(self, rng):
        X = rng.standard_normal((50, 3))
        y = 2.0 * X[:, 0] + rng.standard_normal(50)
        pw = np.array([0.0, 1.0, 1.0])
        lmax = lambda_max(X, y, penalty_weights=pw)
        fit = coordinate_descent(X, y, 2 * lmax, penalty_weights=pw)
        assert fit.coef[0] != 0.0
        assert np.array_equal(fit.coef[1:], np.zeros(2))
        assert 0 in fit.support

    def test_warm_start_matches_cold_start(self, rng):
        X = rng.standard_normal((60, 8))
        y = X[:, 0] - X[:, 3] + 0.3 * rng.standard_normal(60)
        grid = default_lambda_grid(lambda_max(X, y), size=8, min_ratio=1e-3)
        warm = None
        for lam in grid:
            hot = coordinate_descent(X, y, lam, warm_start=warm)
            cold = coordinate_descent(X, y, lam)
            assert np.max(np.abs(hot.coef - cold.coef)) <= 1e-7
            warm = hot.coef

    def test_objective_not_worse_than_trivial_fit(self, rng):
        X = rng.standard_normal((50, 6))
        y = X @ rng.standard_normal(6) + rng.standard_normal(50)
        lam = 0.3 * lambda_max(X, y)
        fit = coordinate_descent(X, y, lam)
        trivial = coordinate_descent(X, y, 10 * lambda_max(X, y))
        assert objective(X, y, fit, lam) <= objective(X, y, trivial, lam) + 1e-12

    def test_constant_column_gets_zero_coefficient(self, rng):
        X = np.column_stack([np.ones(30), rng.standard_normal(30)])
        y = X[:, 1] + rng.standard_normal(30)
        fit = coordinate_descent(X, y, 0.01)
        assert fit.coef[0] == 0.0

    def test_constant_response(self, rng):
        X = rng.standard_normal((20, 3))
        fit = coordinate_descent(X, np.full(20, 2.5), 0.1)
        assert np.array_equal(fit.coef, np.zeros(3))
        assert fit.intercept == pytest.approx(2.5)

    def test_nonconvergence_raises(self, rng):
        X = rng.standard_normal((40, 5))
        y = X @ rng.standard_normal(5) + rng.standard_normal(40)
        with pytest.raises(EstimationError, match="did not converge"):
            coordinate_descent(
                X, y, 0.5 * lambda_max(X, y), max_sweeps=0, kkt_tol=0.0
            )

    def test_cold_fit_near_grid_floor_on_dense_hinge_design(self):
        # 50 knots per covariate at n=1000 give near-duplicate columns whose
        # support Gram is numerically singular; a cold fit deep in the
        # penalty path must still reach the KKT target.
        from adml.basis import BasisSpec, build_additive_basis, expand
        from adml.nuisance import (
            COVARIATE_BLOCK,
            TREATMENT_BLOCK,
            _outcome_penalties,
        )
        from adml.simulation import DgpSpec, sample_dgp

        data = sample_dgp(DgpSpec(gamma=0.5), n=1000, seed=7)
        cov_spec = build_additive_basis(data.W, 50, block=COVARIATE_BLOCK)
        trt_spec = BasisSpec(
            knots=cov_spec.knots, block=TREATMENT_BLOCK, include_intercept=True
        )
        Xc = expand(cov_spec, data.W).X
        Xt = expand(trt_spec, data.W, data.A).X
        X = np.hstack([Xc, Xt])
        pw = _outcome_penalties(Xc.shape[1], Xt.shape[1], 2.0)
        lam = 0.0036 * lambda_max(X, data.Y, penalty_weights=pw)
        fit = coordinate_descent(X, data.Y, lam, penalty_weights=pw)
        assert fit.converged
        assert fit.kkt_residual <= 1e-8 * max(1.0, np.std(data.Y))
        assert kkt_violation(X, data.Y, fit, lam, pw=pw) <= 1e-8 * max(
            1.0, np.std(data.Y)
        )

    @pytest.mark.parametrize(
        "kwargs,match",
        [
            (dict(lam=-0.1), "nonnegative"),
            (dict(lam=0.1, penalty_weights=np.full(3, -1.0)), "penalty weights"),
            (dict(lam=0.1, obs_weights=np.full(9, -1.0)), "observation weights"),
        ],
    )
    def test_input_validation(self, rng, kwargs, match):
        X = rng.standard_normal((9, 3))
        y = rng.standard_normal(9)
        lam = kwargs.pop("lam")
        with pytest.raises(ValueError, match=match):
            coordinate_descent(X, y, lam, **kwargs)

    def test_non_finite_rejected(self, rng):
        X = rng.standard_normal((9, 3))
        X[0, 0] = np.nan
        with pytest.raises(ValueError, match="finite"):
            coordinate_descent(X, np.zeros(9), 0.1)


@settings(max_examples=25, deadline=None)
@given(
    n=st.integers(12, 60),
    p=st.integers(1, 10),
    lam_frac=st.floats(0.0, 1.2),
    free=st.booleans(),
    weighted=st.booleans(),
    seed=st.integers(0, 2**31),
)
def test_kkt_holds_on_random_problems(n, p, lam_frac, free, weighted, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    y = X @ rng.standard_normal(p) + rng.standard_normal(n)
    pw = np.ones(p)
    if free:
        pw[rng.integers(p)] = 0.0
    w = rng.uniform(0.2, 2.0, size=n) if weighted else None
    lam = lam_frac * lambda_max(X, y, penalty_weights=pw, obs_weights=w)
    fit = coordinate_descent(X, y, lam, penalty_weights=pw, obs_weights=w)
    scale = max(1.0, float(np.std(y)))
    assert fit.kkt_residual <= 1e-8 * scale
    assert kkt_violation(X, y, fit, lam, pw, w) <= 1e-8 * scale
    assert set(np.flatnonzero(fit.coef)) <= set(fit.support)


class TestCrossValidate:
    def test_singleton_grid_returned(self, rng):
        X = rng.standard_normal((30, 4))
        y = rng.standard_normal(30)
        grid = np.array([0.7 * lambda_max(X, y)])
        cv = cross_validate(X, y, grid=grid, n_folds=3)
        assert cv.best_lambda == grid[0]
        assert cv.cv_curve.shape == (1,)

    def test_noiseless_design_prefers_small_lambda(self, rng):
        X = rng.standard_normal((50, 2))
        y = 1.0 + 2.0 * X[:, 0] - X[:, 1]
        lmax = lambda_max(X, y)
        cv = cross_validate(X, y, grid=np.array([lmax, 1e-8 * lmax]), n_folds=5)
        assert cv.best_lambda == 1e-8 * lmax
        assert cv.cv_curve[1] < cv.cv_curve[0]

    def test_tie_broken_toward_larger_lambda(self, rng):
        X = rng.standard_normal((30, 3))
        y = X @ rng.standard_normal(3) + rng.standard_normal(30)
        lmax = lambda_max(X, y)
        # both grid points exceed lambda_max, so the curves tie exactly
        cv = cross_validate(X, y, grid=np.array([2.0 * lmax, 1.5 * lmax]), n_folds=3)
        assert cv.best_index == 0
        assert cv.cv_curve[0] == cv.cv_curve[1]

    def test_row_permutation_invariance(self, rng):
        X = rng.standard_normal((40, 5))
        y = X[:, 0] + rng.standard_normal(40)
        cv = cross_validate(X, y, n_folds=4, seed=9, grid_size=20)
        perm = rng.permutation(40)
        cv_p = cross_validate(X[perm], y[perm], n_folds=4, seed=9, grid_size=20)
        assert cv.best_index == cv_p.best_index
        assert np.allclose(cv.cv_curve, cv_p.cv_curve, rtol=0, atol=1e-12)

    def test_default_grid_spans_lambda_max(self, rng):
        X = rng.standard_normal((30, 4))
        y = X[:, 1] + rng.standard_normal(30)
        cv = cross_validate(X, y, n_folds=3, grid_size=10, min_ratio=1e-2)
        lmax = lambda_max(X, y)
        assert cv.plan.grid[0] == pytest.approx(lmax)
        assert cv.plan.grid[-1] == pytest.approx(1e-2 * lmax)

    def test_too_many_folds(self, rng):
        X = rng.standard_normal((5, 2))
        with pytest.raises(ValueError, match="empty fold"):
            cross_validate(X, rng.standard_normal(5), n_folds=6)

    def test_too_few_folds(self, rng):
        X = rng.standard_normal((5, 2))
        with pytest.raises(ValueError, match="at least 2"):
            cross_validate(X, rng.standard_normal(5), n_folds=1)

    def test_increasing_grid_rejected(self, rng):
        X = rng.standard_normal((10, 2))
        with pytest.raises(ValueError, match="strictly decreasing"):
            cross_validate(
                X, rng.standard_normal(10), grid=np.array([0.1, 0.2]), n_folds=2
            )

    def test_fold_ids_partition(self, rng):
        X = rng.standard_normal((23, 3))
        cv = cross_validate(X, rng.standard_normal(23), n_folds=4, grid_size=5)
        counts = np.bincount(cv.plan.fold_ids, minlength=4)
        assert counts.sum() == 23 and counts.min() >= 5


class TestCvPlan:
    def test_validates_partition_and_grid(self):
        ids = np.array([0, 0, 1, 1])
        CvPlan(n_folds=2, seed=0, fold_ids=ids, grid=np.array([1.0, 0.5]))
        with pytest.raises(ValueError, match="partition"):
            CvPlan(n_folds=3, seed=0, fold_ids=ids, grid=np.array([1.0]))
        with pytest.raises(ValueError, match="strictly decreasing"):
            CvPlan(n_folds=2, seed=0, fold_ids=ids, grid=np.array([0.5, 1.0]))


class TestRelaxedRefit:
    def test_full_support_is_ols(self, rng):
        X = rng.standard_normal((40, 3))
        y = X @ np.array([1.0, 0.5, -1.0]) + rng.standard_normal(40)
        fit = relaxed_refit(X, y, np.arange(3))
        beta, *_ = np.linalg.lstsq(np.column_stack([np.ones(40), X]), y, rcond=None)
        assert fit.intercept == pytest.approx(beta[0], abs=1e-8)
        assert np.allclose(fit.coef, beta[1:], atol=1e-8)

    def test_empty_support_gives_mean(self, rng):
        y = rng.standard_normal(25)
        fit = relaxed_refit(rng.standard_normal((25, 4)), y, np.array([], dtype=int))
        assert fit.intercept == pytest.approx(y.mean())
        assert np.array_equal(fit.coef, np.zeros(4))

    def test_single_column_slope(self, rng):
        X = rng.standard_normal((30, 2))
        y = 3.0 * X[:, 1] + rng.standard_normal(30)
        fit = relaxed_refit(X, y, np.array([1]))
        x = X[:, 1]
        slope = ((x - x.mean()) @ (y - y.mean())) / ((x - x.mean()) @ (x - x.mean()))
        assert fit.coef[1] == pytest.approx(slope, abs=1e-10)
        assert fit.coef[0] == 0.0

    def test_duplicate_indices_collapse(self, rng):
        X = rng.standard_normal((20, 3))
        y = rng.standard_normal(20)
        a = relaxed_refit(X, y, np.array([2, 2, 2]))
        b = relaxed_refit(X, y, np.array([2]))
        assert np.array_equal(a.coef, b.coef)

    def test_out_of_range_support(self, rng):
        with pytest.raises(ValueError, match="out of range"):
            relaxed_refit(rng.standard_normal((10, 2)), np.zeros(10), np.array([2]))

    def test_residual_orthogonality(self, rng):
        X = rng.standard_normal((50, 6))
        y = X @ rng.standard_normal(6) + rng.standard_normal(50)
        support = np.array([0, 2, 5])
        fit = relaxed_refit(X, y, support)
        r = y - fit.predict(X)
        assert abs(r.mean()) <= 1e-8
        assert np.max(np.abs(X[:, support].T @ r / 50)) <= 1e-8
        assert fit.kkt_residual <= 1e-8

    def test_no_intercept_variant(self, rng):
        X = rng.standard_normal((30, 2))
        y = X @ np.array([2.0, -1.0])
        fit = relaxed_refit(X, y, np.arange(2), fit_intercept=False)
        assert fit.intercept == 0.0
        assert np.allclose(fit.coef, [2.0, -1.0], atol=1e-10)


class TestSolveWls:
    def test_small_exact_system(self):
        X = np.array([[1.0, 0.0], [0.0, 2.0]])
        coef = solve_wls(X, np.array([3.0, 4.0]))
        assert np.allclose(coef, [3.0, 2.0], atol=1e-10)

    def test_duplicated_column_splits_coefficient(self, rng):
        x = rng.standard_normal(30)
        y = 2.0 * x + rng.standard_normal(30)
        pair = solve_wls(np.column_stack([x, x]), y)
        single = solve_wls(x.reshape(-1, 1), y)
        assert pair[0] == pytest.approx(pair[1], abs=1e-8)
        assert pair.sum() == pytest.approx(single[0], abs=1e-8)

    def test_zero_weight_drops_row(self, rng):
        X = rng.standard_normal((20, 3))
        y = rng.standard_normal(20)
        w = np.ones(20)
        w[7] = 0.0
        kept = np.arange(20) != 7
        assert np.allclose(
            solve_wls(X, y, w), solve_wls(X[kept], y[kept]), atol=1e-9
        )


class TestSolveGram:
    def test_matches_direct_solve(self, rng):
        A = rng.standard_normal((5, 8))
        G = A @ A.T / 8
        b = rng.standard_normal(5)
        coef, singular = solve_gram(G, b)
        assert not singular
        assert np.allclose(coef, np.linalg.solve(G, b), atol=1e-10)

    def test_singular_flagged_min_norm(self):
        G = np.array([[1.0, 1.0], [1.0, 1.0]])
        coef, singular = solve_gram(G, np.array([1.0, 1.0]))
        assert singular
        assert np.allclose(coef, [0.5, 0.5], atol=1e-6)

    def test_zero_diagonal_coordinate_dropped(self):
        G = np.diag([1.0, 0.0])
        coef, singular = solve_gram(G, np.array([2.0, 3.0]))
        assert coef[1] == 0.0 and coef[0] == pytest.approx(2.0)
        assert not singular

    def test_all_zero_gram(self):
        coef, singular = solve_gram(np.zeros((2, 2)), np.array([1.0, 0.0]))
        assert np.array_equal(coef, np.zeros(2))
        assert singular

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            solve_gram(np.eye(3), np.zeros(2))


class TestLambdaGrid:
    def test_endpoints_and_monotonicity(self):
        grid = default_lambda_grid(2.0, size=7, min_ratio=1e-2)
        assert grid[0] == pytest.approx(2.0)
        assert grid[-1] == pytest.approx(0.02)
        assert np.all(np.diff(grid) < 0)

    def test_degenerate_and_singleton(self):
        assert np.array_equal(default_lambda_grid(0.0), [0.0])
        assert np.array_equal(default_lambda_grid(3.0, size=1), [3.0])

    def test_bad_size(self):
        with pytest.raises(ValueError, match="positive"):
            default_lambda_grid(1.0, size=0)
