"""Weighted Lasso via Gram-based coordinate descent, with CV and refits.

The solver minimizes

    (1/2n) sum_i w_i (y_i - b0 - x_i' beta)^2 + lam * sum_j pw_j s_j |beta_j|

where ``s_j`` is the (weighted) standard deviation of column ``j``: columns
are standardized internally, the penalty applies to standardized
coefficients (the glmnet convention), and coefficients are reported on the
original scale.  ``pw_j = 0`` marks a column as never penalized; such
columns are always part of the support.

KKT residuals are measured on the standardized problem and rescaled by the
response scale, i.e. in the same units as ``lam`` and the correlations
``(1/n) <x~_j, residual>``.  Every fit iterates until the full KKT pass
clears ``kkt_tol`` (default 1e-10), well inside the 1e-8 contract.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._solver import _cd_path, _cd_solve
from .errors import EstimationError

DEFAULT_GRID_SIZE = 100
DEFAULT_MIN_RATIO = 1e-4
DEFAULT_N_FOLDS = 10
RIDGE = 1e-10

_MAX_SWEEPS = 100_000
_SWEEP_TOL = 1e-9
_KKT_TOL = 1e-10
# Looser targets for the fold fits behind a CV curve: the curve compares
# squared errors across lambdas, which a 1e-7 KKT residual perturbs far
# below the fold-to-fold noise, and the strict targets can cost thousands
# of extra sweeps per grid point on collinear hinge designs.
CV_SWEEP_TOL = 1e-7
CV_KKT_TOL = 1e-7
# Relative variance below which a column is treated as constant (its effect
# is absorbed by the intercept; its coefficient is pinned at zero).
_VAR_RTOL = 1e-12


@dataclass
class LassoFit:
    """Solution of one penalized (or refitted) weighted least squares."""

    intercept: float
    coef: np.ndarray
    lam: float
    penalty_weights: np.ndarray
    support: np.ndarray
    n_sweeps: int
    kkt_residual: float
    converged: bool
    n_obs: int

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.intercept + np.asarray(X, dtype=float) @ self.coef


@dataclass(frozen=True)
class CvPlan:
    """Fold assignment and penalty grid of one cross-validation run."""

    n_folds: int
    seed: int
    fold_ids: np.ndarray
    grid: np.ndarray

    def __post_init__(self) -> None:
        counts = np.bincount(self.fold_ids, minlength=self.n_folds)
        if len(counts) != self.n_folds or counts.min() == 0:
            raise ValueError("folds must partition the observations")
        if np.any(np.diff(self.grid) >= 0):
            raise ValueError("penalty grid must be strictly decreasing")


@dataclass
class CvResult:
    best_lambda: float
    best_index: int
    cv_curve: np.ndarray
    plan: CvPlan


# --------------------------------------------------------------------------
# moments and standardization


@dataclass
class _RawMoments:
    SXX: np.ndarray
    Sxy: np.ndarray
    Sx: np.ndarray
    Sy: float
    Syy: float
    Sw: float
    n: int

    def __sub__(self, other: "_RawMoments") -> "_RawMoments":
        return _RawMoments(
            SXX=self.SXX - other.SXX,
            Sxy=self.Sxy - other.Sxy,
            Sx=self.Sx - other.Sx,
            Sy=self.Sy - other.Sy,
            Syy=self.Syy - other.Syy,
            Sw=self.Sw - other.Sw,
            n=self.n - other.n,
        )


def _moments(X: np.ndarray, y: np.ndarray, w: np.ndarray) -> _RawMoments:
    Xw = X * w[:, None]
    wy = w * y
    return _RawMoments(
        SXX=X.T @ Xw,
        Sxy=X.T @ wy,
        Sx=Xw.sum(axis=0),
        Sy=float(wy.sum()),
        Syy=float(y @ wy),
        Sw=float(w.sum()),
        n=X.shape[0],
    )


@dataclass
class _Standardized:
    G: np.ndarray
    q: np.ndarray
    usable: np.ndarray
    shift: np.ndarray
    scale: np.ndarray
    y_shift: float
    y_scale: float
    n: int

    def to_original(self, beta_std: np.ndarray) -> tuple[float, np.ndarray]:
        """Map standardized coefficients back to the original scale."""
        coef = beta_std * (self.y_scale / self.scale)
        intercept = self.y_shift - float(self.shift @ coef)
        return intercept, coef


def _standardize(raw: _RawMoments, fit_intercept: bool) -> _Standardized:
    p = raw.Sx.shape[0]
    n = raw.n
    if raw.Sw <= 0:
        raise ValueError("observation weights must have positive total mass")
    if fit_intercept:
        m = raw.Sx / raw.Sw
        my = raw.Sy / raw.Sw
        Gc = (
            raw.SXX
            - np.outer(m, raw.Sx)
            - np.outer(raw.Sx, m)
            + raw.Sw * np.outer(m, m)
        ) / n
        qc = (raw.Sxy - m * raw.Sy - raw.Sx * my + raw.Sw * m * my) / n
        vy = max((raw.Syy - 2.0 * my * raw.Sy + raw.Sw * my * my) / n, 0.0)
    else:
        m = np.zeros(p)
        my = 0.0
        Gc = raw.SXX / n
        qc = raw.Sxy / n
        vy = max(raw.Syy / n, 0.0)
    v = np.maximum(np.diag(Gc).copy(), 0.0)
    raw_second = np.maximum(np.diag(raw.SXX) / n, 0.0)
    usable = v > _VAR_RTOL * raw_second
    scale = np.where(usable, np.sqrt(np.where(usable, v, 1.0)), 1.0)
    y_scale = float(np.sqrt(vy))
    G = Gc / np.outer(scale, scale)
    G[~usable, :] = 0.0
    G[:, ~usable] = 0.0
    idx = np.flatnonzero(usable)
    G[idx, idx] = 1.0
    q = np.where(usable, qc / scale, 0.0)
    if y_scale > 0:
        q = q / y_scale
    return _Standardized(
        G=np.ascontiguousarray(G),
        q=q,
        usable=usable,
        shift=m,
        scale=scale,
        y_shift=my,
        y_scale=y_scale,
        n=n,
    )


def _check_inputs(
    X: np.ndarray,
    y: np.ndarray,
    penalty_weights: np.ndarray | None,
    obs_weights: np.ndarray | None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    X = np.ascontiguousarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be 2-d")
    n, p = X.shape
    if y.shape != (n,):
        raise ValueError("y length must match X rows")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("X and y must be finite")
    if penalty_weights is None:
        pw = np.ones(p)
    else:
        pw = np.asarray(penalty_weights, dtype=float)
        if pw.shape != (p,) or np.any(pw < 0) or not np.all(np.isfinite(pw)):
            raise ValueError("penalty weights must be finite, nonnegative, length p")
    if obs_weights is None:
        w = np.ones(n)
    else:
        w = np.asarray(obs_weights, dtype=float)
        if w.shape != (n,) or np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("observation weights must be finite, nonnegative, length n")
    return X, y, pw, w


# --------------------------------------------------------------------------
# single fits


def _fit_from_std(
    std: _Standardized,
    lam: float,
    pw: np.ndarray,
    warm_std: np.ndarray | None,
    max_sweeps: int,
    tol: float,
    kkt_tol: float,
) -> tuple[float, np.ndarray, int, float, bool]:
    p = pw.shape[0]
    beta = np.zeros(p) if warm_std is None else warm_std.copy()
    if std.y_scale == 0.0:
        intercept, coef = std.to_original(np.zeros(p))
        return intercept, coef, 0, 0.0, True
    sweeps, kkt, conv = _cd_solve(
        std.G,
        std.q,
        lam / std.y_scale,
        pw,
        std.usable,
        beta,
        max_sweeps,
        tol,
        kkt_tol,
    )
    intercept, coef = std.to_original(beta)
    return intercept, coef, int(sweeps), float(kkt * std.y_scale), bool(conv)


def coordinate_descent(
    X: np.ndarray,
    y: np.ndarray,
    lam: float,
    *,
    penalty_weights: np.ndarray | None = None,
    obs_weights: np.ndarray | None = None,
    fit_intercept: bool = True,
    warm_start: np.ndarray | None = None,
    max_sweeps: int = _MAX_SWEEPS,
    tol: float = _SWEEP_TOL,
    kkt_tol: float = _KKT_TOL,
) -> LassoFit:
    """Solve one penalized weighted least squares problem."""
    X, y, pw, w = _check_inputs(X, y, penalty_weights, obs_weights)
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    std = _standardize(_moments(X, y, w), fit_intercept)
    warm_std = None
    if warm_start is not None:
        warm_std = np.asarray(warm_start, dtype=float) * std.scale
        if std.y_scale > 0:
            warm_std = warm_std / std.y_scale
        warm_std[~std.usable] = 0.0
    intercept, coef, sweeps, kkt, conv = _fit_from_std(
        std, lam, pw, warm_std, max_sweeps, tol, kkt_tol
    )
    if not conv:
        raise EstimationError(
            f"coordinate descent did not converge in {max_sweeps} sweeps; "
            f"final KKT residual {kkt:.3e}"
        )
    support = np.flatnonzero((coef != 0.0) | ((pw == 0.0) & std.usable))
    return LassoFit(
        intercept=intercept if fit_intercept else 0.0,
        coef=coef,
        lam=float(lam),
        penalty_weights=pw,
        support=support,
        n_sweeps=sweeps,
        kkt_residual=kkt,
        converged=conv,
        n_obs=X.shape[0],
    )


# --------------------------------------------------------------------------
# penalty grids


def _lambda_max_from_std(std: _Standardized, pw: np.ndarray) -> float:
    if std.y_scale == 0.0:
        return 0.0
    penalized = std.usable & (pw > 0)
    free = std.usable & (pw == 0)
    if not np.any(penalized):
        return 0.0
    r = std.q
    if np.any(free):
        idx = np.flatnonzero(free)
        z, _ = solve_gram(std.G[np.ix_(idx, idx)], std.q[idx])
        r = std.q - std.G[:, idx] @ z
    return float(np.max(np.abs(r[penalized]) / pw[penalized]) * std.y_scale)


def lambda_max(
    X: np.ndarray,
    y: np.ndarray,
    *,
    penalty_weights: np.ndarray | None = None,
    obs_weights: np.ndarray | None = None,
    fit_intercept: bool = True,
) -> float:
    """Smallest penalty at which every penalized coefficient is zero.

    Unpenalized columns (and the intercept) are projected out first.
    """
    X, y, pw, w = _check_inputs(X, y, penalty_weights, obs_weights)
    std = _standardize(_moments(X, y, w), fit_intercept)
    return _lambda_max_from_std(std, pw)


def default_lambda_grid(
    lam_max: float,
    size: int = DEFAULT_GRID_SIZE,
    min_ratio: float = DEFAULT_MIN_RATIO,
) -> np.ndarray:
    """Log-spaced decreasing grid from ``lam_max`` to ``min_ratio * lam_max``."""
    if lam_max <= 0:
        return np.array([0.0])
    if size < 1:
        raise ValueError("grid size must be positive")
    if size == 1:
        return np.array([lam_max])
    return np.geomspace(lam_max, lam_max * min_ratio, size)


# --------------------------------------------------------------------------
# cross-validation


def _assign_folds(
    X: np.ndarray, y: np.ndarray, n_folds: int, seed: int
) -> np.ndarray:
    """Deterministic folds that depend on row values, not row order.

    Rows are sorted lexicographically by (y, X) and a seed-shuffled balanced
    fold pattern is laid over the sorted positions, so permuting the input
    rows permutes fold labels with them and leaves the partition (as a
    multiset of rows) unchanged.
    """
    n = y.shape[0]
    if n_folds < 2:
        raise ValueError("need at least 2 folds")
    if n_folds > n:
        raise ValueError("more folds than observations leaves an empty fold")
    keys = np.column_stack([y, X])
    order = np.lexsort(keys.T[::-1])
    pattern = np.random.default_rng(seed).permutation(np.arange(n) % n_folds)
    fold_ids = np.empty(n, dtype=np.int64)
    fold_ids[order] = pattern
    return fold_ids


@dataclass
class _CvData:
    """Per-fold standardized moments, reusable across penalty-weight grids."""

    X: np.ndarray
    y: np.ndarray
    w: np.ndarray
    fold_ids: np.ndarray
    n_folds: int
    fit_intercept: bool
    full_std: _Standardized
    train_std: list[_Standardized]
    test_idx: list[np.ndarray]


def _prepare_cv(
    X: np.ndarray,
    y: np.ndarray,
    w: np.ndarray,
    fold_ids: np.ndarray,
    n_folds: int,
    fit_intercept: bool,
) -> _CvData:
    full = _moments(X, y, w)
    train_std: list[_Standardized] = []
    test_idx: list[np.ndarray] = []
    for f in range(n_folds):
        idx = np.flatnonzero(fold_ids == f)
        test = _moments(X[idx], y[idx], w[idx])
        train_std.append(_standardize(full - test, fit_intercept))
        test_idx.append(idx)
    return _CvData(
        X=X,
        y=y,
        w=w,
        fold_ids=fold_ids,
        n_folds=n_folds,
        fit_intercept=fit_intercept,
        full_std=_standardize(full, fit_intercept),
        train_std=train_std,
        test_idx=test_idx,
    )


def _cv_curve(
    cv: _CvData,
    grid: np.ndarray,
    pw: np.ndarray,
    max_sweeps: int,
    tol: float,
    kkt_tol: float,
) -> np.ndarray:
    n = cv.y.shape[0]
    L = grid.shape[0]
    sse = np.zeros(L)
    for f in range(cv.n_folds):
        std = cv.train_std[f]
        idx = cv.test_idx[f]
        if std.y_scale == 0.0:
            pred = np.full((idx.shape[0], L), std.y_shift)
        else:
            betas, _, _, _ = _cd_path(
                std.G,
                std.q,
                grid / std.y_scale,
                pw,
                std.usable,
                max_sweeps,
                tol,
                kkt_tol,
            )
            B = betas * (std.y_scale / std.scale)[None, :]
            b0 = std.y_shift - B @ std.shift
            pred = cv.X[idx] @ B.T + b0[None, :]
        resid = cv.y[idx][:, None] - pred
        sse += (cv.w[idx][:, None] * resid * resid).sum(axis=0)
    return sse / n


def _pick_lambda(grid: np.ndarray, curve: np.ndarray) -> int:
    """Index of the smallest CV error; ties go to the larger penalty."""
    best = 0
    for l in range(1, grid.shape[0]):
        if curve[l] < curve[best]:
            best = l
    return best


def cross_validate(
    X: np.ndarray,
    y: np.ndarray,
    *,
    grid: np.ndarray | None = None,
    n_folds: int = DEFAULT_N_FOLDS,
    seed: int = 0,
    penalty_weights: np.ndarray | None = None,
    obs_weights: np.ndarray | None = None,
    fit_intercept: bool = True,
    grid_size: int = DEFAULT_GRID_SIZE,
    min_ratio: float = DEFAULT_MIN_RATIO,
    max_sweeps: int = _MAX_SWEEPS,
    tol: float = _SWEEP_TOL,
    kkt_tol: float = _KKT_TOL,
) -> CvResult:
    """K-fold cross-validation of the penalty level.

    The CV curve is the pooled out-of-fold weighted mean squared error per
    grid point; ties are broken toward the larger (sparser) penalty.
    """
    X, y, pw, w = _check_inputs(X, y, penalty_weights, obs_weights)
    fold_ids = _assign_folds(X, y, n_folds, seed)
    cv = _prepare_cv(X, y, w, fold_ids, n_folds, fit_intercept)
    if grid is None:
        grid = default_lambda_grid(
            _lambda_max_from_std(cv.full_std, pw), grid_size, min_ratio
        )
    else:
        grid = np.asarray(grid, dtype=float)
    curve = _cv_curve(cv, grid, pw, max_sweeps, tol, kkt_tol)
    best = _pick_lambda(grid, curve)
    plan = CvPlan(n_folds=n_folds, seed=seed, fold_ids=fold_ids, grid=grid)
    return CvResult(
        best_lambda=float(grid[best]), best_index=best, cv_curve=curve, plan=plan
    )


# --------------------------------------------------------------------------
# unpenalized solves


def solve_gram(
    G: np.ndarray, b: np.ndarray, *, ridge: float = RIDGE
) -> tuple[np.ndarray, bool]:
    """Solve the normal equations ``G c = b`` with a tiny symmetric ridge.

    ``G`` is scaled to unit diagonal, ``ridge`` is added there, and two
    iterative-refinement steps against the unridged matrix push the residual
    to machine precision when the system is consistent; for singular systems
    the result is the (approximately) minimum-norm solution and the returned
    flag is True.  Zero-diagonal coordinates get coefficient zero.
    """
    G = np.asarray(G, dtype=float)
    b = np.asarray(b, dtype=float)
    p = b.shape[0]
    if G.shape != (p, p):
        raise ValueError("Gram matrix shape mismatch")
    d = np.maximum(np.diag(G), 0.0)
    usable = d > 0.0
    coef = np.zeros(p)
    if not np.any(usable):
        return coef, bool(np.any(np.abs(b) > 0))
    idx = np.flatnonzero(usable)
    s = np.sqrt(d[idx])
    C = G[np.ix_(idx, idx)] / np.outer(s, s)
    rhs = b[idx] / s
    singular = False
    try:
        np.linalg.cholesky(C)
    except np.linalg.LinAlgError:
        singular = True
    M = C + ridge * np.eye(idx.shape[0])
    z = np.linalg.solve(M, rhs)
    for _ in range(2):
        z = z + np.linalg.solve(M, rhs - C @ z)
    coef[idx] = z / s
    return coef, singular


def solve_wls(
    X: np.ndarray,
    y: np.ndarray,
    obs_weights: np.ndarray | None = None,
    *,
    ridge: float = RIDGE,
) -> np.ndarray:
    """Weighted least squares on an explicit design (no implicit intercept).

    Rank deficiency is resolved toward the minimum-norm solution by the tiny
    ridge, so exactly duplicated columns split their coefficient equally and
    predictions match the deduplicated design.
    """
    X, y, _, w = _check_inputs(X, y, None, obs_weights)
    n = X.shape[0]
    Xw = X * w[:, None]
    G = (X.T @ Xw) / n
    b = (X.T @ (w * y)) / n
    coef, _ = solve_gram(G, b, ridge=ridge)
    return coef


def relaxed_refit(
    X: np.ndarray,
    y: np.ndarray,
    support: np.ndarray,
    *,
    obs_weights: np.ndarray | None = None,
    fit_intercept: bool = True,
) -> LassoFit:
    """Unpenalized refit on ``support``; off-support coefficients stay zero.

    An empty support yields the (weighted) intercept-only fit.  The reported
    ``kkt_residual`` is the largest weighted residual correlation with a
    support column, i.e. the orthogonality defect of the refit.
    """
    X, y, _, w = _check_inputs(X, y, None, obs_weights)
    p = X.shape[1]
    support = np.unique(np.asarray(support, dtype=int))
    if support.size and (support.min() < 0 or support.max() >= p):
        raise ValueError("support indices out of range")
    std = _standardize(_moments(X[:, support], y, w), fit_intercept)
    coef = np.zeros(p)
    resid_corr = 0.0
    if support.size and std.y_scale > 0.0:
        idx = np.flatnonzero(std.usable)
        z = np.zeros(support.size)
        if idx.size:
            zs, _ = solve_gram(std.G[np.ix_(idx, idx)], std.q[idx])
            z[idx] = zs
            r = std.q[idx] - std.G[np.ix_(idx, idx)] @ zs
            resid_corr = float(np.max(np.abs(r)) * std.y_scale)
        intercept, coef_s = std.to_original(z)
        coef[support] = coef_s
    else:
        intercept = std.y_shift
    return LassoFit(
        intercept=intercept if fit_intercept else 0.0,
        coef=coef,
        lam=0.0,
        penalty_weights=np.zeros(p),
        support=support,
        n_sweeps=0,
        kkt_residual=resid_corr,
        converged=True,
        n_obs=X.shape[0],
    )
