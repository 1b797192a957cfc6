"""Working-model fits: propensity, joint outcome, and CATE regressions.

Every nuisance is a cross-validated Lasso on an additive hinge basis
followed by an unpenalized refit on the selected columns.  The refit is what
the estimators consume: its residuals are orthogonal to the selected columns
at solver precision, which is what makes the plug-in estimator debias itself
exactly rather than approximately.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import lasso
from ._seeds import TAG_OUTCOME, TAG_PROPENSITY, TAG_RLEARNER, split_seed
from .basis import (
    COVARIATE_BLOCK,
    TREATMENT_BLOCK,
    BasisSpec,
    build_additive_basis,
    expand,
)
from .data import Dataset
from .errors import DegenerateDesignError

# Total basis columns (both blocks together) by sample size; intermediate
# sizes use the nearest row, ties toward the smaller size.
KNOT_SCHEDULE = (
    (500, 80),
    (1000, 400),
    (2000, 608),
    (3000, 608),
    (4000, 800),
    (5000, 800),
)

TRUNCATION_GRID = (1e-5, 1e-4, 1e-3, 0.005, 0.01, 0.02, 0.05, 0.1)

PENALTY_RATIOS = (0.5, 1.0, 2.0)


def schedule_knots(n: int, n_covariates: int) -> int:
    """Knots per covariate so both hinge blocks total about ``k(n)`` columns."""
    if n < 1:
        raise ValueError("sample size must be positive")
    if n_covariates < 1:
        raise ValueError("need at least one covariate")
    sizes = np.array([row[0] for row in KNOT_SCHEDULE])
    k = KNOT_SCHEDULE[int(np.argmin(np.abs(sizes - n)))][1]
    return int(round(k / (2.0 * n_covariates)))


@dataclass(frozen=True)
class FitOptions:
    """Pipeline knobs shared by the CLI, the facade, and the harness."""

    knots_per_covariate: int | None = None
    n_folds: int = 10
    grid_size: int = 50
    min_lambda_ratio: float = 1e-3
    penalty_ratios: tuple[float, ...] = PENALTY_RATIOS
    truncation_grid: tuple[float, ...] = TRUNCATION_GRID

    def __post_init__(self) -> None:
        if self.knots_per_covariate is not None and self.knots_per_covariate < 0:
            raise ValueError("knots_per_covariate must be nonnegative")
        if self.n_folds < 2:
            raise ValueError("need at least 2 folds")
        if self.grid_size < 1:
            raise ValueError("grid_size must be positive")
        if not 0 < self.min_lambda_ratio <= 1:
            raise ValueError("min_lambda_ratio must be in (0, 1]")
        if not self.penalty_ratios or any(r <= 0 for r in self.penalty_ratios):
            raise ValueError("penalty ratios must be positive")
        if not self.truncation_grid or any(
            not 0 < c < 0.5 for c in self.truncation_grid
        ):
            raise ValueError("truncation cutoffs must lie in (0, 0.5)")


# --------------------------------------------------------------------------
# propensity


def riesz_truncation_loss(A: np.ndarray, pi: np.ndarray) -> float:
    """Mean Riesz loss of the inverse-propensity representer at ``pi``.

    Minimizing this over truncation cutoffs targets the representer the
    estimators actually use, instead of the propensity fit itself.
    """
    A = np.asarray(A, dtype=float)
    pi = np.asarray(pi, dtype=float)
    alpha_sq = A / pi**2 + (1.0 - A) / (1.0 - pi) ** 2
    return float(np.mean(alpha_sq - 2.0 / (pi * (1.0 - pi))))


def select_truncation(
    A: np.ndarray,
    pi_raw: np.ndarray,
    grid: tuple[float, ...] = TRUNCATION_GRID,
) -> float:
    """Cutoff from ``grid`` minimizing the Riesz loss; ties to the smaller one."""
    best_c = None
    best_loss = math.inf
    for c in sorted(grid):
        if not 0 < c < 0.5:
            raise ValueError("truncation cutoffs must lie in (0, 0.5)")
        loss = riesz_truncation_loss(A, np.clip(pi_raw, c, 1.0 - c))
        if loss < best_loss:
            best_c = c
            best_loss = loss
    return float(best_c)


@dataclass
class PropensityFit:
    """Hinge-Lasso propensity with clipping and Riesz-targeted truncation."""

    spec: BasisSpec
    fit: lasso.LassoFit
    cv: lasso.CvResult
    truncation: float
    pi_raw: np.ndarray
    pi: np.ndarray

    def predict(self, W: np.ndarray) -> np.ndarray:
        raw = np.clip(self.fit.predict(expand(self.spec, W).X), 0.0, 1.0)
        return np.clip(raw, self.truncation, 1.0 - self.truncation)


@dataclass
class FixedPropensity:
    """Known constant propensity supplied by the caller; nothing is fitted."""

    value: float
    truncation: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 < self.value < 1.0:
            raise ValueError("fixed propensity must lie strictly in (0, 1)")

    def predict(self, W: np.ndarray) -> np.ndarray:
        return np.full(np.asarray(W).shape[0], self.value)


def fit_propensity(
    data: Dataset,
    spec: BasisSpec,
    options: FitOptions,
    seed: int,
) -> PropensityFit:
    X = expand(spec, data.W).X
    cv = lasso.cross_validate(
        X,
        data.A,
        n_folds=options.n_folds,
        seed=seed,
        grid_size=options.grid_size,
        min_ratio=options.min_lambda_ratio,
        tol=lasso.CV_SWEEP_TOL,
        kkt_tol=lasso.CV_KKT_TOL,
    )
    path_fit = lasso.coordinate_descent(X, data.A, cv.best_lambda)
    refit = lasso.relaxed_refit(X, data.A, path_fit.support)
    pi_raw = np.clip(refit.predict(X), 0.0, 1.0)
    c = select_truncation(data.A, pi_raw, options.truncation_grid)
    return PropensityFit(
        spec=spec,
        fit=refit,
        cv=cv,
        truncation=c,
        pi_raw=pi_raw,
        pi=np.clip(pi_raw, c, 1.0 - c),
    )


# --------------------------------------------------------------------------
# joint outcome regression


@dataclass
class OutcomeFit:
    """Two-block outcome regression ``mu(a, w)`` with a free treatment column.

    The design is ``[hinges(w) | a, a * hinges(w)]`` plus a fitted intercept;
    the bare treatment column is never penalized, the interacted block
    carries ``ratio`` times the covariate-block penalty.
    """

    cov_spec: BasisSpec
    trt_spec: BasisSpec
    fit: lasso.LassoFit
    relaxed: lasso.LassoFit
    lam: float
    ratio: float
    cv_value: float

    def design(self, W: np.ndarray, A: np.ndarray) -> np.ndarray:
        return np.hstack(
            [expand(self.cov_spec, W).X, expand(self.trt_spec, W, A).X]
        )

    def predict(self, W: np.ndarray, A: np.ndarray | float) -> np.ndarray:
        W = np.asarray(W, dtype=float)
        A = np.broadcast_to(np.asarray(A, dtype=float), (W.shape[0],))
        return self.relaxed.predict(self.design(W, A))


def _outcome_penalties(p_cov: int, p_trt: int, ratio: float) -> np.ndarray:
    return np.concatenate([np.ones(p_cov), [0.0], np.full(p_trt - 1, ratio)])


def fit_outcome_joint(
    data: Dataset,
    cov_spec: BasisSpec,
    options: FitOptions,
    seed: int,
) -> OutcomeFit:
    """Select (penalty level, block ratio) by pooled out-of-fold error.

    The fold split is shared across ratios, so curves are comparable; ties go
    to the larger penalty within a ratio and to the earlier ratio across
    ratios.
    """
    trt_spec = BasisSpec(
        knots=cov_spec.knots, block=TREATMENT_BLOCK, include_intercept=True
    )
    Xc = expand(cov_spec, data.W).X
    Xt = expand(trt_spec, data.W, data.A).X
    X = np.ascontiguousarray(np.hstack([Xc, Xt]))
    p_cov, p_trt = Xc.shape[1], Xt.shape[1]
    ones = np.ones(data.n)
    fold_ids = lasso._assign_folds(X, data.Y, options.n_folds, seed)
    cv_data = lasso._prepare_cv(X, data.Y, ones, fold_ids, options.n_folds, True)
    best: tuple[float, float, np.ndarray] | None = None
    best_val = math.inf
    for ratio in options.penalty_ratios:
        pw = _outcome_penalties(p_cov, p_trt, ratio)
        grid = lasso.default_lambda_grid(
            lasso._lambda_max_from_std(cv_data.full_std, pw),
            options.grid_size,
            options.min_lambda_ratio,
        )
        curve = lasso._cv_curve(
            cv_data, grid, pw, lasso._MAX_SWEEPS, lasso.CV_SWEEP_TOL, lasso.CV_KKT_TOL
        )
        i = lasso._pick_lambda(grid, curve)
        if curve[i] < best_val:
            best = (float(grid[i]), float(ratio), pw)
            best_val = float(curve[i])
    lam, ratio, pw = best
    path_fit = lasso.coordinate_descent(X, data.Y, lam, penalty_weights=pw)
    refit = lasso.relaxed_refit(X, data.Y, path_fit.support)
    return OutcomeFit(
        cov_spec=cov_spec,
        trt_spec=trt_spec,
        fit=path_fit,
        relaxed=refit,
        lam=lam,
        ratio=ratio,
        cv_value=best_val,
    )


def compute_m(pi: np.ndarray, mu1: np.ndarray, mu0: np.ndarray) -> np.ndarray:
    """Marginal outcome regression ``E[Y | W] = pi mu(1, .) + (1 - pi) mu(0, .)``."""
    return pi * mu1 + (1.0 - pi) * mu0


# --------------------------------------------------------------------------
# CATE regression (residual-on-residual)


@dataclass
class RlearnerFit:
    """Post-Lasso CATE fit on treatment-residual-weighted hinge columns.

    The model is ``tau(w) = c0 + hinges(w) @ c`` fit by least squares of
    ``Y - m`` on ``(A - pi) * [1, hinges(w)]`` with no separate intercept;
    the pseudo-intercept column ``(A - pi)`` is never penalized.
    """

    spec: BasisSpec
    fit: lasso.LassoFit
    relaxed: lasso.LassoFit
    tau: np.ndarray

    def predict(self, W: np.ndarray) -> np.ndarray:
        return expand(self.spec, W).X @ self.relaxed.coef


def rlearner_fit(
    data: Dataset,
    pi: np.ndarray,
    m: np.ndarray,
    cov_spec: BasisSpec,
    options: FitOptions,
    seed: int,
) -> RlearnerFit:
    spec = BasisSpec(
        knots=cov_spec.knots, block=COVARIATE_BLOCK, include_intercept=True
    )
    base = expand(spec, data.W).X
    resid_a = data.A - pi
    if not np.any(resid_a != 0.0):
        raise DegenerateDesignError(
            "treatment equals the propensity everywhere; no residual variation"
        )
    Xw = base * resid_a[:, None]
    R = data.Y - m
    pw = np.ones(base.shape[1])
    pw[0] = 0.0
    cv = lasso.cross_validate(
        Xw,
        R,
        n_folds=options.n_folds,
        seed=seed,
        penalty_weights=pw,
        fit_intercept=False,
        grid_size=options.grid_size,
        min_ratio=options.min_lambda_ratio,
        tol=lasso.CV_SWEEP_TOL,
        kkt_tol=lasso.CV_KKT_TOL,
    )
    path_fit = lasso.coordinate_descent(
        Xw, R, cv.best_lambda, penalty_weights=pw, fit_intercept=False
    )
    refit = lasso.relaxed_refit(Xw, R, path_fit.support, fit_intercept=False)
    return RlearnerFit(spec=spec, fit=path_fit, relaxed=refit, tau=base @ refit.coef)


# --------------------------------------------------------------------------
# bundle


@dataclass
class NuisanceBundle:
    """Everything the estimators need, fit once per dataset.

    The ``*_support`` members are the refit design columns (intercept
    included) evaluated at the observed and counterfactual treatments; the
    Riesz representers are solved inside their span so that refit
    orthogonality carries over to the influence functions.
    """

    propensity: PropensityFit | FixedPropensity
    outcome: OutcomeFit
    rlearner: RlearnerFit
    pi: np.ndarray
    mu_obs: np.ndarray
    mu1: np.ndarray
    mu0: np.ndarray
    m: np.ndarray
    tau: np.ndarray
    outcome_support_obs: np.ndarray
    outcome_support_1: np.ndarray
    outcome_support_0: np.ndarray
    rlearner_support: np.ndarray
    seed: int = 0
    options: FitOptions = field(default_factory=FitOptions)


def fit_nuisances(
    data: Dataset,
    *,
    options: FitOptions | None = None,
    seed: int = 0,
    fixed_propensity: float | None = None,
) -> NuisanceBundle:
    """Run the full pipeline on one dataset.

    Sub-seeds for the propensity, outcome, and CATE cross-validations are
    split from ``seed`` with reserved counters, so they never collide with
    replication seeds derived from the same master.  A ``fixed_propensity``
    (a known randomization probability) replaces the propensity fit and is
    used untruncated.
    """
    if options is None:
        options = FitOptions()
    if np.all(data.A == data.A[0]):
        raise DegenerateDesignError(
            "treatment is constant; both arms are required"
        )
    K = options.knots_per_covariate
    if K is None:
        K = schedule_knots(data.n, data.n_covariates)
    cov_spec = build_additive_basis(data.W, K, block=COVARIATE_BLOCK)
    prop: PropensityFit | FixedPropensity
    if fixed_propensity is None:
        prop = fit_propensity(
            data, cov_spec, options, split_seed(seed, TAG_PROPENSITY)
        )
        pi = prop.pi
    else:
        prop = FixedPropensity(value=float(fixed_propensity))
        pi = prop.predict(data.W)
    out = fit_outcome_joint(data, cov_spec, options, split_seed(seed, TAG_OUTCOME))
    ones = np.ones(data.n)
    X_obs = out.design(data.W, data.A)
    X_1 = out.design(data.W, ones)
    X_0 = out.design(data.W, np.zeros(data.n))
    mu_obs = out.relaxed.predict(X_obs)
    mu1 = out.relaxed.predict(X_1)
    mu0 = out.relaxed.predict(X_0)
    S = out.relaxed.support
    sup_obs = np.column_stack([ones, X_obs[:, S]])
    sup_1 = np.column_stack([ones, X_1[:, S]])
    sup_0 = np.column_stack([ones, X_0[:, S]])
    del X_obs, X_1, X_0
    m = compute_m(pi, mu1, mu0)
    rl = rlearner_fit(
        data, pi, m, cov_spec, options, split_seed(seed, TAG_RLEARNER)
    )
    base = expand(rl.spec, data.W).X
    return NuisanceBundle(
        propensity=prop,
        outcome=out,
        rlearner=rl,
        pi=pi,
        mu_obs=mu_obs,
        mu1=mu1,
        mu0=mu0,
        m=m,
        tau=rl.tau,
        outcome_support_obs=sup_obs,
        outcome_support_1=sup_1,
        outcome_support_0=sup_0,
        rlearner_support=base[:, rl.relaxed.support],
        seed=seed,
        options=options,
    )
