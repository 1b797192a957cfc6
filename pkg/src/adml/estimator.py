"""Scikit-learn style facade over the estimation pipeline."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .data import Dataset
from .estimators import ESTIMATORS, INTERCEPT, PARTIALLY_LINEAR, PLUG_IN
from .nuisance import FitOptions, fit_nuisances


class AteEstimator(BaseEstimator):
    """Average-treatment-effect estimator with influence-function inference.

    Wraps the functional pipeline (hinge basis, cross-validated Lasso
    nuisances, Riesz-representer debiasing) behind fit/get_params so it
    composes with sklearn tooling.  ``fit`` takes the covariate matrix, the
    binary treatment, and the outcome as separate arrays.
    """

    def __init__(
        self,
        estimator: str = PLUG_IN,
        alpha: float = 0.05,
        seed: int = 0,
        knots_per_covariate: int | None = None,
        n_folds: int = 10,
        grid_size: int = 50,
        min_lambda_ratio: float = 1e-3,
        fixed_propensity: float | None = None,
    ) -> None:
        self.estimator = estimator
        self.alpha = alpha
        self.seed = seed
        self.knots_per_covariate = knots_per_covariate
        self.n_folds = n_folds
        self.grid_size = grid_size
        self.min_lambda_ratio = min_lambda_ratio
        self.fixed_propensity = fixed_propensity

    def fit(self, W, A, Y) -> "AteEstimator":
        if self.estimator not in ESTIMATORS:
            raise ValueError(
                f"unknown estimator {self.estimator!r}; "
                f"choose from {sorted(ESTIMATORS)}"
            )
        data = Dataset(
            W=np.asarray(W, dtype=float),
            A=np.asarray(A, dtype=float),
            Y=np.asarray(Y, dtype=float),
        )
        options = FitOptions(
            knots_per_covariate=self.knots_per_covariate,
            n_folds=self.n_folds,
            grid_size=self.grid_size,
            min_lambda_ratio=self.min_lambda_ratio,
        )
        self.bundle_ = fit_nuisances(
            data,
            options=options,
            seed=self.seed,
            fixed_propensity=self.fixed_propensity,
        )
        self.estimate_ = ESTIMATORS[self.estimator](
            data, self.bundle_, alpha=self.alpha
        )
        self.psi_ = self.estimate_.psi
        self.sigma_ = self.estimate_.sigma
        self.ci_ = self.estimate_.ci
        self.n_features_in_ = data.n_covariates
        return self

    def predict_cate(self, W) -> np.ndarray:
        """Fitted treatment-effect function of the chosen working model."""
        check_is_fitted(self, "estimate_")
        W = np.asarray(W, dtype=float)
        if self.estimator == INTERCEPT:
            return np.full(W.shape[0], self.psi_)
        if self.estimator == PARTIALLY_LINEAR:
            return self.bundle_.rlearner.predict(W)
        return self.bundle_.outcome.predict(W, 1.0) - self.bundle_.outcome.predict(
            W, 0.0
        )

    def predict_propensity(self, W) -> np.ndarray:
        check_is_fitted(self, "estimate_")
        return self.bundle_.propensity.predict(np.asarray(W, dtype=float))
