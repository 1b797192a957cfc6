import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from adml import AteEstimator
from adml.estimators import INTERCEPT, PARTIALLY_LINEAR, PLUG_IN
from adml.simulation import DgpSpec, sample_dgp


@pytest.fixture(scope="module")
def arrays():
    data = sample_dgp(DgpSpec(gamma=0.5), 120, seed=5)
    return data.W, data.A, data.Y


class TestFitAttributes:
    def test_fit_sets_estimate_state(self, arrays):
        W, A, Y = arrays
        est = AteEstimator(knots_per_covariate=3, n_folds=5, seed=4).fit(W, A, Y)
        assert est.n_features_in_ == 4
        assert est.psi_ == est.estimate_.psi
        assert est.sigma_ == est.estimate_.sigma
        assert est.ci_ == est.estimate_.ci
        assert est.ci_[0] < est.psi_ < est.ci_[1]
        assert est.bundle_.seed == 4

    def test_fit_returns_self(self, arrays):
        W, A, Y = arrays
        est = AteEstimator(knots_per_covariate=2, n_folds=5)
        assert est.fit(W, A, Y) is est

    def test_unknown_estimator_rejected(self, arrays):
        W, A, Y = arrays
        with pytest.raises(ValueError, match="unknown estimator"):
            AteEstimator(estimator="ipw", knots_per_covariate=2, n_folds=5).fit(W, A, Y)

    def test_determinism(self, arrays):
        W, A, Y = arrays
        a = AteEstimator(knots_per_covariate=3, n_folds=5, seed=8).fit(W, A, Y)
        b = AteEstimator(knots_per_covariate=3, n_folds=5, seed=8).fit(W, A, Y)
        assert a.psi_ == b.psi_ and a.ci_ == b.ci_


class TestPredictions:
    def test_cate_matches_outcome_contrast(self, arrays):
        W, A, Y = arrays
        est = AteEstimator(knots_per_covariate=3, n_folds=5).fit(W, A, Y)
        cate = est.predict_cate(W[:10])
        contrast = est.bundle_.outcome.predict(W[:10], 1.0) - est.bundle_.outcome.predict(
            W[:10], 0.0
        )
        assert np.allclose(cate, contrast, atol=1e-12)

    def test_partially_linear_cate_uses_rlearner(self, arrays):
        W, A, Y = arrays
        est = AteEstimator(
            estimator=PARTIALLY_LINEAR, knots_per_covariate=3, n_folds=5
        ).fit(W, A, Y)
        assert np.allclose(
            est.predict_cate(W[:10]), est.bundle_.rlearner.predict(W[:10]), atol=1e-12
        )

    def test_intercept_cate_is_constant(self, arrays):
        W, A, Y = arrays
        est = AteEstimator(estimator=INTERCEPT, knots_per_covariate=2, n_folds=5).fit(
            W, A, Y
        )
        assert np.array_equal(est.predict_cate(W[:7]), np.full(7, est.psi_))

    def test_propensity_respects_truncation(self, arrays):
        W, A, Y = arrays
        est = AteEstimator(knots_per_covariate=3, n_folds=5).fit(W, A, Y)
        pi = est.predict_propensity(W)
        c = est.bundle_.propensity.truncation
        assert np.all((pi >= c) & (pi <= 1 - c))

    def test_fixed_propensity_constant(self, arrays):
        W, A, Y = arrays
        est = AteEstimator(
            knots_per_covariate=2, n_folds=5, fixed_propensity=0.5
        ).fit(W, A, Y)
        assert np.array_equal(est.predict_propensity(W[:9]), np.full(9, 0.5))

    def test_unfitted_raises(self, arrays):
        W, _, _ = arrays
        with pytest.raises(NotFittedError):
            AteEstimator().predict_cate(W)
        with pytest.raises(NotFittedError):
            AteEstimator().predict_propensity(W)


class TestSklearnProtocol:
    def test_get_params_round_trip(self):
        est = AteEstimator(estimator=PLUG_IN, alpha=0.1, seed=3, knots_per_covariate=2)
        params = est.get_params()
        assert params["alpha"] == 0.1 and params["seed"] == 3
        rebuilt = AteEstimator(**params)
        assert rebuilt.get_params() == params

    def test_clone_preserves_params_drops_state(self, arrays):
        W, A, Y = arrays
        est = AteEstimator(knots_per_covariate=2, n_folds=5).fit(W, A, Y)
        fresh = clone(est)
        assert fresh.get_params() == est.get_params()
        with pytest.raises(NotFittedError):
            fresh.predict_cate(W)
