"""ATE estimators, their influence functions, and Riesz representer solves.

All four estimators consume the same nuisance bundle and return an
``AteEstimate`` with influence-function values, the sandwich standard error
``sigma = sqrt(mean(D_i^2))``, and a Wald interval.  The two adaptive
estimators are exactly self-debiased: their influence functions average to
zero as an algebraic identity, because each Riesz representer is solved
inside the span of the refit support, whose residual orthogonality the
refit already enforces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import DegenerateDesignError
from .lasso import solve_gram
from .nuisance import NuisanceBundle

PLUG_IN = "plug_in_admle"
PARTIALLY_LINEAR = "partially_linear_admle"
INTERCEPT = "semiparametric_intercept"
AIPW = "aipw"


# --------------------------------------------------------------------------
# normal quantile

_ACK_A = (
    -3.969683028665376e01,
    2.209460984245205e02,
    -2.759285104469687e02,
    1.383577518672690e02,
    -3.066479806614716e01,
    2.506628277459239e00,
)
_ACK_B = (
    -5.447609879822406e01,
    1.615858368580409e02,
    -1.556989798598866e02,
    6.680131188771972e01,
    -1.328068155288572e01,
)
_ACK_C = (
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e00,
    -2.549732539343734e00,
    4.374664141464968e00,
    2.938163982698783e00,
)
_ACK_D = (
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e00,
    3.754408661907416e00,
)
_ACK_SPLIT = 0.02425


def _acklam(p: float) -> float:
    c, d = _ACK_C, _ACK_D
    if p < _ACK_SPLIT:
        u = math.sqrt(-2.0 * math.log(p))
        num = ((((c[0] * u + c[1]) * u + c[2]) * u + c[3]) * u + c[4]) * u + c[5]
        den = (((d[0] * u + d[1]) * u + d[2]) * u + d[3]) * u + 1.0
        return num / den
    if p > 1.0 - _ACK_SPLIT:
        u = math.sqrt(-2.0 * math.log(1.0 - p))
        num = ((((c[0] * u + c[1]) * u + c[2]) * u + c[3]) * u + c[4]) * u + c[5]
        den = (((d[0] * u + d[1]) * u + d[2]) * u + d[3]) * u + 1.0
        return -num / den
    a, b = _ACK_A, _ACK_B
    q = p - 0.5
    r = q * q
    num = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q
    den = ((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0
    return num / den


def normal_quantile(p: float) -> float:
    """Inverse standard-normal CDF: rational approximation plus one Halley step."""
    p = float(p)
    if not 0.0 < p < 1.0:
        raise ValueError("quantile level must lie strictly in (0, 1)")
    x = _acklam(p)
    # Halley refinement against the exact CDF takes the ~1e-9 raw accuracy
    # of the approximation to full double precision.
    err = 0.5 * math.erfc(-x / math.sqrt(2.0)) - p
    u = err * math.sqrt(2.0 * math.pi) * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


# --------------------------------------------------------------------------
# Riesz representers


@dataclass(frozen=True)
class RieszFit:
    """Solution of an empirical Riesz normal-equation system.

    ``values`` holds the representer at each observation's own arguments;
    ``singular`` flags a rank-deficient Gram resolved toward the
    minimum-norm solution.
    """

    coef: np.ndarray
    values: np.ndarray
    singular: bool


def empirical_riesz(
    phi_obs: np.ndarray,
    phi_treated: np.ndarray,
    phi_control: np.ndarray,
) -> RieszFit:
    """Representer of the plug-in contrast over the columns of ``phi``.

    Solves ``G c = b`` with ``G = (1/n) sum phi_i phi_i'`` at the observed
    treatment and ``b = mean(phi(1, w) - phi(0, w))``, so that
    ``(1/n) sum alpha_i phi_ij`` reproduces ``b_j`` for every column.
    """
    phi_obs = np.asarray(phi_obs, dtype=float)
    phi_treated = np.asarray(phi_treated, dtype=float)
    phi_control = np.asarray(phi_control, dtype=float)
    if phi_obs.ndim != 2 or phi_obs.shape[0] == 0:
        raise ValueError("design must be 2-d and nonempty")
    if phi_treated.shape != phi_obs.shape or phi_control.shape != phi_obs.shape:
        raise ValueError("counterfactual designs must match the observed design")
    n = phi_obs.shape[0]
    G = (phi_obs.T @ phi_obs) / n
    b = (phi_treated - phi_control).mean(axis=0)
    coef, singular = solve_gram(G, b)
    return RieszFit(coef=coef, values=phi_obs @ coef, singular=singular)


def overlap_riesz(phi: np.ndarray, weights: np.ndarray) -> RieszFit:
    """Representer of the mean functional under the overlap-weighted metric.

    Solves ``sum_i w_i phi_i phi_i' c = sum_i phi_i``; the fitted values are
    the working-model projection of ``1 / (pi (1 - pi))``.
    """
    phi = np.asarray(phi, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if phi.ndim != 2 or phi.shape[0] == 0:
        raise ValueError("design must be 2-d and nonempty")
    if weights.shape != (phi.shape[0],):
        raise ValueError("one weight per observation required")
    if np.any(weights < 0):
        raise ValueError("weights must be nonnegative")
    if not np.any(weights > 0):
        raise DegenerateDesignError("all overlap weights are zero")
    n = phi.shape[0]
    G = (phi.T @ (phi * weights[:, None])) / n
    b = phi.mean(axis=0)
    coef, singular = solve_gram(G, b)
    return RieszFit(coef=coef, values=phi @ coef, singular=singular)


# --------------------------------------------------------------------------
# estimates


@dataclass(frozen=True)
class AteEstimate:
    """Point estimate with influence-function-based inference."""

    psi: float
    if_values: np.ndarray
    sigma: float
    ci: tuple[float, float]
    estimator: str
    n: int
    alpha: float

    @property
    def std_error(self) -> float:
        return self.sigma / math.sqrt(self.n)


def confidence_interval(
    psi: float, if_values: np.ndarray, alpha: float
) -> tuple[float, tuple[float, float]]:
    """Sandwich scale and Wald interval from influence-function values."""
    if_values = np.asarray(if_values, dtype=float)
    if if_values.size == 0:
        raise ValueError("influence-function values must be nonempty")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie strictly in (0, 1)")
    sigma = float(np.sqrt(np.mean(if_values**2)))
    half = normal_quantile(1.0 - 0.5 * alpha) * sigma / math.sqrt(if_values.size)
    return sigma, (psi - half, psi + half)


def _assemble(
    name: str, psi: float, if_values: np.ndarray, alpha: float
) -> AteEstimate:
    sigma, ci = confidence_interval(psi, if_values, alpha)
    return AteEstimate(
        psi=psi,
        if_values=if_values,
        sigma=sigma,
        ci=ci,
        estimator=name,
        n=if_values.size,
        alpha=alpha,
    )


def plug_in_admle(
    data: Dataset, bundle: NuisanceBundle, *, alpha: float = 0.05
) -> AteEstimate:
    """Working-model contrast ``mean(mu(1, w) - mu(0, w))``.

    The influence function adds the empirical-Riesz residual term, which
    averages to zero exactly: the representer lives in the refit span and
    the refit residuals are orthogonal to that span.
    """
    riesz = empirical_riesz(
        bundle.outcome_support_obs,
        bundle.outcome_support_1,
        bundle.outcome_support_0,
    )
    contrast = bundle.mu1 - bundle.mu0
    psi = float(np.mean(contrast))
    if_values = riesz.values * (data.Y - bundle.mu_obs) + contrast - psi
    return _assemble(PLUG_IN, psi, if_values, alpha)


def partially_linear_admle(
    data: Dataset, bundle: NuisanceBundle, *, alpha: float = 0.05
) -> AteEstimate:
    """Mean of the fitted CATE under the partially linear working model."""
    resid_a = data.A - bundle.pi
    riesz = overlap_riesz(bundle.rlearner_support, resid_a**2)
    psi = float(np.mean(bundle.tau))
    resid_y = data.Y - bundle.m - resid_a * bundle.tau
    if_values = bundle.tau - psi + riesz.values * resid_a * resid_y
    return _assemble(PARTIALLY_LINEAR, psi, if_values, alpha)


def semiparametric_intercept(
    data: Dataset, bundle: NuisanceBundle, *, alpha: float = 0.05
) -> AteEstimate:
    """Constant-effect estimator: weighted residual-on-residual slope."""
    resid_a = data.A - bundle.pi
    total_weight = float(resid_a @ resid_a)
    if total_weight <= 0.0:
        raise DegenerateDesignError("treatment equals its propensity everywhere")
    resid_y = data.Y - bundle.m
    psi = float(resid_a @ resid_y) / total_weight
    gamma = data.n / total_weight
    if_values = gamma * resid_a * (resid_y - resid_a * psi)
    return _assemble(INTERCEPT, psi, if_values, alpha)


def aipw(
    data: Dataset, bundle: NuisanceBundle, *, alpha: float = 0.05
) -> AteEstimate:
    """Augmented inverse-probability-weighted estimator on the same nuisances."""
    ipw = data.A / bundle.pi - (1.0 - data.A) / (1.0 - bundle.pi)
    summand = bundle.mu1 - bundle.mu0 + ipw * (data.Y - bundle.mu_obs)
    psi = float(np.mean(summand))
    return _assemble(AIPW, psi, summand - psi, alpha)


ESTIMATORS = {
    PLUG_IN: plug_in_admle,
    PARTIALLY_LINEAR: partially_linear_admle,
    INTERCEPT: semiparametric_intercept,
    AIPW: aipw,
}
