"""Population oracles under a known DGP: projections, estimands, bias terms.

Everything is computed against one fixed stream of covariate draws (the
treatment and outcome coordinates are integrated analytically), so
differences of estimands are internally consistent: re-scanning re-seeds the
same stream, and quantities that agree algebraically under the empirical
measure agree here to floating-point precision.

Conventions: a CATE basis is a covariate-block ``BasisSpec`` whose first
column is the intercept.  The corresponding outcome working model is its
two-block extension ``[psi(w), a * psi(w)]``.  Because ``a^2 = a``, every
population moment of the two-block model reduces to the pair
``E[psi psi']`` and ``E[pi0 psi psi']``, and overlap-weighted moments of
``gamma0 = 1/w0`` are formed with ``w0`` multiplied through, so nothing is
ever divided by a small overlap weight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterator, NamedTuple

import numpy as np

from .basis import COVARIATE_BLOCK, BasisSpec, expand
from .lasso import solve_gram
from .simulation import DgpSpec

DEFAULT_DRAWS = 1_000_000
DEFAULT_CHUNK = 50_000


class McEstimate(NamedTuple):
    """A Monte Carlo mean with its standard error."""

    value: float
    mc_se: float


def uniform_knots(knots_per_covariate: int, n_covariates: int) -> BasisSpec:
    """CATE basis with knots at the exact uniform(-1, 1) quantiles.

    Knots sit at ``-1 + 2k/(K+1)``; the basis of ``K1`` knots is nested in
    that of ``K2`` knots exactly when ``K1 + 1`` divides ``K2 + 1``.
    """
    K = int(knots_per_covariate)
    if K < 0:
        raise ValueError("knots_per_covariate must be nonnegative")
    per_cov = tuple(-1.0 + 2.0 * k / (K + 1) for k in range(1, K + 1))
    return BasisSpec(
        knots=(per_cov,) * n_covariates,
        block=COVARIATE_BLOCK,
        include_intercept=True,
    )


@dataclass
class _BasisMoments:
    """Population moments of one CATE basis under the covariate stream."""

    s0: np.ndarray  # E[psi psi']
    s1: np.ndarray  # E[pi0 psi psi']
    sw: np.ndarray  # E[w0 psi psi']
    m_psi: np.ndarray  # E[psi]
    m_c0: np.ndarray  # E[psi mu0(0,.)]
    m_pc0: np.ndarray  # E[pi0 psi mu0(0,.)]
    m_tau: np.ndarray  # E[psi tau0]
    m_ptau: np.ndarray  # E[pi0 psi tau0]
    m_wtau: np.ndarray  # E[w0 psi tau0]


class _TwoBlockCoef(NamedTuple):
    """Coefficients of ``f(a, w) = psi(w)'u + a psi(w)'v``."""

    u: np.ndarray
    v: np.ndarray
    singular: bool

    def parts(self, Psi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return Psi @ self.u, Psi @ self.v


def _mean_and_se(sums: list[float], sqsums: list[float], n: int) -> McEstimate:
    mean = math.fsum(sums) / n
    second = math.fsum(sqsums) / n
    var = max(second - mean * mean, 0.0)
    return McEstimate(value=mean, mc_se=math.sqrt(var / n))


class PopulationOracle:
    """Chunked Monte Carlo expectations under one DGP with shared draws.

    Basis moments are cached per ``BasisSpec``; scans are sequential with a
    fixed chunk size, so every reported number is a deterministic function
    of ``(dgp, n_draws, seed, chunk_size)``.
    """

    def __init__(
        self,
        dgp: DgpSpec,
        n_draws: int = DEFAULT_DRAWS,
        seed: int = 0,
        chunk_size: int = DEFAULT_CHUNK,
    ) -> None:
        if n_draws < 1:
            raise ValueError("need at least one draw")
        if chunk_size < 1:
            raise ValueError("chunk size must be positive")
        self.dgp = dgp
        self.n_draws = int(n_draws)
        self.seed = int(seed)
        self.chunk_size = int(chunk_size)
        self._moments: dict[BasisSpec, _BasisMoments] = {}

    def _chunks(self) -> Iterator[np.ndarray]:
        rng = np.random.default_rng(self.seed)
        left = self.n_draws
        while left > 0:
            m = min(self.chunk_size, left)
            yield rng.uniform(-1.0, 1.0, size=(m, self.dgp.n_covariates))
            left -= m

    # -- scans ------------------------------------------------------------

    def _scalar_scan(
        self, integrand: Callable[[np.ndarray], np.ndarray]
    ) -> McEstimate:
        """Mean and SE of a pointwise function of W over the fixed stream."""
        sums: list[float] = []
        sqs: list[float] = []
        for W in self._chunks():
            vals = integrand(W)
            sums.append(float(vals.sum()))
            sqs.append(float((vals * vals).sum()))
        return _mean_and_se(sums, sqs, self.n_draws)

    def _ensure_moments(self, spec: BasisSpec) -> _BasisMoments:
        if spec in self._moments:
            return self._moments[spec]
        p = spec.n_columns
        acc = _BasisMoments(
            s0=np.zeros((p, p)),
            s1=np.zeros((p, p)),
            sw=np.zeros((p, p)),
            m_psi=np.zeros(p),
            m_c0=np.zeros(p),
            m_pc0=np.zeros(p),
            m_tau=np.zeros(p),
            m_ptau=np.zeros(p),
            m_wtau=np.zeros(p),
        )
        for W in self._chunks():
            Psi = expand(spec, W).X
            pi = self.dgp.propensity(W)
            w0 = pi * (1.0 - pi)
            c0 = self.dgp.control_mean(W)
            tau = self.dgp.cate(W)
            acc.s0 += Psi.T @ Psi
            acc.s1 += Psi.T @ (Psi * pi[:, None])
            acc.sw += Psi.T @ (Psi * w0[:, None])
            acc.m_psi += Psi.sum(axis=0)
            acc.m_c0 += Psi.T @ c0
            acc.m_pc0 += Psi.T @ (pi * c0)
            acc.m_tau += Psi.T @ tau
            acc.m_ptau += Psi.T @ (pi * tau)
            acc.m_wtau += Psi.T @ (w0 * tau)
        for name in vars(acc):
            setattr(acc, name, getattr(acc, name) / self.n_draws)
        self._moments[spec] = acc
        return acc

    # -- scalar oracles -----------------------------------------------------

    def true_ate(self) -> McEstimate:
        return self._scalar_scan(self.dgp.cate)

    # -- partially linear side ----------------------------------------------

    def projection_cate(self, spec: BasisSpec) -> tuple[np.ndarray, bool]:
        """Overlap-weighted population projection of the true CATE."""
        mom = self._ensure_moments(spec)
        return solve_gram(mom.sw, mom.m_wtau)

    def overlap_riesz_coef(self, spec: BasisSpec) -> tuple[np.ndarray, bool]:
        """Projection of ``1/w0`` under the overlap-weighted metric."""
        mom = self._ensure_moments(spec)
        return solve_gram(mom.sw, mom.m_psi)

    def working_estimand(self, spec: BasisSpec) -> McEstimate:
        """Mean of the projected CATE, with the MC SE of that mean."""
        coef, _ = self.projection_cate(spec)
        return self._scalar_scan(lambda W: expand(spec, W).X @ coef)

    def pl_estimand_gap(
        self, working: BasisSpec, oracle_basis: BasisSpec
    ) -> McEstimate:
        """Working minus oracle estimand as one pointwise difference."""
        c_wk, _ = self.projection_cate(working)
        c_or, _ = self.projection_cate(oracle_basis)

        def integrand(W: np.ndarray) -> np.ndarray:
            return expand(working, W).X @ c_wk - expand(oracle_basis, W).X @ c_or

        return self._scalar_scan(integrand)

    def oracle_bias_partially_linear(
        self, working: BasisSpec, oracle_basis: BasisSpec
    ) -> McEstimate:
        """E[(gamma0 - Pi_n gamma0) w0 (Pi_n tau0 - tau0)] pointwise.

        ``gamma0`` is the overlap projection of ``1/w0`` onto the oracle
        basis; the factor ``(A - pi0)^2`` is integrated to ``w0``.
        """
        g_or, _ = self.overlap_riesz_coef(oracle_basis)
        g_wk, _ = self.overlap_riesz_coef(working)
        c_wk, _ = self.projection_cate(working)

        def integrand(W: np.ndarray) -> np.ndarray:
            pi = self.dgp.propensity(W)
            w0 = pi * (1.0 - pi)
            gamma_gap = expand(oracle_basis, W).X @ g_or - expand(working, W).X @ g_wk
            tau_gap = expand(working, W).X @ c_wk - self.dgp.cate(W)
            return gamma_gap * w0 * tau_gap

        return self._scalar_scan(integrand)

    # -- plug-in side ---------------------------------------------------------

    def _two_block_gram(self, mom: _BasisMoments) -> np.ndarray:
        return np.block([[mom.s0, mom.s1], [mom.s1, mom.s1]])

    def projection_outcome(self, spec: BasisSpec) -> _TwoBlockCoef:
        """Unweighted population projection of ``mu0`` onto the two-block model."""
        mom = self._ensure_moments(spec)
        rhs = np.concatenate(
            [mom.m_c0 + mom.m_ptau, mom.m_pc0 + mom.m_ptau]
        )
        theta, singular = solve_gram(self._two_block_gram(mom), rhs)
        p = mom.m_psi.shape[0]
        return _TwoBlockCoef(u=theta[:p], v=theta[p:], singular=singular)

    def plug_in_riesz_coef(self, spec: BasisSpec) -> _TwoBlockCoef:
        """Population Riesz representer of the contrast over the two-block model."""
        mom = self._ensure_moments(spec)
        b = np.concatenate([np.zeros_like(mom.m_psi), mom.m_psi])
        coef, singular = solve_gram(self._two_block_gram(mom), b)
        p = mom.m_psi.shape[0]
        return _TwoBlockCoef(u=coef[:p], v=coef[p:], singular=singular)

    def plug_in_estimand(self, spec: BasisSpec) -> McEstimate:
        """Mean contrast of the projected outcome model."""
        theta = self.projection_outcome(spec)
        return self._scalar_scan(lambda W: expand(spec, W).X @ theta.v)

    def plug_in_estimand_gap(
        self, working: BasisSpec, oracle_basis: BasisSpec
    ) -> McEstimate:
        t_wk = self.projection_outcome(working)
        t_or = self.projection_outcome(oracle_basis)

        def integrand(W: np.ndarray) -> np.ndarray:
            return expand(working, W).X @ t_wk.v - expand(oracle_basis, W).X @ t_or.v

        return self._scalar_scan(integrand)

    def oracle_bias_plug_in(
        self, working: BasisSpec, oracle_basis: BasisSpec
    ) -> McEstimate:
        """E[(alpha0 - Pi_n alpha0)(Pi_n mu0 - mu0)] with A integrated out.

        For two-block functions ``g0 + a g1`` and ``h0 + a h1`` the
        conditional expectation of the product is
        ``g0 h0 + pi0 (g0 h1 + g1 h0 + g1 h1)``.
        """
        a_or = self.plug_in_riesz_coef(oracle_basis)
        a_wk = self.plug_in_riesz_coef(working)
        t_wk = self.projection_outcome(working)

        def integrand(W: np.ndarray) -> np.ndarray:
            Psi_wk = expand(working, W).X
            Psi_or = expand(oracle_basis, W).X
            pi = self.dgp.propensity(W)
            g0 = Psi_or @ a_or.u - Psi_wk @ a_wk.u
            g1 = Psi_or @ a_or.v - Psi_wk @ a_wk.v
            h0 = Psi_wk @ t_wk.u - self.dgp.control_mean(W)
            h1 = Psi_wk @ t_wk.v - self.dgp.cate(W)
            return g0 * h0 + pi * (g0 * h1 + g1 * h0 + g1 * h1)

        return self._scalar_scan(integrand)


# --------------------------------------------------------------------------
# module-level wrappers


def true_ate(
    dgp: DgpSpec, n_draws: int = DEFAULT_DRAWS, seed: int = 0
) -> McEstimate:
    """Monte Carlo mean of the true CATE (the oracle estimand)."""
    return PopulationOracle(dgp, n_draws, seed).true_ate()


def population_projection_cate(
    dgp: DgpSpec,
    spec: BasisSpec,
    n_draws: int = DEFAULT_DRAWS,
    seed: int = 0,
) -> tuple[np.ndarray, bool]:
    return PopulationOracle(dgp, n_draws, seed).projection_cate(spec)


def population_overlap_riesz(
    dgp: DgpSpec,
    spec: BasisSpec,
    n_draws: int = DEFAULT_DRAWS,
    seed: int = 0,
) -> tuple[np.ndarray, bool]:
    return PopulationOracle(dgp, n_draws, seed).overlap_riesz_coef(spec)


def working_estimand(
    dgp: DgpSpec,
    spec: BasisSpec,
    n_draws: int = DEFAULT_DRAWS,
    seed: int = 0,
) -> McEstimate:
    return PopulationOracle(dgp, n_draws, seed).working_estimand(spec)


def plug_in_estimand(
    dgp: DgpSpec,
    spec: BasisSpec,
    n_draws: int = DEFAULT_DRAWS,
    seed: int = 0,
) -> McEstimate:
    return PopulationOracle(dgp, n_draws, seed).plug_in_estimand(spec)


def oracle_bias_partially_linear(
    dgp: DgpSpec,
    working: BasisSpec,
    oracle_basis: BasisSpec,
    n_draws: int = DEFAULT_DRAWS,
    seed: int = 0,
) -> McEstimate:
    return PopulationOracle(dgp, n_draws, seed).oracle_bias_partially_linear(
        working, oracle_basis
    )


def oracle_bias_plug_in(
    dgp: DgpSpec,
    working: BasisSpec,
    oracle_basis: BasisSpec,
    n_draws: int = DEFAULT_DRAWS,
    seed: int = 0,
) -> McEstimate:
    return PopulationOracle(dgp, n_draws, seed).oracle_bias_plug_in(
        working, oracle_basis
    )
