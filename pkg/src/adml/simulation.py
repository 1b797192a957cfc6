"""Synthetic data generating processes and the replication harness.

Covariates are uniform on (-1, 1)^d.  The treatment follows a logistic
model whose slope ``gamma`` controls overlap; the outcome is Gaussian around
``mu0(0, w) + a * tau0(w)``.  The local perturbation shifts the control mean
by ``-n^{-1/2}/(1 - pi0)`` and replaces the CATE by the constant 1 plus
``n^{-1/2}/(pi0 (1 - pi0))``, the regime in which adaptive estimators
inherit the working-model bias.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import IO, Iterable

import numpy as np
from scipy.special import expit

from ._seeds import TAG_TRUTH, split_seed
from .data import Dataset, format_float

OUTCOME_FORMS = ("linear", "nonlinear")

THREADS_ENV_VAR = "ADML_THREADS"


@dataclass(frozen=True)
class DgpSpec:
    """Parameters of one synthetic design."""

    gamma: float
    outcome_form: str = "linear"
    perturbed: bool = False
    perturbation_n: int | None = None
    noise_variance: float = 0.5
    n_covariates: int = 4

    def __post_init__(self) -> None:
        if self.outcome_form not in OUTCOME_FORMS:
            raise ValueError(f"outcome_form must be one of {OUTCOME_FORMS}")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if self.noise_variance <= 0:
            raise ValueError("noise_variance must be positive")
        if self.n_covariates < 1:
            raise ValueError("need at least one covariate")
        if self.perturbed and not self.perturbation_n:
            raise ValueError("perturbed spec needs perturbation_n")

    @property
    def _shift(self) -> float:
        return 1.0 / math.sqrt(self.perturbation_n) if self.perturbed else 0.0

    def propensity(self, W: np.ndarray) -> np.ndarray:
        W = np.asarray(W, dtype=float)
        return expit(self.gamma * (W + np.sin(4.0 * W)).sum(axis=-1))

    def overlap_weight(self, W: np.ndarray) -> np.ndarray:
        pi = self.propensity(W)
        return pi * (1.0 - pi)

    def cate(self, W: np.ndarray) -> np.ndarray:
        W = np.asarray(W, dtype=float)
        if self.perturbed:
            return 1.0 + self._shift / self.overlap_weight(W)
        return (
            1.0
            + W[..., 0]
            + np.abs(W[..., 1])
            + np.cos(4.0 * W[..., 2])
            + W[..., 3]
        )

    def control_mean(self, W: np.ndarray) -> np.ndarray:
        W = np.asarray(W, dtype=float)
        if self.outcome_form == "linear":
            base = W[..., 0] + np.abs(W[..., 1]) + W[..., 2] + np.abs(W[..., 3])
        else:
            base = np.cos(4.0 * W[..., 1]) + np.sin(4.0 * W).sum(axis=-1)
        if self.perturbed:
            base = base - self._shift / (1.0 - self.propensity(W))
        return base

    def mean_outcome(self, A: np.ndarray | float, W: np.ndarray) -> np.ndarray:
        return self.control_mean(W) + np.asarray(A, dtype=float) * self.cate(W)


def apply_local_perturbation(spec: DgpSpec, n: int) -> DgpSpec:
    """Return the n^{-1/2}-perturbed version of ``spec``.

    The baseline CATE is replaced outright (constant 1 plus the local term),
    and the control mean is shifted so the observed regression stays
    compatible with the unperturbed propensity.
    """
    if n < 1:
        raise ValueError("perturbation sample size must be positive")
    return replace(spec, perturbed=True, perturbation_n=int(n))


def sample_dgp(spec: DgpSpec, n: int, seed: int) -> Dataset:
    """Draw ``n`` observations; draw order is W, then A, then the noise."""
    if n < 1:
        raise ValueError("sample size must be positive")
    rng = np.random.default_rng(seed)
    W = rng.uniform(-1.0, 1.0, size=(n, spec.n_covariates))
    A = (rng.random(n) < spec.propensity(W)).astype(float)
    Y = spec.mean_outcome(A, W) + math.sqrt(spec.noise_variance) * rng.standard_normal(n)
    return Dataset(W=W, A=A, Y=Y)


def _hinge_sum_peak() -> float:
    """Maximum of w + sin(4w) on (-1, 1), located by bisecting the derivative."""
    f = lambda w: w + math.sin(4.0 * w)
    lo, hi = 0.0, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if 1.0 + 4.0 * math.cos(4.0 * mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return max(f(0.5 * (lo + hi)), f(1.0), f(-1.0))


def overlap_constant(spec: DgpSpec) -> float:
    """Infimum over w of min(pi0, 1 - pi0), from the analytic supremum."""
    L = spec.n_covariates * _hinge_sum_peak()
    return float(expit(-spec.gamma * L))


# --------------------------------------------------------------------------
# replication harness


@dataclass(frozen=True)
class RepEstimate:
    psi: float
    sigma: float
    ci_lower: float
    ci_upper: float


@dataclass
class ReplicationRecord:
    index: int
    seed: int
    estimates: dict[str, RepEstimate] = field(default_factory=dict)
    errors: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class MetricsRow:
    estimator: str
    n: int
    gamma: float
    outcome_form: str
    perturbed: bool
    bias: float
    se: float
    rmse: float
    coverage: float
    mean_ci_width: float
    n_replications: int
    n_failures: int


METRICS_HEADER = (
    "estimator,n,gamma,outcome_form,perturbed,bias,se,rmse,"
    "coverage,mean_ci_width,R,failures"
)


@dataclass
class MetricsTable:
    rows: list[MetricsRow] = field(default_factory=list)

    def write_csv(self, fh: IO[str], *, header: bool = True) -> None:
        if header:
            fh.write(METRICS_HEADER + "\n")
        for r in self.rows:
            fields = [
                r.estimator,
                str(r.n),
                format_float(r.gamma),
                r.outcome_form,
                "true" if r.perturbed else "false",
                format_float(r.bias),
                format_float(r.se),
                format_float(r.rmse),
                format_float(r.coverage),
                format_float(r.mean_ci_width),
                str(r.n_replications),
                str(r.n_failures),
            ]
            fh.write(",".join(fields) + "\n")


def read_metrics_csv(fh: IO[str]) -> MetricsTable:
    """Parse a metrics CSV written by ``MetricsTable.write_csv``."""
    header = fh.readline().rstrip("\n")
    if header != METRICS_HEADER:
        raise ValueError(f"unexpected metrics header: {header!r}")
    rows = []
    for i, line in enumerate(fh, start=1):
        parts = line.rstrip("\n").split(",")
        if len(parts) != 12:
            raise ValueError(f"row {i}: expected 12 fields, got {len(parts)}")
        if parts[4] not in ("true", "false"):
            raise ValueError(f"row {i}: perturbed must be true or false")
        try:
            rows.append(
                MetricsRow(
                    estimator=parts[0],
                    n=int(parts[1]),
                    gamma=float(parts[2]),
                    outcome_form=parts[3],
                    perturbed=parts[4] == "true",
                    bias=float(parts[5]),
                    se=float(parts[6]),
                    rmse=float(parts[7]),
                    coverage=float(parts[8]),
                    mean_ci_width=float(parts[9]),
                    n_replications=int(parts[10]),
                    n_failures=int(parts[11]),
                )
            )
        except ValueError as exc:
            raise ValueError(f"row {i}: {exc}") from None
    return MetricsTable(rows=rows)


def _limit_blas_threads() -> None:
    # Identical BLAS threading in every execution mode is part of the
    # byte-identical-output contract across ADML_THREADS settings.
    from threadpoolctl import threadpool_limits

    threadpool_limits(limits=1)


def _run_one(args: tuple) -> ReplicationRecord:
    spec, n, names, seed, alpha, options = args
    from . import estimators as est
    from .nuisance import fit_nuisances

    record = ReplicationRecord(index=-1, seed=seed)
    data = sample_dgp(spec, n, seed)
    try:
        bundle = fit_nuisances(data, options=options, seed=seed)
    except Exception as exc:  # noqa: BLE001 - failed replication is data
        msg = f"{type(exc).__name__}: {exc}"
        record.errors = {name: msg for name in names}
        return record
    for name in names:
        try:
            e = est.ESTIMATORS[name](data, bundle, alpha=alpha)
            record.estimates[name] = RepEstimate(
                psi=e.psi, sigma=e.sigma, ci_lower=e.ci[0], ci_upper=e.ci[1]
            )
        except Exception as exc:  # noqa: BLE001
            record.errors[name] = f"{type(exc).__name__}: {exc}"
    return record


def resolve_n_threads(n_tasks: int, n_threads: int | None = None) -> int:
    if n_threads is None:
        env = os.environ.get(THREADS_ENV_VAR, "").strip()
        if env:
            n_threads = int(env)
        else:
            n_threads = os.cpu_count() or 1
    if n_threads < 1:
        raise ValueError(f"{THREADS_ENV_VAR} must be a positive integer")
    return max(1, min(n_threads, n_tasks))


def replicate(
    spec: DgpSpec,
    n: int,
    estimator_names: Iterable[str],
    n_replications: int,
    master_seed: int,
    *,
    alpha: float = 0.05,
    options=None,
    n_threads: int | None = None,
) -> list[ReplicationRecord]:
    """Run seeded replications; results do not depend on the worker count.

    Replication ``r`` is a pure function of ``split_seed(master_seed, r)``,
    and records are reduced in replication order.
    """
    from . import estimators as est
    from .nuisance import FitOptions

    names = list(estimator_names)
    unknown = [name for name in names if name not in est.ESTIMATORS]
    if unknown:
        raise ValueError(f"unknown estimators: {unknown}")
    if n_replications < 1:
        raise ValueError("need at least one replication")
    if options is None:
        options = FitOptions()
    _limit_blas_threads()
    tasks = [
        (spec, n, tuple(names), split_seed(master_seed, r), alpha, options)
        for r in range(n_replications)
    ]
    workers = resolve_n_threads(len(tasks), n_threads)
    if workers == 1:
        records = [_run_one(t) for t in tasks]
    else:
        import multiprocessing as mp

        ctx = mp.get_context("fork")
        chunk = max(1, len(tasks) // (workers * 8))
        with ProcessPoolExecutor(
            max_workers=workers,
            mp_context=ctx,
            initializer=_limit_blas_threads,
        ) as pool:
            records = list(pool.map(_run_one, tasks, chunksize=chunk))
    for r, record in enumerate(records):
        record.index = r
    return records


def summarize(
    records: list[ReplicationRecord],
    estimator_names: Iterable[str],
    psi0: float,
    spec: DgpSpec,
    n: int,
) -> MetricsTable:
    """Aggregate replication records against the truth ``psi0``.

    ``se`` is the population standard deviation across successful
    replications, so ``rmse**2 == bias**2 + se**2`` holds exactly.
    """
    rows = []
    R = len(records)
    for name in estimator_names:
        psis = np.array(
            [rec.estimates[name].psi for rec in records if name in rec.estimates]
        )
        n_fail = R - psis.size
        if psis.size:
            lo = np.array(
                [rec.estimates[name].ci_lower for rec in records if name in rec.estimates]
            )
            hi = np.array(
                [rec.estimates[name].ci_upper for rec in records if name in rec.estimates]
            )
            bias = float(psis.mean() - psi0)
            se = float(psis.std(ddof=0))
            rmse = math.sqrt(bias * bias + se * se)
            coverage = float(np.mean((lo <= psi0) & (psi0 <= hi)))
            width = float(np.mean(hi - lo))
        else:
            bias = se = rmse = coverage = width = math.nan
        rows.append(
            MetricsRow(
                estimator=name,
                n=n,
                gamma=spec.gamma,
                outcome_form=spec.outcome_form,
                perturbed=spec.perturbed,
                bias=bias,
                se=se,
                rmse=rmse,
                coverage=coverage,
                mean_ci_width=width,
                n_replications=R,
                n_failures=n_fail,
            )
        )
    return MetricsTable(rows=rows)


def run_replications(
    spec: DgpSpec,
    n: int,
    estimator_names: Iterable[str],
    n_replications: int,
    master_seed: int,
    *,
    alpha: float = 0.05,
    options=None,
    n_threads: int | None = None,
    psi0: float | None = None,
    truth_draws: int = 1_000_000,
) -> MetricsTable:
    """Replicate, then summarize against the MC truth of ``spec``."""
    names = list(estimator_names)
    if psi0 is None:
        from .projections import true_ate

        psi0, _ = true_ate(
            spec, n_draws=truth_draws, seed=split_seed(master_seed, TAG_TRUTH)
        )
    records = replicate(
        spec,
        n,
        names,
        n_replications,
        master_seed,
        alpha=alpha,
        options=options,
        n_threads=n_threads,
    )
    return summarize(records, names, psi0, spec, n)
