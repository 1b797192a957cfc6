"""Additive hinge (first-order spline) bases for the working models.

A basis is a list of knots per covariate; each knot ``u`` of covariate ``j``
contributes the column ``(w_j - u) * 1(w_j >= u)``.  The treatment-interacted
block duplicates every column (including the intercept, which becomes the
bare treatment column) multiplied by ``a``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

COVARIATE_BLOCK = "covariate_only"
TREATMENT_BLOCK = "treatment_interacted"

# Column label: (covariate index, knot, block). Intercept and linear columns
# use covariate index -1 / knot None as markers.
Label = tuple[int, float | None, str]


def hinge_eval(x: np.ndarray | float, knot: float) -> np.ndarray | float:
    """Evaluate the hinge ``(x - knot) * 1(x >= knot)`` elementwise."""
    return np.maximum(np.asarray(x, dtype=float) - knot, 0.0)


@dataclass(frozen=True)
class BasisSpec:
    """Knot layout of one additive hinge block.

    ``knots[j]`` are the (sorted, distinct) hinge knots of covariate ``j``.
    ``block`` says whether columns are functions of ``w`` alone or are
    multiplied through by the treatment indicator.
    """

    knots: tuple[tuple[float, ...], ...]
    block: str = COVARIATE_BLOCK
    include_intercept: bool = False
    include_linear: bool = False

    def __post_init__(self) -> None:
        if self.block not in (COVARIATE_BLOCK, TREATMENT_BLOCK):
            raise ValueError(f"unknown block {self.block!r}")
        for per_cov in self.knots:
            if list(per_cov) != sorted(set(per_cov)):
                raise ValueError("knots must be sorted and distinct per covariate")

    @property
    def n_covariates(self) -> int:
        return len(self.knots)

    @property
    def n_columns(self) -> int:
        n = int(self.include_intercept) + sum(len(k) for k in self.knots)
        if self.include_linear:
            n += self.n_covariates
        return n

    def labels(self) -> list[Label]:
        out: list[Label] = []
        if self.include_intercept:
            out.append((-1, None, self.block))
        for j, per_cov in enumerate(self.knots):
            if self.include_linear:
                out.append((j, None, self.block))
            out.extend((j, float(u), self.block) for u in per_cov)
        return out


@dataclass
class DesignMatrix:
    """Expanded design with one basis label per column."""

    X: np.ndarray
    labels: list[Label] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.X.ndim != 2:
            raise ValueError("design must be 2-d")
        if len(self.labels) != self.X.shape[1]:
            raise ValueError("one label per column required")

    @property
    def shape(self) -> tuple[int, int]:
        return self.X.shape


def build_additive_basis(
    W: np.ndarray,
    knots_per_covariate: int,
    *,
    block: str = COVARIATE_BLOCK,
    include_intercept: bool = False,
    include_linear: bool = False,
) -> BasisSpec:
    """Place knots at the k/(K+1) empirical quantiles of each covariate.

    Quantiles use the inverted-CDF convention, so knots sit at observed
    values.  Duplicate knots are collapsed; a constant covariate yields no
    hinge columns and a warning.
    """
    W = np.asarray(W, dtype=float)
    if W.ndim != 2:
        raise ValueError("covariate matrix must be 2-d")
    K = int(knots_per_covariate)
    if K < 0:
        raise ValueError("knots_per_covariate must be nonnegative")
    probs = np.arange(1, K + 1) / (K + 1)
    knots: list[tuple[float, ...]] = []
    for j in range(W.shape[1]):
        col = W[:, j]
        if not np.all(np.isfinite(col)):
            raise ValueError(f"covariate {j} contains non-finite values")
        if K == 0:
            knots.append(())
            continue
        if col.max() == col.min():
            warnings.warn(
                f"covariate {j} is constant; no hinge columns emitted",
                stacklevel=2,
            )
            knots.append(())
            continue
        q = np.quantile(col, probs, method="inverted_cdf")
        knots.append(tuple(np.unique(q).tolist()))
    return BasisSpec(
        knots=tuple(knots),
        block=block,
        include_intercept=include_intercept,
        include_linear=include_linear,
    )


def expand(
    spec: BasisSpec,
    W: np.ndarray,
    A: np.ndarray | None = None,
) -> DesignMatrix:
    """Evaluate the basis columns of ``spec`` at ``W`` (and ``A``).

    For a treatment-interacted block every column, intercept included, is
    multiplied by ``A``; the interacted intercept is the bare treatment
    column.
    """
    W = np.asarray(W, dtype=float)
    if W.ndim != 2:
        raise ValueError("covariate matrix must be 2-d")
    if W.shape[1] != spec.n_covariates:
        raise ValueError(
            f"expected {spec.n_covariates} covariates, got {W.shape[1]}"
        )
    n = W.shape[0]
    cols: list[np.ndarray] = []
    if spec.include_intercept:
        cols.append(np.ones(n))
    for j, per_cov in enumerate(spec.knots):
        col = W[:, j]
        if spec.include_linear:
            cols.append(col.copy())
        for u in per_cov:
            cols.append(hinge_eval(col, u))
    X = np.column_stack(cols) if cols else np.empty((n, 0))
    if spec.block == TREATMENT_BLOCK:
        if A is None:
            raise ValueError("treatment-interacted block needs the treatment vector")
        A = np.asarray(A, dtype=float)
        if A.shape != (n,):
            raise ValueError("treatment vector shape mismatch")
        X = X * A[:, None]
    return DesignMatrix(X=X, labels=spec.labels())
