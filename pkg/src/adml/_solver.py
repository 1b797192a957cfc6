"""Numba kernels for Gram-based coordinate descent.

All kernels work on the standardized scale (unit-diagonal Gram, centered
response) prepared by :mod:`adml.lasso`.  Sweeps maintain the residual
correlation ``r = q - G @ beta`` over the active set only; before every KKT
check ``r`` is recomputed from scratch, so reported KKT residuals are free
of accumulation drift.

Hinge dictionaries are highly collinear and plain coordinate descent can
take thousands of sweeps to clear a 1e-10 KKT target on them, so once the
active support and signs stabilize the kernel solves the stationarity
system on the support directly (Cholesky plus iterative refinement).  The
solve is accepted only when the solved signs match the assumed ones, and
the authoritative KKT pass vets the result either way.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# Ridge added to the unit diagonal before factoring a support system, and
# the pivot floor below which even the ridged factorization is abandoned.
_RIDGE = 1e-10
_PIVOT_TOL = 1e-13
# Largest support solved directly; beyond this fall back to pure descent.
_DIRECT_CAP = 1024
# Sweeps run between consecutive direct-solve attempts.  Near-duplicate
# hinge columns make plain descent converge at a crawl, so the kernel leans
# on the solve for precision and uses sweeps only to stabilize the support.
_SWEEP_BUDGET = 10
# Sweeps run before the active set is pruned back to the current support
# and the inner threshold resets.
_RESTART_SWEEPS = 500


@njit(cache=True)
def _where_true(mask):
    count = 0
    for j in range(mask.shape[0]):
        if mask[j]:
            count += 1
    out = np.empty(count, np.int64)
    i = 0
    for j in range(mask.shape[0]):
        if mask[j]:
            out[i] = j
            i += 1
    return out


@njit(cache=True)
def _chol_factor(A):
    """Lower-Cholesky of ``A`` plus a tiny ridge; flags collapsed pivots."""
    s = A.shape[0]
    L = A.copy()
    for i in range(s):
        L[i, i] += _RIDGE
    for i in range(s):
        d = L[i, i]
        for k in range(i):
            d -= L[i, k] * L[i, k]
        if d <= _PIVOT_TOL:
            return L, False
        d = np.sqrt(d)
        L[i, i] = d
        for j in range(i + 1, s):
            v = L[j, i]
            for k in range(i):
                v -= L[j, k] * L[i, k]
            L[j, i] = v / d
    return L, True


@njit(cache=True)
def _chol_backsolve(L, b, x):
    s = b.shape[0]
    for i in range(s):
        v = b[i]
        for k in range(i):
            v -= L[i, k] * x[k]
        x[i] = v / L[i, i]
    for i in range(s - 1, -1, -1):
        v = x[i]
        for k in range(i + 1, s):
            v -= L[k, i] * x[k]
        x[i] = v / L[i, i]


@njit(cache=True)
def _chol_solve(A, b, x):
    """Solve ``A x = b`` by ridged Cholesky plus iterative refinement.

    Refinement runs against the unridged matrix, so consistent systems
    (every stationarity system with the right signs is one) come back at
    machine precision even when ``A`` is numerically singular.
    """
    s = b.shape[0]
    L, ok = _chol_factor(A)
    if not ok:
        return False
    _chol_backsolve(L, b, x)
    resid = np.empty(s)
    delta = np.empty(s)
    for _ in range(3):
        for i in range(s):
            v = b[i]
            Arow = A[i]
            for k in range(s):
                v -= Arow[k] * x[k]
            resid[i] = v
        _chol_backsolve(L, resid, delta)
        for i in range(s):
            x[i] += delta[i]
    return True


@njit(cache=True)
def _fresh_residual(G, q, beta, r):
    p = q.shape[0]
    for k in range(p):
        r[k] = q[k]
    for j in range(p):
        bj = beta[j]
        if bj != 0.0:
            Grow = G[j]
            for k in range(p):
                r[k] -= bj * Grow[k]


@njit(cache=True)
def _support_objective(A, qs, lam_pws, x):
    """Penalized objective restricted to the support (coords elsewhere are 0)."""
    s = x.shape[0]
    acc = 0.0
    for a in range(s):
        va = x[a]
        if va != 0.0:
            row = 0.0
            Arow = A[a]
            for b in range(s):
                row += Arow[b] * x[b]
            acc += 0.5 * va * row - qs[a] * va + lam_pws[a] * abs(va)
    return acc


@njit(cache=True)
def _try_direct(G, q, lam, pw, beta, act_idx):
    """Stationarity solve on the current support under the current signs.

    Coordinates whose solved value contradicts its assumed sign are dropped
    and the smaller system is re-solved (descent leaves tiny boundary
    coefficients whose sign is arbitrary; insisting on them would reject
    forever).  The final candidate is accepted only when it does not
    increase the penalized objective: unguarded accepts can ping-pong
    between two sign patterns indefinitely.  ``beta`` is written only on
    acceptance.
    """
    n_act = act_idx.shape[0]
    s = 0
    for ii in range(n_act):
        j = act_idx[ii]
        if beta[j] != 0.0 or pw[j] == 0.0:
            s += 1
    if s == 0 or s > _DIRECT_CAP:
        return False
    sup = np.empty(s, np.int64)
    sgn = np.empty(s)
    i = 0
    for ii in range(n_act):
        j = act_idx[ii]
        if beta[j] != 0.0 or pw[j] == 0.0:
            sup[i] = j
            if beta[j] > 0.0:
                sgn[i] = 1.0
            elif beta[j] < 0.0:
                sgn[i] = -1.0
            else:
                sgn[i] = 0.0
            i += 1
    s0 = s
    sup0 = sup.copy()
    x = np.empty(s)
    f_old = 0.0
    first = True
    for _ in range(30):
        A = np.empty((s, s))
        qs = np.empty(s)
        lam_pws = np.empty(s)
        rhs = np.empty(s)
        for a in range(s):
            ja = sup[a]
            Grow = G[ja]
            for b in range(s):
                A[a, b] = Grow[sup[b]]
            qs[a] = q[ja]
            lam_pws[a] = lam * pw[ja]
            rhs[a] = qs[a] - lam_pws[a] * sgn[a]
        if first:
            b0 = np.empty(s)
            for a in range(s):
                b0[a] = beta[sup[a]]
            f_old = _support_objective(A, qs, lam_pws, b0)
            first = False
        if not _chol_solve(A, rhs, x[:s]):
            return False
        keep = 0
        for a in range(s):
            if lam > 0.0 and pw[sup[a]] > 0.0 and x[a] * sgn[a] <= 0.0:
                continue
            sup[keep] = sup[a]
            sgn[keep] = sgn[a]
            x[keep] = x[a]
            keep += 1
        if keep == s:
            f_new = _support_objective(A, qs, lam_pws, x[:s])
            if f_new > f_old + 1e-12 * (1.0 + abs(f_old)):
                return False
            for a in range(s0):
                beta[sup0[a]] = 0.0
            for a in range(s):
                beta[sup[a]] = x[a]
            return True
        if keep == 0:
            return False
        s = keep
    return False


@njit(cache=True)
def _cd_solve(G, q, lam, pw, usable, beta, max_sweeps, tol, kkt_tol):
    """Run coordinate descent in place on ``beta``.

    Returns ``(sweeps, kkt_residual, converged)``.  Convergence is declared
    only when the full KKT pass (on a freshly computed residual) is below
    ``kkt_tol``.  Between restarts the active set only grows (KKT violators
    join); every ``_RESTART_SWEEPS`` sweeps it is pruned back to
    nonzero-or-free coordinates and the inner threshold resets.  The prune
    is essential: once stale zero coordinates from near-duplicate hinge
    columns accumulate, sweeps cycle mass among them and the KKT residual
    plateaus.  The coefficient-change threshold gating the inner loop
    starts no tighter than 1e-5 and shrinks while the set is stable.
    """
    p = G.shape[0]
    active = np.empty(p, np.bool_)
    for j in range(p):
        if not usable[j]:
            beta[j] = 0.0
        active[j] = usable[j] and (beta[j] != 0.0 or pw[j] == 0.0)
    act_idx = _where_true(active)
    r = np.empty(p)
    _fresh_residual(G, q, beta, r)
    sweeps = 0
    inner_tol = tol if tol > 1e-5 else 1e-5
    kkt = np.inf
    sweeps_mark = 0
    while True:
        budget = sweeps + _SWEEP_BUDGET
        if budget > max_sweeps:
            budget = max_sweeps
        while sweeps < budget:
            maxd = 0.0
            for ii in range(act_idx.shape[0]):
                j = act_idx[ii]
                z = r[j] + beta[j]
                thr = lam * pw[j]
                if thr > 0.0:
                    if z > thr:
                        bnew = z - thr
                    elif z < -thr:
                        bnew = z + thr
                    else:
                        bnew = 0.0
                else:
                    bnew = z
                d = bnew - beta[j]
                if d != 0.0:
                    beta[j] = bnew
                    Grow = G[j]
                    for kk in range(act_idx.shape[0]):
                        k = act_idx[kk]
                        r[k] -= d * Grow[k]
                    ad = abs(d)
                    if ad > maxd:
                        maxd = ad
            sweeps += 1
            if maxd < inner_tol:
                break
        _try_direct(G, q, lam, pw, beta, act_idx)
        _fresh_residual(G, q, beta, r)
        kkt = 0.0
        grew = False
        for j in range(p):
            if not usable[j]:
                continue
            thr = lam * pw[j]
            bj = beta[j]
            if bj > 0.0:
                v = abs(r[j] - thr)
            elif bj < 0.0:
                v = abs(r[j] + thr)
            elif thr > 0.0:
                v = abs(r[j]) - thr
                if v < 0.0:
                    v = 0.0
            else:
                v = abs(r[j])
            if v > kkt:
                kkt = v
            if v > kkt_tol and not active[j]:
                active[j] = True
                grew = True
        if kkt <= kkt_tol:
            return sweeps, kkt, True
        if sweeps >= max_sweeps:
            return sweeps, kkt, False
        stalled = False
        if grew:
            act_idx = _where_true(active)
        else:
            inner_tol *= 0.25
            if inner_tol < 1e-300:
                stalled = True
        if stalled or sweeps - sweeps_mark >= _RESTART_SWEEPS:
            for j in range(p):
                active[j] = usable[j] and (beta[j] != 0.0 or pw[j] == 0.0)
            act_idx = _where_true(active)
            inner_tol = tol if tol > 1e-5 else 1e-5
            sweeps_mark = sweeps


@njit(cache=True)
def _cd_path(G, q, grid, pw, usable, max_sweeps, tol, kkt_tol):
    """Warm-started descent along a decreasing penalty grid."""
    p = G.shape[0]
    L = grid.shape[0]
    betas = np.zeros((L, p))
    sweeps = np.zeros(L, np.int64)
    kkts = np.zeros(L)
    conv = np.zeros(L, np.bool_)
    beta = np.zeros(p)
    for l in range(L):
        s, k, c = _cd_solve(
            G, q, grid[l], pw, usable, beta, max_sweeps, tol, kkt_tol
        )
        betas[l] = beta
        sweeps[l] = s
        kkts[l] = k
        conv[l] = c
    return betas, sweeps, kkts, conv
