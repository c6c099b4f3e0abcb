"""Weighted local-polynomial quantile fits.

``fit_local`` minimises ``sum_i K((x - X_i)/h) rho_tau(Y_i - beta' A((X_i - x)/h))``.
The solver warm-starts with iteratively reweighted least squares on a
Huber-smoothed check loss whose smoothing width shrinks geometrically, then
finishes exactly by descending along edges of the piecewise-linear objective
from the nearest interpolating vertex.  ``solve_exact_lp`` is an independent
LP formulation kept for cross-checks.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit
from numpy.typing import NDArray
from scipy.optimize import linprog

from .core import (
    ConvergenceError,
    Dataset,
    DegenerateFitError,
    EstimationError,
    MultiIndexBasis,
    QuantileLevel,
    SolverOptions,
    basis_eval,
)
from .kernels import SphericalKernel, kernel_eval

__all__ = [
    "LocalFit",
    "SolverOptions",
    "fit_local",
    "solve_pinball",
    "solve_exact_lp",
    "local_partial",
    "pinball_objective",
]

_OK, _DEGENERATE, _MAXITER, _UNBOUNDED = 0, 1, 2, 3


@dataclass(frozen=True, eq=False)
class LocalFit:
    beta: NDArray[np.float64]
    n_effective: int
    objective: float
    converged: bool
    pivots: int = 0


def pinball_objective(residuals, weights, tau: float) -> float:
    r = np.asarray(residuals, dtype=float)
    return float(np.sum(np.asarray(weights) * r * (tau - (r < 0))))


@njit(cache=True, nogil=True)
def _objective(r, w, tau):
    s = 0.0
    for i in range(r.shape[0]):
        if r[i] >= 0.0:
            s += w[i] * tau * r[i]
        else:
            s += w[i] * (tau - 1.0) * r[i]
    return s


@njit(cache=True, nogil=True)
def _small_solve(M, b, out):
    # Gaussian elimination with partial pivoting; M and b are overwritten
    k = b.shape[0]
    for col in range(k):
        piv = col
        best = abs(M[col, col])
        for row in range(col + 1, k):
            if abs(M[row, col]) > best:
                best = abs(M[row, col])
                piv = row
        if best == 0.0:
            return False
        if piv != col:
            for c in range(k):
                tmp = M[col, c]
                M[col, c] = M[piv, c]
                M[piv, c] = tmp
            tmp = b[col]
            b[col] = b[piv]
            b[piv] = tmp
        for row in range(col + 1, k):
            f = M[row, col] / M[col, col]
            if f != 0.0:
                for c in range(col, k):
                    M[row, c] -= f * M[col, c]
                b[row] -= f * b[col]
    for row in range(k - 1, -1, -1):
        s = b[row]
        for c in range(row + 1, k):
            s -= M[row, c] * out[c]
        out[row] = s / M[row, row]
    return True


@njit(cache=True, nogil=True)
def _residuals(Z, y, beta, r):
    m, k = Z.shape
    for i in range(m):
        s = y[i]
        for a in range(k):
            s -= Z[i, a] * beta[a]
        r[i] = s


@njit(cache=True, nogil=True)
def _irls(Z, y, w, tau, start, shrink, max_outer, inner_tol, ridge):
    m, k = Z.shape
    beta = np.zeros(k)
    new = np.zeros(k)
    M = np.zeros((k, k))
    b = np.zeros(k)
    r = np.empty(m)
    wsum = 0.0
    for i in range(m):
        wsum += w[i]
        for a in range(k):
            b[a] += w[i] * Z[i, a] * y[i]
            for c in range(a, k):
                M[a, c] += w[i] * Z[i, a] * Z[i, c]
    for a in range(k):
        M[a, a] += ridge * wsum
        for c in range(a):
            M[a, c] = M[c, a]
    _small_solve(M, b, beta)
    _residuals(Z, y, beta, r)
    scale = 0.0
    for i in range(m):
        scale += w[i] * abs(r[i])
    scale /= wsum
    if scale <= 1e-300:
        return beta, r
    gam = start * scale
    for _ in range(max_outer):
        for _inner in range(8):
            for a in range(k):
                b[a] = 0.0
                for c in range(k):
                    M[a, c] = 0.0
            vsum = 0.0
            for i in range(m):
                ar = abs(r[i])
                v = w[i] / (2.0 * (ar if ar > gam else gam))
                vsum += v
                lin = (tau - 0.5) * w[i]
                for a in range(k):
                    za = Z[i, a]
                    b[a] += (v * y[i] + lin) * za
                    vz = v * za
                    for c in range(a, k):
                        M[a, c] += vz * Z[i, c]
            for a in range(k):
                M[a, a] += ridge * vsum
                for c in range(a):
                    M[a, c] = M[c, a]
            if not _small_solve(M, b, new):
                break
            step = 0.0
            big = 0.0
            for a in range(k):
                step = max(step, abs(new[a] - beta[a]))
                big = max(big, abs(new[a]))
                beta[a] = new[a]
            _residuals(Z, y, beta, r)
            if step <= inner_tol * (1.0 + big):
                break
        gam *= shrink
    return beta, r


@njit(cache=True, nogil=True)
def _start_basis(Z, r):
    m, k = Z.shape
    order = np.argsort(np.abs(r))
    basis = np.empty(k, dtype=np.int64)
    ortho = np.zeros((k, k))
    v = np.empty(k)
    found = 0
    for idx in range(m):
        i = order[idx]
        nz = 0.0
        for a in range(k):
            v[a] = Z[i, a]
            nz += v[a] * v[a]
        if nz == 0.0:
            continue
        for j in range(found):
            dot = 0.0
            for a in range(k):
                dot += ortho[j, a] * v[a]
            for a in range(k):
                v[a] -= dot * ortho[j, a]
        nv = 0.0
        for a in range(k):
            nv += v[a] * v[a]
        if nv > 1e-18 * nz:
            nv = np.sqrt(nv)
            for a in range(k):
                ortho[found, a] = v[a] / nv
            basis[found] = i
            found += 1
            if found == k:
                break
    return basis, found


@njit(cache=True, nogil=True)
def _dir(r, delta, tau, tol):
    if r > tol or (r >= -tol and delta > 0.0):
        return tau * delta
    return (tau - 1.0) * delta


@njit(cache=True, nogil=True)
def _vertex_descent(Z, y, w, tau, r0, max_pivots):
    m, k = Z.shape
    basis, found = _start_basis(Z, r0)
    beta = np.zeros(k)
    if found < k:
        return beta, _DEGENERATE, 0
    in_basis = np.zeros(m, dtype=np.bool_)
    for j in range(k):
        in_basis[basis[j]] = True
    ymax = 0.0
    wsum = 0.0
    for i in range(m):
        ymax = max(ymax, abs(y[i]))
        wsum += w[i]
    tol_r = 1e-11 * (1.0 + ymax)
    tol_s = 1e-11 * wsum
    Zb = np.empty((k, k))
    yb = np.empty(k)
    binv = np.empty((k, k))
    col = np.empty(k)
    e = np.empty(k)
    r = np.empty(m)
    c = np.empty(m)
    ts = np.empty(m)
    idx = np.empty(m, dtype=np.int64)
    for it in range(max_pivots):
        for j in range(k):
            for a in range(k):
                Zb[j, a] = Z[basis[j], a]
            yb[j] = y[basis[j]]
        if not _small_solve(Zb, yb, beta):
            return beta, _DEGENERATE, it
        for j in range(k):
            for a in range(k):
                Zb[j, a] = Z[basis[j], a]
                e[a] = 0.0
            e[j] = 1.0
        for j in range(k):
            for a in range(k):
                e[a] = 1.0 if a == j else 0.0
                for q in range(k):
                    Zb[a, q] = Z[basis[a], q]
            _small_solve(Zb, e, col)
            for a in range(k):
                binv[a, j] = col[a]
        _residuals(Z, y, beta, r)
        for j in range(k):
            r[basis[j]] = 0.0
        best = -tol_s
        best_j = -1
        best_s = 0.0
        for j in range(k):
            sp = w[basis[j]] * tau
            sm = w[basis[j]] * (1.0 - tau)
            for i in range(m):
                if in_basis[i]:
                    continue
                ci = 0.0
                for a in range(k):
                    ci += Z[i, a] * binv[a, j]
                sp += w[i] * _dir(r[i], ci, tau, tol_r)
                sm += w[i] * _dir(r[i], -ci, tau, tol_r)
            if sp < best:
                best, best_j, best_s = sp, j, 1.0
            if sm < best:
                best, best_j, best_s = sm, j, -1.0
        if best_j < 0:
            return beta, _OK, it
        cnorm = 0.0
        for i in range(m):
            ci = 0.0
            for a in range(k):
                ci -= best_s * Z[i, a] * binv[a, best_j]
            c[i] = ci
            cnorm = max(cnorm, abs(ci))
        nb = 0
        for i in range(m):
            if in_basis[i] or abs(r[i]) <= tol_r or abs(c[i]) <= 1e-12 * cnorm:
                continue
            t = r[i] / c[i]
            if t > 0.0:
                ts[nb] = t
                idx[nb] = i
                nb += 1
        if nb == 0:
            return beta, _UNBOUNDED, it
        order = np.argsort(ts[:nb])
        slope = best
        enter = -1
        for q in range(nb):
            i = idx[order[q]]
            slope += w[i] * abs(c[i])
            if slope >= 0.0:
                enter = i
                break
        if enter < 0:
            return beta, _UNBOUNDED, it
        in_basis[basis[best_j]] = False
        basis[best_j] = enter
        in_basis[enter] = True
    return beta, _MAXITER, max_pivots


def solve_pinball(design, responses, weights, tau: float,
                  opts: SolverOptions = SolverOptions()):
    """Minimise ``sum w_i rho_tau(y_i - z_i' beta)``; returns ``(beta, objective, pivots)``.

    Raises DegenerateFitError when the design has fewer than ``k`` linearly
    independent rows, and ConvergenceError when the pivot cap is hit.
    """
    Z = np.ascontiguousarray(design, dtype=float)
    y = np.ascontiguousarray(responses, dtype=float)
    w = np.ascontiguousarray(weights, dtype=float)
    if Z.shape[0] < Z.shape[1]:
        raise DegenerateFitError(f"{Z.shape[0]} points for {Z.shape[1]} coefficients")
    _, r0 = _irls(Z, y, w, tau, opts.smoothing_start, opts.smoothing_shrink,
                  opts.max_outer, opts.inner_tol, opts.ridge)
    beta, status, pivots = _vertex_descent(Z, y, w, tau, r0, opts.max_pivots)
    if status == _DEGENERATE:
        raise DegenerateFitError("local design matrix is rank deficient")
    obj = _objective(y - Z @ beta, w, tau)
    if status == _MAXITER:
        raise ConvergenceError(f"no optimal vertex after {pivots} pivots", last_iterate=beta)
    if status == _UNBOUNDED:
        raise EstimationError("check-loss objective is unbounded along an edge")
    return beta, obj, pivots


def local_window(data: Dataset, x, h: float, exclude: Optional[int] = None):
    """Indices and kernel weights of the points strictly inside the ``h``-ball around ``x``."""
    idx = np.asarray(data.tree.query_ball_point(np.asarray(x, dtype=float), h), dtype=np.int64)
    if exclude is not None and idx.size:
        idx = idx[idx != exclude]
    idx.sort()
    z = (data.x[idx] - x) / h
    k = kernel_eval(SphericalKernel(data.d), z) if idx.size else np.zeros(0)
    keep = k > 0
    return idx[keep], z[keep], k[keep]


def fit_local(data: Dataset, x, h: float, basis: MultiIndexBasis, level: QuantileLevel,
              opts: SolverOptions = SolverOptions(), exclude: Optional[int] = None) -> LocalFit:
    """Local polynomial ``tau``-quantile fit at ``x``.

    The weights are the raw kernel values; dividing them by their sum would
    rescale the objective without moving the minimiser.  ``exclude`` drops one
    row (leave-one-out).
    """
    x = np.asarray(x, dtype=float)
    if not h > 0:
        raise ValueError("h must be positive")
    if not np.all(np.isfinite(x)):
        raise ValueError("fit point must be finite")
    if exclude is not None and not 0 <= exclude < data.n:
        raise ValueError("exclude index out of range")
    idx, z, kw = local_window(data, x, h, exclude)
    if idx.size < len(basis):
        raise DegenerateFitError(
            f"only {idx.size} points in the h-window at {np.round(x, 6).tolist()}, "
            f"need {len(basis)}")
    design = basis_eval(basis, z)
    beta, obj, pivots = solve_pinball(design, data.y[idx], kw, level.tau, opts)
    return LocalFit(beta=beta, n_effective=int(idx.size), objective=obj, converged=True,
                    pivots=pivots)


def local_partial(fit: LocalFit, basis: MultiIndexBasis, u: int, h: float) -> float:
    """Slope estimate along 1-based axis ``u``: ``beta[e_u] / h``."""
    if basis.p < 2:
        raise ValueError("slopes need p >= 2")
    return float(fit.beta[basis.unit_positions[u]] / h)


def solve_exact_lp(weights, responses, design_rows, tau: float) -> NDArray[np.float64]:
    """Exact weighted check-loss minimiser via the split-residual LP (HiGHS dual simplex)."""
    Z = np.atleast_2d(np.asarray(design_rows, dtype=float))
    y = np.asarray(responses, dtype=float)
    w = np.asarray(weights, dtype=float)
    m, k = Z.shape
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    cost = np.concatenate([np.zeros(k), tau * w, (1.0 - tau) * w])
    a_eq = np.hstack([Z, np.eye(m), -np.eye(m)])
    bounds = [(None, None)] * k + [(0, None)] * (2 * m)
    res = linprog(cost, A_eq=a_eq, b_eq=y, bounds=bounds, method="highs-ds",
                  options={"primal_feasibility_tolerance": 1e-10,
                           "dual_feasibility_tolerance": 1e-10})
    if res.status != 0:
        raise EstimationError(f"LP solve failed: {res.message}")
    return res.x[:k]
