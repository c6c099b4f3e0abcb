"""Closed-form asymptotic quantities evaluated numerically for a known model.

Everything here is theory-side: the model supplies the covariate density,
the error density at zero and analytic derivatives of ``q``; integrals are
tensor Gauss-Legendre rules.  The functions mirror the estimator's
conventions: 1-based axes, the box of the fit, anchors ``x_k0`` and the
quadratic-bump weights on the box sides.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from itertools import product
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy import stats

from .core import (
    Box,
    ConfigError,
    Dataset,
    EstimationError,
    FitConfig,
    MultiIndexBasis,
    QuadratureError,
    QuantileLevel,
    basis_eval,
)
from .dgp import IdentifiedModel, TrueModel, copula_density, covariate_draws, grad_log_density
from .kernels import (
    ScalarKernel,
    SphericalKernel,
    ball_rule,
    f_k_table,
    kernel_eval,
    moment_matrices,
    scalar_moment,
)
from .lpq import fit_local, local_window
from .marginals import WeightFn

DENSITY_FLOOR = 1e-12
Z_CLIP = 6.5

__all__ = [
    "AsymptoticReport",
    "BahadurSummary",
    "optimal_h",
    "optimal_h_g",
    "partial_q",
    "slope_functionals",
    "sigma_u_squared",
    "bias_constant",
    "bahadur_residual",
    "q0_density",
    "a_v_constant",
    "asymptotic_report",
]


def _raw(model) -> TrueModel:
    return model.model if isinstance(model, IdentifiedModel) else model


def optimal_h(n: int, p: int, c: float = 1.0) -> float:
    if n < 2:
        raise ConfigError("n must be at least 2")
    return c * n ** (-1.0 / (2 * p + 1))


def optimal_h_g(n: int, a_v: float, f_v: float, level) -> float:
    """AMSE-optimal link bandwidth ``(alpha (1 - alpha) / (a_v^2 f_v))^(1/5) n^(-1/5)``."""
    alpha = level.alpha if isinstance(level, QuantileLevel) else float(level)
    if a_v == 0:
        raise EstimationError("bias-free point, AMSE rule undefined (a_v = 0)")
    if not f_v > 0:
        raise ConfigError("f_v must be positive")
    return (alpha * (1 - alpha) / (a_v**2 * f_v)) ** 0.2 * n ** (-0.2)


def _set_partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]
        yield [[first]] + part


def partial_q(model, x, lam: Sequence[int]) -> NDArray[np.float64]:
    """Mixed partial ``d^lam q`` of ``q(x) = G(sum_k q_k(x_k))`` (total order <= 3).

    Uses Faa di Bruno over set partitions of the differentiation variables;
    blocks mixing two axes vanish because the index is additive.
    """
    m = _raw(model)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    lam = [int(v) for v in lam]
    order = sum(lam)
    if order > 3:
        raise ValueError("derivatives of q are available up to total order 3")
    s = m.index(x)
    if order == 0:
        return m.link(s)
    axes = [k for k, cnt in enumerate(lam) for _ in range(cnt)]
    out = np.zeros(x.shape[0])
    for part in _set_partitions(list(range(order))):
        blocks = [[axes[i] for i in b] for b in part]
        if any(len(set(b)) > 1 for b in blocks):
            continue
        term = m.link.derivative(s, len(blocks))
        for b in blocks:
            term = term * m.components[b[0]].derivative(x[:, b[0]], len(b))
        out = out + term
    return out


def _unit(d: int, k: int):
    lam = [0] * d
    lam[k] = 1
    return lam


def _gl(n: int, a: float, b: float):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


def _tensor(rules):
    if not rules:
        return np.zeros((1, 0)), np.ones(1)
    pts = np.array(list(product(*[r[0] for r in rules])))
    wts = np.prod(np.array(list(product(*[r[1] for r in rules]))), axis=1)
    return pts, wts


def slope_functionals(model, u: int, t1, tu, box: Box, nodes: int = 16):
    """Population ``(D_u, D_1u)`` at matching arrays ``t1`` and ``tu``.

    For ``d = 2`` these are the partial derivatives of ``q``; otherwise they
    integrate the partials against the density of the remaining covariates
    over their box.
    """
    m = _raw(model)
    d = m.d
    t1 = np.atleast_1d(np.asarray(t1, dtype=float))
    tu = np.atleast_1d(np.asarray(tu, dtype=float))
    rest = [k for k in range(d) if k not in (0, u - 1)]
    pts, wts = _tensor([_gl(nodes, box.lower[k], box.upper[k]) for k in rest])
    full = np.empty((t1.size, pts.shape[0], d))
    full[:, :, 0] = t1[:, None]
    full[:, :, u - 1] = tu[:, None]
    for j, k in enumerate(rest):
        full[:, :, k] = pts[None, :, j]
    flat = full.reshape(-1, d)
    dens = copula_density(m, flat, rest).reshape(t1.size, -1) if rest else 1.0
    du = partial_q(m, flat, _unit(d, u - 1)).reshape(t1.size, -1)
    d1 = partial_q(m, flat, _unit(d, 0)).reshape(t1.size, -1)
    return (du * dens) @ wts, (d1 * dens) @ wts


def _error_density_zero(m: TrueModel):
    if m.error.family == "none":
        return math.inf
    return float(m.error.pdf(0.0, m.tau))


def _f_quadratic(basis, kernel, k: int, cvecs, nodes: int):
    """``int_{-1}^{1} (c' Q^{-1} f_k(s))^2 ds`` for each row of ``cvecs``."""
    mm = moment_matrices(basis, kernel)
    s, ws = _gl(nodes, -1.0, 1.0)
    proj = f_k_table(basis, kernel, k, s) @ mm.q_inv.T
    vals = cvecs @ proj.T
    return (vals**2) @ ws


def _cvec(basis: MultiIndexBasis, lead: int, other: int, ratio):
    ratio = np.atleast_1d(ratio)
    c = np.zeros((ratio.size, len(basis)))
    c[:, basis.unit_positions[lead]] = 1.0
    c[:, basis.unit_positions[other]] = -ratio
    return c


def _density_checked(m, pts):
    p = copula_density(m, pts)
    if np.any(p < DENSITY_FLOOR):
        raise EstimationError("covariate density below floor inside the integration domain")
    return p


def sigma_u_squared(model, u: int, x_u: float, basis: MultiIndexBasis, box: Box, anchors,
                    nodes: int = 32, kernel: Optional[SphericalKernel] = None,
                    w1: Optional[WeightFn] = None, w2: Optional[WeightFn] = None) -> float:
    """Asymptotic variance of ``sqrt(n h) (q_u_hat(x_u) - q_u(x_u))``.

    ``model`` should be identified with the same weights, box and anchors
    (``q_1`` enters only through ratios and through ``c``).  The result is
    zero for noiseless models.
    """
    m = _raw(model)
    d = m.d
    if not 1 <= u <= d:
        raise ValueError(f"u must lie in 1..{d}")
    kernel = kernel or SphericalKernel(d)
    w1 = w1 or WeightFn(box.lower[0], box.upper[0])
    w2 = w2 or WeightFn(box.lower[1], box.upper[1])
    g0 = _error_density_zero(m)
    if math.isinf(g0):
        return 0.0
    anchors = np.asarray(anchors, dtype=float)
    tau = m.tau
    scale = tau * (1 - tau) / g0**2
    if u >= 2:
        return scale * _sigma_upper(m, u, x_u, basis, box, anchors, nodes, kernel, w1)
    return scale * _sigma_first(m, x_u, basis, box, anchors, nodes, kernel, w1, w2)


def _points(d, fixed: dict, rest_rules):
    pts, wts = _tensor(rest_rules[1])
    out = np.empty((pts.shape[0], d))
    for k, v in fixed.items():
        out[:, k] = v
    for j, k in enumerate(rest_rules[0]):
        out[:, k] = pts[:, j]
    return out, wts


def _margin(m, pts, axes):
    return copula_density(m, pts, axes) if axes else np.ones(pts.shape[0])


def _sigma_upper(m, u, x_u, basis, box, anchors, nodes, kernel, w1):
    d = m.d
    ubar = [k for k in range(d) if k not in (0, u - 1)]
    t1, wt1 = _gl(nodes, box.lower[0], box.upper[0])
    total = 0.0
    rules = (ubar, [_gl(nodes, box.lower[k], box.upper[k]) for k in ubar])
    for xs in (anchors[u - 1], x_u):
        du, d1 = slope_functionals(m, u, t1, np.full_like(t1, xs), box, nodes)
        quad = _f_quadratic(basis, kernel, u, _cvec(basis, u, 1, du / d1), nodes)
        for i in range(t1.size):
            pts, wts = _points(d, {0: t1[i], u - 1: xs}, rules)
            dens = _density_checked(m, pts)
            inner = np.sum(wts * _margin(m, pts, ubar) ** 2 / dens)
            total += wt1[i] * w1(t1[i]) ** 2 / d1[i] ** 2 * inner * quad[i]
    lo, hi = sorted((float(anchors[u - 1]), float(x_u)))
    if hi > lo:
        tu, wtu = _gl(nodes, lo, hi)
        for k in ubar:
            others = [j for j in ubar if j != k]
            orules = (others, [_gl(nodes, box.lower[j], box.upper[j]) for j in others])
            for a in range(t1.size):
                du, d1 = slope_functionals(m, u, np.full_like(tu, t1[a]), tu, box, nodes)
                quad = _f_quadratic(basis, kernel, k + 1, _cvec(basis, u, 1, du / d1), nodes)
                for b in range(tu.size):
                    inner = 0.0
                    for edge in (box.lower[k], box.upper[k]):
                        pts, wts = _points(d, {0: t1[a], u - 1: tu[b], k: edge}, orules)
                        dens = _density_checked(m, pts)
                        inner += np.sum(wts * _margin(m, pts, ubar) ** 2 / dens)
                    total += (wt1[a] * wtu[b] * w1(t1[a]) ** 2 / d1[b] ** 2 * inner * quad[b])
    return total


def population_c(model, box: Box, nodes: int = 32, w1=None, w2=None) -> float:
    """``int w1 [int (D_12 / D_2) w2 dt2]^(-1) dt1`` for the model."""
    m = _raw(model)
    w1 = w1 or WeightFn(box.lower[0], box.upper[0])
    w2 = w2 or WeightFn(box.lower[1], box.upper[1])
    t1, wt1 = _gl(nodes, box.lower[0], box.upper[0])
    t2, wt2 = _gl(nodes, box.lower[1], box.upper[1])
    g1, g2 = np.meshgrid(t1, t2, indexing="ij")
    d2, d12 = slope_functionals(m, 2, g1.ravel(), g2.ravel(), box, nodes)
    inner = (d12 / d2).reshape(nodes, nodes) @ (wt2 * w2(t2))
    return float(np.sum(wt1 * w1(t1) / inner))


def _partial_c(m, x1, x10, box, nodes, w2):
    lo, hi = sorted((x10, x1))
    if hi == lo:
        return 0.0
    t1, wt1 = _gl(nodes, lo, hi)
    t2, wt2 = _gl(nodes, box.lower[1], box.upper[1])
    g1, g2 = np.meshgrid(t1, t2, indexing="ij")
    d2, d12 = slope_functionals(m, 2, g1.ravel(), g2.ravel(), box, nodes)
    val = float(wt1 @ ((d12 / d2).reshape(nodes, nodes) @ (wt2 * w2(t2))))
    return val if x1 >= x10 else -val


def _sigma_first(m, x1, basis, box, anchors, nodes, kernel, w1, w2):
    d = m.d
    bar2 = list(range(2, d))
    c = population_c(m, box, nodes, w1, w2)
    t2, wt2 = _gl(nodes, box.lower[1], box.upper[1])
    rules = (bar2, [_gl(nodes, box.lower[k], box.upper[k]) for k in bar2])
    total = 0.0
    for xs in (x1, anchors[0]):
        d2, d12 = slope_functionals(m, 2, np.full_like(t2, xs), t2, box, nodes)
        quad = _f_quadratic(basis, kernel, 1, _cvec(basis, 1, 2, d12 / d2), nodes)
        for i in range(t2.size):
            pts, wts = _points(d, {0: xs, 1: t2[i]}, rules)
            dens = _density_checked(m, pts)
            inner = np.sum(wts * _margin(m, pts, bar2) ** 2 / dens)
            total += c**2 * wt2[i] * w2(t2[i]) ** 2 / d2[i] ** 2 * inner * quad[i]
    lo, hi = sorted((float(anchors[0]), float(x1)))
    if hi > lo and bar2:
        c1 = _partial_c(m, x1, float(anchors[0]), box, nodes, w2)
        t1, wt1 = _gl(nodes, lo, hi)
        for k in bar2:
            others = [j for j in bar2 if j != k]
            orules = (others, [_gl(nodes, box.lower[j], box.upper[j]) for j in others])
            for a in range(t1.size):
                d2, d12 = slope_functionals(m, 2, np.full_like(t2, t1[a]), t2, box, nodes)
                quad = _f_quadratic(basis, kernel, k + 1, _cvec(basis, 1, 2, d12 / d2), nodes)
                front = (c - c1 * w1(t1[a])) ** 2
                for b in range(t2.size):
                    inner = 0.0
                    for edge in (box.lower[k], box.upper[k]):
                        pts, wts = _points(d, {0: t1[a], 1: t2[b], k: edge}, orules)
                        dens = _density_checked(m, pts)
                        inner += np.sum(wts * _margin(m, pts, bar2) ** 2 / dens)
                    total += (wt1[a] * wt2[b] * front * w2(t2[b]) ** 2 / d2[b] ** 2
                              * inner * quad[b])
    return total


def _b2(m, basis, mm, pos, pts):
    """``B_2`` at rows ``pts`` (axis-wise contraction of the p-th derivatives)."""
    p, d = basis.p, m.d
    dens = copula_density(m, pts)
    if np.any(dens < DENSITY_FLOOR):
        raise EstimationError("g1 below floor where the bias integrand is evaluated")
    glog = grad_log_density(m, pts)
    qp = np.column_stack([partial_q(m, pts, [p if j == k else 0 for j in range(d)])
                          for k in range(d)])
    lead = mm.p_moments @ qp.T
    mix = np.einsum("abm,rm->rab", mm.q_star, glog)
    vec = np.einsum("rab,br->ra", mix, lead)
    return (vec @ mm.q_inv[pos]) / math.factorial(p)


def bias_constant(model, u: int, basis: MultiIndexBasis, box: Box, anchors,
                  x_u: Optional[float] = None, draws: int = 10_000, seed: int = 0,
                  nodes: int = 16, kernel: Optional[SphericalKernel] = None):
    """Bias constant ``B_1u`` and its Monte Carlo standard error.

    ``B_2u`` is integrated over ``t1`` in ``[a1, b1]`` and ``tu`` from the
    anchor to ``x_u`` (default ``b_u``), at covariates whose remaining
    coordinates are drawn from the stationary law; rows outside the box
    contribute zero.  With ``d = 2`` the integral is deterministic and the
    standard error is zero.  For ``u = 1`` the roles of axes 1 and 2 are
    exchanged.
    """
    if basis.p > 3:
        raise ValueError("bias constants need p <= 3")
    m = _raw(model)
    d = m.d
    kernel = kernel or SphericalKernel(d)
    mm = moment_matrices(basis, kernel)
    anchors = np.asarray(anchors, dtype=float)
    if u >= 2:
        lead_axis, free_axis = u - 1, 0
    else:
        lead_axis, free_axis = 0, 1
    x_u = float(box.upper[lead_axis]) if x_u is None else float(x_u)
    ta, wa = _gl(nodes, box.lower[free_axis], box.upper[free_axis])
    lo, hi = sorted((float(anchors[lead_axis]), x_u))
    if hi == lo:
        return 0.0, 0.0
    tb, wb = _gl(nodes, lo, hi)
    sign = 1.0 if x_u >= anchors[lead_axis] else -1.0
    ga, gb = np.meshgrid(ta, tb, indexing="ij")
    wts = (np.outer(wa, wb)).ravel() * sign
    pos = basis.unit_positions[lead_axis + 1]
    rest = [k for k in range(d) if k not in (free_axis, lead_axis)]

    def integral(xbar):
        pts = np.empty((ga.size, d))
        pts[:, free_axis] = ga.ravel()
        pts[:, lead_axis] = gb.ravel()
        for k in rest:
            pts[:, k] = xbar[k]
        return float(wts @ _b2(m, basis, mm, pos, pts))

    if not rest:
        return integral(np.zeros(d)), 0.0
    rng = np.random.default_rng(seed)
    xs = covariate_draws(m, draws, rng)
    inside = box.contains(xs, axes=rest)
    vals = np.array([integral(x) if ok else 0.0 for x, ok in zip(xs, inside)])
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(draws))


@dataclass(frozen=True)
class BahadurSummary:
    probes: list
    max_abs_residual: float
    max_abs_leading: float
    median_ratio: float


def _true_beta(model, x, basis: MultiIndexBasis, h: float):
    out = np.empty(len(basis))
    for j, lam in enumerate(basis.indices):
        fact = np.prod([math.factorial(v) for v in lam])
        out[j] = h ** sum(lam) * float(partial_q(model, x, lam)[0]) / fact
    return out


def _q_n(model, x, basis, h, nodes=24):
    m = _raw(model)
    g0 = _error_density_zero(m)
    nodes_z, w = ball_rule(m.d, nodes)
    a = basis_eval(basis, nodes_z)
    kz = kernel_eval(SphericalKernel(m.d), nodes_z)
    dens = copula_density(m, x[None, :] + h * nodes_z) * g0
    return (a * (w * kz * dens)[:, None]).T @ a


def bahadur_residual(data: Dataset, config: FitConfig, probe_points, model) -> BahadurSummary:
    """Compare ``beta_hat - beta`` with its Bahadur leading term at each probe.

    The leading term is ``Q_n^{-1} / (n h^d) sum_i K_i A_i (tau - 1{Y_i <= beta' A_i})``
    with ``Q_n = int K A A' g1(x + h z) dz``.  For noiseless models the error
    density is infinite and the leading term is zero.
    """
    m = _raw(model)
    basis, h, tau = config.basis, config.h, config.level.tau
    probes = []
    for x in np.atleast_2d(np.asarray(probe_points, dtype=float)):
        fit = fit_local(data, x, h, basis, config.level, config.solver)
        beta = _true_beta(m, x, basis, h)
        idx, z, kw = local_window(data, x, h)
        a = basis_eval(basis, z)
        score = (a * (kw * (tau - (data.y[idx] <= a @ beta)))[:, None]).sum(axis=0)
        if math.isinf(_error_density_zero(m)):
            leading = np.zeros(len(basis))
        else:
            qn = _q_n(m, x, basis, h)
            leading = np.linalg.solve(qn, score) / (data.n * h**data.d)
        resid = fit.beta - beta - leading
        probes.append({"x": x.tolist(), "beta_hat": fit.beta.tolist(), "beta": beta.tolist(),
                       "leading": leading.tolist(), "residual": resid.tolist(),
                       "max_abs_residual": float(np.max(np.abs(resid))),
                       "max_abs_leading": float(np.max(np.abs(leading)))})
    res = np.array([p["max_abs_residual"] for p in probes])
    lead = np.array([p["max_abs_leading"] for p in probes])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(lead > 0, res / lead, np.where(res > 0, np.inf, 0.0))
    return BahadurSummary(probes=probes, max_abs_residual=float(res.max()),
                          max_abs_leading=float(lead.max()), median_ratio=float(np.median(ratio)))


def _invert(fn, target, lo, hi, iters: int = 80):
    """Vectorised bisection for an increasing ``fn`` on ``[lo, hi]``."""
    target = np.asarray(target, dtype=float)
    a = np.full(target.shape, lo, dtype=float)
    b = np.full(target.shape, hi, dtype=float)
    for _ in range(iters):
        mid = 0.5 * (a + b)
        below = fn(mid) < target
        a = np.where(below, mid, a)
        b = np.where(below, b, mid)
    return 0.5 * (a + b)


def _monotone(comp, name):
    xs = np.linspace(0.0, 1.0, 2001)
    s = comp.derivative(xs, 1)
    if np.any(s == 0) or np.any(np.sign(s) != np.sign(s[0])):
        raise EstimationError(f"{name} is not strictly monotone on [0, 1]")
    return 1.0 if s[0] > 0 else -1.0


def q0_range(model):
    m = _raw(model)
    ends = np.array([[c(0.0), c(1.0)] for c in m.components])
    return float(ends.min(axis=1).sum()), float(ends.max(axis=1).sum())


def q0_density(model, v, nodes: int = 128) -> float:
    """Density of ``q0(X) = sum_k q_k(X_k)`` at ``v`` under the stationary law.

    The last coordinate is solved from ``q0 = v``; the first runs over the
    interval where that solution stays in ``[0, 1]``, mapped through the
    normal CDF so nodes cluster at both ends.  Middle coordinates use tensor
    Gauss-Legendre over ``[0, 1]``.
    """
    m = _raw(model)
    d = m.d
    first, last = m.components[0], m.components[-1]
    s1, sd = _monotone(first, "q_1"), _monotone(last, f"q_{d}")
    f1 = lambda x: s1 * first(x)
    fd = lambda x: sd * last(x)
    qd_lo, qd_hi = sorted((float(last(0.0)), float(last(1.0))))
    q1_lo, q1_hi = sorted((float(first(0.0)), float(first(1.0))))
    mid, mw = _tensor([_gl(nodes // 2, 0.0, 1.0) for _ in range(d - 2)])
    total = 0.0
    for row, wrow in zip(mid, mw):
        shift = sum(m.components[k + 1](row[k]) for k in range(d - 2))
        lo = max(v - shift - qd_hi, q1_lo)
        hi = min(v - shift - qd_lo, q1_hi)
        if hi <= lo:
            continue
        ends = _invert(f1, s1 * np.array([lo, hi]), 0.0, 1.0)
        a, b = sorted(ends)
        # the copula density has power-type behaviour at both ends; cluster nodes there
        z1, w = _gl(nodes, -Z_CLIP, Z_CLIP)
        x1 = a + (b - a) * stats.norm.cdf(z1)
        w = (b - a) * w * stats.norm.pdf(z1)
        xd = _invert(fd, sd * (v - shift - first(x1)), 0.0, 1.0)
        pts = np.empty((nodes, d))
        pts[:, 0] = x1
        pts[:, 1:d - 1] = row
        pts[:, d - 1] = xd
        total += wrow * float(np.sum(w * copula_density(m, pts) / np.abs(last.derivative(xd, 1))))
    return total


def a_v_constant(model, v: float, kernel_g: Optional[ScalarKernel] = None,
                 step: Optional[float] = None) -> float:
    """Link bias constant ``a(v)`` by central differences in ``v``.

    The conditional error density given ``q0 = v`` is the model's error
    density (errors are independent of the covariates); the difference step
    defaults to ``1e-4`` of the range of ``q0``.
    """
    m = _raw(model)
    kernel_g = kernel_g or ScalarKernel()
    lo, hi = q0_range(m)
    step = 1e-4 * (hi - lo) if step is None else step
    mu2 = scalar_moment(kernel_g, 2)
    tau = m.tau
    cond = lambda y, z: float(m.error.pdf(y, tau))
    fv = q0_density(m, v)
    if fv < 1e-10:
        raise EstimationError(f"f_q0({v:g}) = {fv:.3g} is below the floor")
    hfun = lambda z: cond(0.0, z) * q0_density(m, z) * float(m.link.derivative(z, 1))
    first = (hfun(v + step) - hfun(v - step)) / (2 * step)
    fprime = (q0_density(m, v + step) - q0_density(m, v - step)) / (2 * step)
    dy = lambda z: (cond(step, z) - cond(-step, z)) / (2 * step)
    mixed = (dy(v + step) - dy(v - step)) / (2 * step)
    return mu2 / fv * (first + fprime * mixed)


@dataclass
class AsymptoticReport:
    u: int
    x_u: float
    bias_const: float
    bias_se: float
    variance: float
    h_opt: float
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def asymptotic_report(model, u: int, x_u: float, config: FitConfig, n: int,
                      c: float = 1.0, draws: int = 10_000, seed: int = 0,
                      nodes: int = 32) -> AsymptoticReport:
    var = sigma_u_squared(model, u, x_u, config.basis, config.box, config.anchors, nodes)
    bias, se = bias_constant(model, u, config.basis, config.box, config.anchors, x_u=x_u,
                             draws=draws, seed=seed)
    if var < 0 or not np.isfinite(var):
        raise QuadratureError("variance evaluated to a negative or non-finite value")
    return AsymptoticReport(u=u, x_u=float(x_u), bias_const=bias, bias_se=se, variance=var,
                            h_opt=optimal_h(n, config.p, c),
                            diagnostics={"n": n, "c": c, "p": config.p, "nodes": nodes,
                                         "draws": draws, "box": config.box.to_dict(),
                                         "anchors": config.anchors.tolist()})
