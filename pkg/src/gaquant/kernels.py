"""Kernels and the kernel moment objects used by the local fits and the theory.

Integrals over the unit ball use iterated Gauss-Legendre rules in angular
coordinates, ``t_1 = sin(theta_1)``, ``t_2 = cos(theta_1) sin(theta_2)``, and
so on.  Polynomial-times-kernel integrands are then smooth trigonometric
polynomials in every ``theta`` and the rule converges spectrally.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.typing import NDArray

from .core import MultiIndexBasis, QuadratureError, basis_eval

DEFAULT_NODES = 32


@dataclass(frozen=True)
class SphericalKernel:
    """Spherical biweight ``c_d (1 - |t|^2)^2`` on the closed unit ball."""

    d: int
    family: str = "biweight-spherical"

    @property
    def normalizer(self) -> float:
        return math.gamma(self.d / 2 + 3) / (2 * math.pi ** (self.d / 2))

    def __call__(self, t) -> NDArray[np.float64]:
        return kernel_eval(self, t)


@dataclass(frozen=True)
class ScalarKernel:
    """One-dimensional biweight ``(15/16)(1 - t^2)^2`` on ``[-1, 1]``."""

    family: str = "biweight"
    normalizer: float = 15.0 / 16.0

    def __call__(self, t):
        return kernel_g_eval(self, t)[0]


def kernel_eval(k: SphericalKernel, t) -> NDArray[np.float64] | float:
    t = np.asarray(t, dtype=float)
    if t.shape[-1] != k.d:
        raise ValueError(f"kernel expects points of dimension {k.d}")
    r2 = np.sum(t * t, axis=-1)
    val = k.normalizer * np.clip(1.0 - r2, 0.0, None) ** 2
    return float(val) if val.ndim == 0 else val


def kernel_g_eval(k: ScalarKernel, t):
    """Return ``(K_G(t), K_G'(t), K_G''(t))``; zero outside ``[-1, 1]``."""
    t = np.asarray(t, dtype=float)
    inside = np.abs(t) <= 1.0
    s = 1.0 - t * t
    c = k.normalizer
    val = np.where(inside, c * s * s, 0.0)
    d1 = np.where(inside, -4.0 * c * t * s, 0.0)
    d2 = np.where(inside, -4.0 * c * (1.0 - 3.0 * t * t), 0.0)
    if val.ndim == 0:
        return float(val), float(d1), float(d2)
    return val, d1, d2


def scalar_moment(k: ScalarKernel, order: int) -> float:
    """``int s^order K_G(s) ds`` by Gauss-Legendre (exact for the polynomial)."""
    x, w = np.polynomial.legendre.leggauss(order // 2 + 4)
    return float(np.sum(w * x**order * kernel_g_eval(k, x)[0]))


@lru_cache(maxsize=64)
def _gl(n: int):
    return np.polynomial.legendre.leggauss(n)


def ball_rule(d: int, n: int = DEFAULT_NODES, axis: int = 0, upper: float | None = None):
    """Nodes and weights for the unit ball, optionally cut at ``t[axis] <= upper``.

    ``axis`` is 0-based.  Returns ``(nodes (m, d), weights (m,))``.
    """
    if upper is not None and upper <= -1.0:
        return np.zeros((0, d)), np.zeros(0)
    gx, gw = _gl(n)
    hi = math.pi / 2 if upper is None or upper >= 1.0 else math.asin(upper)
    lo = -math.pi / 2
    th = 0.5 * (hi - lo) * gx + 0.5 * (hi + lo)
    order = [axis] + [k for k in range(d) if k != axis]
    coords = {axis: np.sin(th)}
    weight = 0.5 * (hi - lo) * gw * np.cos(th)
    rho = np.cos(th)
    th_full = 0.5 * math.pi * gx
    w_full = 0.5 * math.pi * gw
    for k in order[1:]:
        s, c = np.sin(th_full), np.cos(th_full)
        for key in coords:
            coords[key] = np.repeat(coords[key], n)
        coords[k] = np.outer(rho, s).ravel()
        weight = np.outer(weight * rho, w_full * c).ravel()
        rho = np.outer(rho, c).ravel()
    nodes = np.column_stack([coords[k] for k in range(d)])
    return nodes, weight


def _ball_integral(fn, d: int, n: int, axis: int = 0, upper=None):
    nodes, w = ball_rule(d, n, axis, upper)
    if w.size == 0:
        return None
    return np.tensordot(w, fn(nodes), axes=(0, 0))


def _checked(fn, d, n, tol, axis=0, upper=None, what="integral"):
    a = _ball_integral(fn, d, n, axis, upper)
    b = _ball_integral(fn, d, 2 * n, axis, upper)
    if a is None:
        return None
    err = float(np.max(np.abs(a - b)))
    if err > tol * max(1.0, float(np.max(np.abs(b)))):
        raise QuadratureError(f"{what}: quadrature change {err:.3g} on doubling exceeds tol {tol:g}")
    return b


def f_k_eval(basis: MultiIndexBasis, kernel: SphericalKernel, k: int, y: float,
             nodes: int = DEFAULT_NODES) -> NDArray[np.float64]:
    """Kernel moments of ``A`` accumulated along axis ``k`` (1-based) up to ``y``.

    Equals ``1{|y| <= 1} * int_{t in ball, t_k <= y} A(t) K(t) dt``.
    """
    if not 1 <= k <= basis.d:
        raise ValueError("axis k must lie in 1..d")
    if abs(y) > 1.0:
        return np.zeros(len(basis))
    out = _ball_integral(lambda t: basis_eval(basis, t) * kernel_eval(kernel, t)[:, None],
                         basis.d, nodes, axis=k - 1, upper=y)
    return np.zeros(len(basis)) if out is None else out


def f_k_table(basis, kernel, k: int, ys, nodes: int = DEFAULT_NODES) -> NDArray[np.float64]:
    """``f_k_eval`` on many arguments; rows follow ``ys``."""
    return np.array([f_k_eval(basis, kernel, k, float(y), nodes) for y in np.ravel(ys)])


@dataclass(frozen=True, eq=False)
class MomentMatrices:
    """``q_mat = int A A^T K``; ``q_star[:, :, l] = int A A^T t_l K``; ``p_moments[:, l] = int A t_l^p K``."""

    q_mat: NDArray[np.float64]
    q_star: NDArray[np.float64]
    p_moments: NDArray[np.float64]

    @property
    def q_inv(self) -> NDArray[np.float64]:
        return np.linalg.inv(self.q_mat)


def moment_matrices(basis: MultiIndexBasis, kernel: SphericalKernel, tol: float = 1e-10,
                    nodes: int = DEFAULT_NODES) -> MomentMatrices:
    d, p = basis.d, basis.p

    def aa(t):
        a = basis_eval(basis, t)
        return (a[:, :, None] * a[:, None, :]) * kernel_eval(kernel, t)[:, None, None]

    def aat(t):
        return aa(t)[:, :, :, None] * t[:, None, None, :]

    def apk(t):
        a = basis_eval(basis, t) * kernel_eval(kernel, t)[:, None]
        return a[:, :, None] * (t**p)[:, None, :]

    q = _checked(aa, d, nodes, tol, what="Q")
    q = 0.5 * (q + q.T)
    qs = _checked(aat, d, nodes, tol, what="Q*")
    pm = _checked(apk, d, nodes, tol, what="p-th moments")
    try:
        np.linalg.cholesky(q)
    except np.linalg.LinAlgError as exc:
        raise QuadratureError("moment matrix Q is not positive definite") from exc
    return MomentMatrices(q_mat=q, q_star=qs, p_moments=pm)
