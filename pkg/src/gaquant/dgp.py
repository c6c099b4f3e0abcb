"""Synthetic stationary data with known conditional quantiles.

Covariates come from a latent Gaussian VAR(1) with diagonal coefficient
``phi`` and stationary correlation matrix ``R`` (unit diagonal, constant
off-diagonal ``rho``), pushed through the standard normal CDF, so each
coordinate is marginally uniform on ``[0, 1]``.  The response is
``Y = G(sum_u q_u(X_u)) + eps`` with ``eps`` independent of the covariates
and shifted so that its ``tau``-quantile is exactly zero.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy import stats

from .core import ConfigError, Dataset, EstimationError

__all__ = [
    "Component",
    "Link",
    "ErrorLaw",
    "TrueModel",
    "IdentifiedModel",
    "simulate",
    "identify_normalize",
    "true_quantile",
    "multiplicative_model",
    "multiplicative_value",
    "copula_density",
    "grad_log_density",
    "covariate_draws",
]

COMPONENT_FAMILIES = ("linear", "sine_bump", "cubic", "log_of")
LINK_FAMILIES = ("identity", "exp", "logistic", "compose_exp")
ERROR_FAMILIES = ("gaussian", "t3", "none")


@dataclass(frozen=True)
class Component:
    """``q(x) = scale * base(x) + shift`` for a base curve from a fixed family.

    Families and their parameters:

    linear
        ``base(x) = x``.
    sine_bump
        ``base(x) = x + b sin(2 pi x) / (2 pi)``; monotone for ``|b| < 1``.
    cubic
        ``base(x) = (x - c)^3 + a (x - c)``.
    log_of
        ``base(x) = log(inner(x))`` for a positive ``inner`` component.
    """

    family: str = "linear"
    params: dict = field(default_factory=dict)
    scale: float = 1.0
    shift: float = 0.0
    inner: Optional["Component"] = None

    def __post_init__(self):
        if self.family not in COMPONENT_FAMILIES:
            raise ConfigError(f"unknown component family {self.family!r}")
        if (self.family == "log_of") != (self.inner is not None):
            raise ConfigError("log_of needs an inner component and only log_of takes one")

    def _base(self, x, order: int):
        p = self.params
        if self.family == "linear":
            return x if order == 0 else (np.ones_like(x) if order == 1 else np.zeros_like(x))
        if self.family == "sine_bump":
            b, w = p.get("b", 0.5), 2.0 * math.pi
            return [x + b * np.sin(w * x) / w, 1.0 + b * np.cos(w * x),
                    -w * b * np.sin(w * x), -w * w * b * np.cos(w * x)][order]
        if self.family == "cubic":
            c, a = p.get("c", 0.5), p.get("a", 0.0)
            s = x - c
            return [s**3 + a * s, 3 * s**2 + a, 6 * s, 6.0 * np.ones_like(x)][order]
        f = [self.inner.derivative(x, k) for k in range(order + 1)]
        if order == 0:
            return np.log(f[0])
        r1 = f[1] / f[0]
        if order == 1:
            return r1
        if order == 2:
            return f[2] / f[0] - r1**2
        return f[3] / f[0] - 3.0 * r1 * f[2] / f[0] + 2.0 * r1**3

    def derivative(self, x, order: int = 0):
        """``d^order q / dx^order`` for ``order`` in 0..3."""
        if not 0 <= order <= 3:
            raise ValueError("derivatives are available up to order 3")
        x = np.asarray(x, dtype=float)
        out = self.scale * self._base(x, order)
        return out + self.shift if order == 0 else out

    def __call__(self, x):
        return self.derivative(x, 0)

    def to_dict(self) -> dict:
        out = {"family": self.family, "params": dict(self.params), "scale": self.scale,
               "shift": self.shift}
        if self.inner is not None:
            out["inner"] = self.inner.to_dict()
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "Component":
        inner = obj.get("inner")
        return cls(family=obj.get("family", "linear"), params=dict(obj.get("params", {})),
                   scale=float(obj.get("scale", 1.0)), shift=float(obj.get("shift", 0.0)),
                   inner=None if inner is None else cls.from_dict(inner))


@dataclass(frozen=True)
class Link:
    """``G(v) = g(pre_scale * v + pre_shift)``.

    ``g`` is the identity, ``exp``, the scaled logistic ``L / (1 + exp(-u / s))``,
    or ``u -> inner(exp(u))`` (``compose_exp``), which turns a product of
    positive factors into a sum of logs.
    """

    family: str = "identity"
    params: dict = field(default_factory=dict)
    pre_scale: float = 1.0
    pre_shift: float = 0.0
    inner: Optional["Link"] = None

    def __post_init__(self):
        if self.family not in LINK_FAMILIES:
            raise ConfigError(f"unknown link family {self.family!r}")
        if (self.family == "compose_exp") != (self.inner is not None):
            raise ConfigError("compose_exp needs an inner link and only compose_exp takes one")
        if self.pre_scale == 0:
            raise ConfigError("pre_scale must be nonzero")

    def _outer(self, u, order: int):
        if self.family == "identity":
            return u if order == 0 else (np.ones_like(u) if order == 1 else np.zeros_like(u))
        if self.family == "exp":
            return np.exp(u)
        if self.family == "logistic":
            big, s = self.params.get("L", 1.0), self.params.get("s", 1.0)
            sg = 0.5 * (1.0 + np.tanh(0.5 * u / s))
            base = sg * (1.0 - sg)
            return [big * sg, big * base / s, big * base * (1 - 2 * sg) / s**2,
                    big * base * (1 - 6 * sg + 6 * sg**2) / s**3][order]
        e = np.exp(u)
        h = [self.inner.derivative(e, k) for k in range(order + 1)]
        if order == 0:
            return h[0]
        if order == 1:
            return h[1] * e
        if order == 2:
            return h[2] * e**2 + h[1] * e
        return h[3] * e**3 + 3 * h[2] * e**2 + h[1] * e

    def derivative(self, v, order: int = 0):
        if not 0 <= order <= 3:
            raise ValueError("derivatives are available up to order 3")
        u = self.pre_scale * np.asarray(v, dtype=float) + self.pre_shift
        return self._outer(u, order) * self.pre_scale**order

    def __call__(self, v):
        return self.derivative(v, 0)

    def to_dict(self) -> dict:
        out = {"family": self.family, "params": dict(self.params),
               "pre_scale": self.pre_scale, "pre_shift": self.pre_shift}
        if self.inner is not None:
            out["inner"] = self.inner.to_dict()
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "Link":
        inner = obj.get("inner")
        return cls(family=obj.get("family", "identity"), params=dict(obj.get("params", {})),
                   pre_scale=float(obj.get("pre_scale", 1.0)),
                   pre_shift=float(obj.get("pre_shift", 0.0)),
                   inner=None if inner is None else cls.from_dict(inner))


@dataclass(frozen=True)
class ErrorLaw:
    """``eps = sigma * (T - quantile_T(tau))`` with ``T`` standard normal or Student t3.

    ``none`` gives ``eps = 0``.
    """

    family: str = "gaussian"
    sigma: float = 1.0

    def __post_init__(self):
        if self.family not in ERROR_FAMILIES:
            raise ConfigError(f"unknown error family {self.family!r}")
        if self.family != "none" and not self.sigma > 0:
            raise ConfigError("error sigma must be positive")

    @property
    def _dist(self):
        return stats.norm() if self.family == "gaussian" else stats.t(3)

    def draw(self, rng, n: int, tau: float):
        if self.family == "none":
            return np.zeros(n)
        if self.family == "gaussian":
            raw = rng.standard_normal(n)
        else:
            raw = rng.standard_t(3, n)
        return self.sigma * (raw - self._dist.ppf(tau))

    def pdf(self, e, tau: float):
        if self.family == "none":
            raise EstimationError("noiseless errors have no density")
        return self._dist.pdf(np.asarray(e) / self.sigma + self._dist.ppf(tau)) / self.sigma

    def cdf(self, e, tau: float):
        if self.family == "none":
            return (np.asarray(e) >= 0).astype(float)
        return self._dist.cdf(np.asarray(e) / self.sigma + self._dist.ppf(tau))

    def to_dict(self) -> dict:
        return {"family": self.family, "sigma": self.sigma}


@dataclass(frozen=True)
class TrueModel:
    link: Link
    components: tuple
    error: ErrorLaw = ErrorLaw()
    phi: tuple = ()
    rho: float = 0.0
    tau: float = 0.5

    def __post_init__(self):
        comps = tuple(self.components)
        object.__setattr__(self, "components", comps)
        if len(comps) < 2:
            raise ConfigError("need at least two components")
        phi = tuple(float(v) for v in self.phi) or (0.0,) * len(comps)
        if len(phi) == 1:
            phi = phi * len(comps)
        if len(phi) != len(comps):
            raise ConfigError("phi needs one entry per covariate")
        object.__setattr__(self, "phi", phi)
        if not 0.0 < self.tau < 1.0:
            raise ConfigError("tau must lie in (0, 1)")
        if not -1.0 / (len(comps) - 1) < self.rho < 1.0:
            raise ConfigError("rho outside the range of a valid equicorrelation matrix")

    @property
    def d(self) -> int:
        return len(self.components)

    @property
    def corr(self) -> NDArray[np.float64]:
        r = np.full((self.d, self.d), self.rho)
        np.fill_diagonal(r, 1.0)
        return r

    def index(self, x) -> NDArray[np.float64]:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return sum(c(x[:, k]) for k, c in enumerate(self.components))

    def to_dict(self) -> dict:
        return {"link": self.link.to_dict(),
                "components": [c.to_dict() for c in self.components],
                "error": self.error.to_dict(), "phi": list(self.phi), "rho": self.rho,
                "tau": self.tau}

    @classmethod
    def from_dict(cls, obj: dict) -> "TrueModel":
        try:
            return cls(link=Link.from_dict(obj.get("link", {})),
                       components=tuple(Component.from_dict(c) for c in obj["components"]),
                       error=ErrorLaw(**obj.get("error", {})),
                       phi=tuple(obj.get("phi", ())), rho=float(obj.get("rho", 0.0)),
                       tau=float(obj.get("tau", 0.5)))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed model: {exc}") from exc

    @classmethod
    def from_json(cls, path) -> "TrueModel":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read model {path}: {exc}") from exc


def _innovation_chol(model: TrueModel):
    phi = np.asarray(model.phi)
    cov = model.corr * (1.0 - np.outer(phi, phi))
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise ConfigError("innovation covariance is not positive definite") from exc


def simulate(model: TrueModel, n: int, seed, burn_in: int = 200) -> Dataset:
    """Draw ``n`` consecutive observations after ``burn_in`` steps.

    ``seed`` is anything ``numpy.random.default_rng`` accepts.  Covariates
    are drawn before errors, so models that differ only in ``G`` and the
    ``q_u`` share their covariate and error streams.
    """
    if n < 1:
        raise ConfigError("n must be at least 1")
    if burn_in < 200:
        raise ConfigError("burn_in must be at least 200")
    phi = np.asarray(model.phi)
    if np.any(np.abs(phi) >= 1.0):
        raise ConfigError("|phi| must be < 1 for a stationary process")
    rng = np.random.default_rng(seed)
    chol_r = np.linalg.cholesky(model.corr)
    chol_e = _innovation_chol(model)
    total = burn_in + n
    shocks = rng.standard_normal((total, model.d)) @ chol_e.T
    z = np.empty((total, model.d))
    prev = chol_r @ rng.standard_normal(model.d)
    for t in range(total):
        prev = phi * prev + shocks[t]
        z[t] = prev
    x = stats.norm.cdf(z[burn_in:])
    eps = model.error.draw(rng, n, model.tau)
    y = model.link(model.index(x)) + eps
    return Dataset(x, y)


def covariate_draws(model: TrueModel, n: int, rng) -> NDArray[np.float64]:
    """``n`` independent draws from the stationary covariate law."""
    z = rng.standard_normal((n, model.d)) @ np.linalg.cholesky(model.corr).T
    return stats.norm.cdf(z)


def copula_density(model: TrueModel, x, axes: Optional[Sequence[int]] = None):
    """Stationary density of the covariates (or of the 0-based ``axes`` subset)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    axes = list(range(model.d)) if axes is None else list(axes)
    if not axes:
        return np.ones(x.shape[0])
    r = model.corr[np.ix_(axes, axes)]
    z = stats.norm.ppf(x)
    rinv = np.linalg.inv(r)
    quad = np.einsum("ij,jk,ik->i", z, rinv - np.eye(len(axes)), z)
    inside = np.all((x > 0) & (x < 1), axis=1)
    with np.errstate(invalid="ignore"):
        val = np.exp(-0.5 * quad) / math.sqrt(np.linalg.det(r))
    return np.where(inside, val, 0.0)


def grad_log_density(model: TrueModel, x):
    """Gradient of the log covariate density, rows follow ``x``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    z = stats.norm.ppf(x)
    rinv = np.linalg.inv(model.corr)
    dz = 1.0 / stats.norm.pdf(z)
    return (z - z @ rinv.T) * dz


def true_quantile(model, x):
    """``G(sum_u q_u(x_u))``; accepts raw or identified models."""
    if isinstance(model, IdentifiedModel):
        model = model.model
    out = model.link(model.index(x))
    return float(out[0]) if np.ndim(x) == 1 else out


@dataclass(frozen=True)
class IdentifiedModel:
    """A model rewritten so that ``q_k(x_k0) = 0`` and ``int w1 / q_1' = 1``."""

    model: TrueModel
    gamma: float
    anchors: tuple
    weight_interval: tuple

    @property
    def d(self) -> int:
        return self.model.d

    @property
    def components(self):
        return self.model.components

    @property
    def link(self):
        return self.model.link

    def q0(self, x):
        return self.model.index(x)

    def to_dict(self) -> dict:
        return {"model": self.model.to_dict(), "gamma": self.gamma,
                "anchors": list(self.anchors), "weight_interval": list(self.weight_interval)}


def _gamma(q1: Component, a: float, b: float, nodes: int = 64) -> float:
    xs = np.linspace(a, b, 2001)
    slope = q1.derivative(xs, 1)
    if np.any(slope == 0) or np.any(np.sign(slope) != np.sign(slope[0])):
        raise EstimationError("q_1' vanishes or changes sign on the weight interval")

    def rule(m):
        s, w = np.polynomial.legendre.leggauss(m)
        t = 0.5 * (b - a) * s + 0.5 * (a + b)
        bump = 6.0 * (t - a) * (b - t) / (b - a) ** 3
        return float(np.sum(0.5 * (b - a) * w * bump / q1.derivative(t, 1)))

    g, g2 = rule(nodes), rule(2 * nodes)
    if abs(g - g2) > 1e-12 * max(1.0, abs(g2)):
        raise EstimationError("quadrature for the identification constant did not settle")
    return g2


def identify_normalize(model, w1, anchors) -> IdentifiedModel:
    """Rescale and shift the components and compensate in the link.

    ``w1`` is any object with ``a`` and ``b`` attributes (the weight interval on
    axis 1); ``anchors`` has one entry per covariate.  Passing an
    ``IdentifiedModel`` re-identifies its normalised model.
    """
    if isinstance(model, IdentifiedModel):
        model = model.model
    anchors = tuple(float(a) for a in np.asarray(anchors, dtype=float).reshape(-1))
    if len(anchors) != model.d:
        raise ConfigError("need one anchor per covariate")
    gamma = _gamma(model.components[0], float(w1.a), float(w1.b))
    at_anchor = [float(c(a)) for c, a in zip(model.components, anchors)]
    comps = tuple(replace(c, scale=gamma * c.scale, shift=gamma * (c.shift - q_a))
                  for c, q_a in zip(model.components, at_anchor))
    total = float(np.sum(at_anchor))
    link = replace(model.link, pre_scale=model.link.pre_scale / gamma,
                   pre_shift=model.link.pre_scale * total + model.link.pre_shift)
    ident = replace(model, components=comps, link=link)
    return IdentifiedModel(model=ident, gamma=gamma, anchors=anchors,
                           weight_interval=(float(w1.a), float(w1.b)))


def multiplicative_model(g_tilde: Link, factors: Sequence[Component], **kwargs) -> TrueModel:
    """Rewrite ``g_tilde(prod_u f_u(x_u))`` (positive ``f_u``) in additive form."""
    comps = tuple(Component("log_of", inner=f) for f in factors)
    return TrueModel(link=Link("compose_exp", inner=g_tilde), components=comps, **kwargs)


def multiplicative_value(g_tilde: Link, factors: Sequence[Component], x):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    prod = np.ones(x.shape[0])
    for k, f in enumerate(factors):
        prod = prod * f(x[:, k])
    return g_tilde(prod)
