"""Independent reference values for the regression tests.

Nothing from ``gaquant`` is imported.  Every quantity is rebuilt from its
definition with adaptive scipy quadrature in Cartesian coordinates and
finite differences, then written to ``tests/fixtures/frozen_constants.json``
together with the design it belongs to.

    python scripts/oracles.py [--out PATH]
"""
from __future__ import annotations

import argparse
import json
import math
from pathlib import Path

import numpy as np
from scipy import integrate, stats

EPS = dict(epsabs=1e-12, epsrel=1e-11, limit=200)


# Kernel pieces on the unit disk -------------------------------------------

C2 = 3.0 / math.pi  # normaliser of (1 - |t|^2)^2 on the unit disk


def kern(t1, t2):
    r2 = t1 * t1 + t2 * t2
    return C2 * (1.0 - r2) ** 2 if r2 < 1.0 else 0.0


def disk_integral(fn, t2_upper=1.0):
    """int over {|t| < 1, t2 < t2_upper} of fn(t1, t2) dt1 dt2."""
    hi = min(t2_upper, 1.0)
    if hi <= -1.0:
        return 0.0
    half = lambda t2: math.sqrt(max(0.0, 1.0 - t2 * t2))
    val, _ = integrate.dblquad(lambda t1, t2: fn(t1, t2), -1.0, hi,
                               lambda t2: -half(t2), half, epsabs=1e-13, epsrel=1e-12)
    return val


BASIS = [lambda t1, t2: 1.0, lambda t1, t2: t1, lambda t1, t2: t2]  # (0,0), (1,0), (0,1)


def moment_matrix():
    q = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            q[i, j] = disk_integral(lambda a, b: BASIS[i](a, b) * BASIS[j](a, b) * kern(a, b))
    return q


def moment_star():
    out = np.empty((3, 3, 2))
    for m in range(2):
        for i in range(3):
            for j in range(3):
                out[i, j, m] = disk_integral(
                    lambda a, b: BASIS[i](a, b) * BASIS[j](a, b) * (a, b)[m] * kern(a, b))
    return out


def p_moments(p=2):
    out = np.empty((3, 2))
    for i in range(3):
        for m in range(2):
            out[i, m] = disk_integral(lambda a, b: BASIS[i](a, b) * (a, b)[m] ** p * kern(a, b))
    return out


def f_axis2(s):
    """Kernel moments of A accumulated along the second axis up to s."""
    if abs(s) > 1.0:
        return np.zeros(3)
    return np.array([disk_integral(lambda a, b: BASIS[i](a, b) * kern(a, b), s)
                     for i in range(3)])


# Covariate law: Gaussian copula, equicorrelation rho -----------------------

def copula_pdf(x1, x2, rho):
    if not (0.0 < x1 < 1.0 and 0.0 < x2 < 1.0):
        return 0.0
    z = stats.norm.ppf([x1, x2])
    joint = stats.multivariate_normal(mean=[0, 0], cov=[[1, rho], [rho, 1]]).pdf(z)
    return float(joint / np.prod(stats.norm.pdf(z)))


def bump(t, a, b):
    return 6.0 * (t - a) * (b - t) / (b - a) ** 3


# 1. variance constant, linear identity-link design --------------------------

def variance_reference():
    design = {
        "model": {
            "link": {"family": "identity"},
            "components": [{"family": "linear"}, {"family": "linear", "scale": 2.0}],
            "error": {"family": "gaussian", "sigma": 0.1},
            "phi": [0.3, 0.3], "rho": 0.3, "tau": 0.3,
        },
        "box": {"lower": [0.1, 0.1], "upper": [0.9, 0.9]},
        "anchors": [0.5, 0.5], "u": 2, "x_u": 0.7, "p": 2,
    }
    tau, sigma, rho = 0.3, 0.1, 0.3
    a, b = 0.1, 0.9
    g0 = stats.norm.pdf(stats.norm.ppf(tau)) / sigma
    # q(x) = x1 + 2 x2 in any normalisation: D_2 = 2, D_12 = 1
    d2, d12 = 2.0, 1.0
    q = moment_matrix()
    cvec = np.zeros(3)
    cvec[2], cvec[1] = 1.0, -d2 / d12
    row = np.linalg.solve(q.T, cvec)
    quad_s, _ = integrate.quad(lambda s: float(row @ f_axis2(s)) ** 2, -1.0, 1.0,
                               epsabs=1e-12, epsrel=1e-10, limit=100)
    total = 0.0
    for xs in (0.5, 0.7):
        val, _ = integrate.quad(lambda t: bump(t, a, b) ** 2 / (d12**2 * copula_pdf(t, xs, rho)),
                                a, b, **EPS)
        total += val
    value = tau * (1 - tau) / g0**2 * total * quad_s
    return design, value


# 2. bias constant, sine-bump design with correlated covariates --------------

def bias_reference():
    bb, rho = 0.5, 0.3
    design = {
        "model": {
            "link": {"family": "identity"},
            "components": [{"family": "sine_bump", "params": {"b": bb}},
                           {"family": "sine_bump", "params": {"b": bb}}],
            "error": {"family": "gaussian", "sigma": 0.1},
            "phi": [0.3, 0.3], "rho": rho, "tau": 0.5,
        },
        "box": {"lower": [0.1, 0.1], "upper": [0.9, 0.9]},
        "anchors": [0.3, 0.3], "u": 2, "x_u": 0.9, "p": 2,
    }
    w = 2.0 * math.pi
    second = lambda x: -w * bb * math.sin(w * x)
    qinv = np.linalg.inv(moment_matrix())
    qstar = moment_star()
    pm = p_moments(2)
    step = 1e-5

    def grad_log(x1, x2):
        f = lambda u, v: math.log(copula_pdf(u, v, rho))
        return np.array([(f(x1 + step, x2) - f(x1 - step, x2)) / (2 * step),
                         (f(x1, x2 + step) - f(x1, x2 - step)) / (2 * step)])

    def b2(t1, t2):
        g = grad_log(t1, t2)
        mix = qstar[:, :, 0] * g[0] + qstar[:, :, 1] * g[1]
        lead = pm @ np.array([second(t1), second(t2)])
        return float(qinv[2] @ (mix @ lead)) / 2.0

    val, _ = integrate.dblquad(lambda t2, t1: b2(t1, t2), 0.1, 0.9, 0.3, 0.9,
                               epsabs=1e-10, epsrel=1e-9)
    return design, val


# 3. link bias constant a(v), exp link --------------------------------------

def link_bias_reference():
    rho, sigma, tau, v = 0.3, 0.1, 0.5, 0.0
    design = {
        "model": {
            "link": {"family": "exp"},
            "components": [{"family": "linear", "shift": -0.3},
                           {"family": "linear", "shift": -0.5}],
            "error": {"family": "gaussian", "sigma": sigma},
            "phi": [0.3, 0.3], "rho": rho, "tau": tau,
        },
        "v": v,
    }

    def f_q0(t):
        # density of X1 + X2 - 0.8 at t
        s = t + 0.8
        lo, hi = max(0.0, s - 1.0), min(1.0, s)
        if hi <= lo:
            return 0.0
        val, _ = integrate.quad(lambda x1: copula_pdf(x1, s - x1, rho), lo, hi, **EPS)
        return val

    g0 = stats.norm.pdf(stats.norm.ppf(tau)) / sigma
    mu2, _ = integrate.quad(lambda s: s * s * 15.0 / 16.0 * (1 - s * s) ** 2, -1, 1)
    hs = 1e-3
    # five-point stencil
    d5 = lambda fn: (-fn(v + 2 * hs) + 8 * fn(v + hs) - 8 * fn(v - hs) + fn(v - 2 * hs)) / (12 * hs)
    first = d5(lambda z: g0 * f_q0(z) * math.exp(z))
    # the error law does not depend on v, so the mixed derivative term is zero
    value = mu2 / f_q0(v) * first
    return design, value, f_q0(v)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1]
                                         / "tests" / "fixtures" / "frozen_constants.json"))
    args = ap.parse_args(argv)
    var_design, var_value = variance_reference()
    print(f"variance constant   {var_value:.12g}")
    bias_design, bias_value = bias_reference()
    print(f"bias constant       {bias_value:.12g}")
    link_design, a_value, f_value = link_bias_reference()
    print(f"link bias a(0)      {a_value:.12g}   f_q0(0) = {f_value:.12g}")
    out = {
        "variance_linear": {"design": var_design, "value": var_value},
        "bias_sine_bump": {"design": bias_design, "value": bias_value},
        "link_bias_exp": {"design": link_design, "value": a_value, "f_q0": f_value},
        "kernel": {"moment_matrix": moment_matrix().tolist()},
    }
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(json.dumps(out, indent=2) + "\n")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
