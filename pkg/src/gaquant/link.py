"""Link estimation: kernel-weighted conditional CDF of ``Y`` given the additive index.

``G(v)`` is the ``tau``-quantile of ``Y`` given ``q0(X) = v``.  With the
estimated index ``q0_hat`` the conditional CDF is a kernel-weighted empirical
CDF over sample points inside the box, and ``G_hat(v)`` is its left inverse,
always one of the observed responses.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from numpy.typing import NDArray

from .core import Box, ConfigError, Dataset, EmptySampleError, QuantileLevel
from .kernels import ScalarKernel, kernel_g_eval

GRID_POINTS = 64
_KG = ScalarKernel()

__all__ = [
    "conditional_cdf",
    "link_estimate",
    "LinkEstimate",
    "fit_link",
    "predict_quantile",
    "default_h_g",
]


def _weights(q0, v: float, h_g: float, inside=None):
    w = kernel_g_eval(_KG, (v - np.asarray(q0, dtype=float)) / h_g)[0]
    w = np.atleast_1d(w)
    if inside is not None:
        w = np.where(inside, w, 0.0)
    return w


def _inside(data: Dataset, box: Optional[Box]):
    return np.ones(data.n, dtype=bool) if box is None else box.contains(data.x)


def conditional_cdf(data: Dataset, q0_hat_values, v: float, y: float, h_g: float,
                    box: Optional[Box] = None) -> float:
    """Kernel-weighted share of in-box responses at or below ``y`` near index value ``v``."""
    if not h_g > 0:
        raise ConfigError("h_g must be positive")
    w = _weights(q0_hat_values, v, h_g, _inside(data, box))
    if not w.sum() > 0:
        raise EmptySampleError(f"empty v-neighborhood at v = {v:.6g} with h_g = {h_g:.4g}")
    # one cumulative sum over sorted responses keeps the result monotone in y
    order = np.argsort(data.y, kind="stable")
    cum = np.cumsum(w[order])
    k = np.searchsorted(data.y[order], y, side="right")
    return 0.0 if k == 0 else float(np.clip(cum[k - 1] / cum[-1], 0.0, 1.0))


def _left_inverse(y, w, tau: float):
    keep = w > 0
    if not np.any(keep):
        return None, True
    ys, ws = y[keep], w[keep]
    order = np.argsort(ys, kind="stable")
    ys, ws = ys[order], ws[order]
    cum = np.cumsum(ws) / ws.sum()
    hit = np.flatnonzero(cum >= tau)
    if hit.size == 0:
        return float(ys[-1]), True
    return float(ys[hit[0]]), False


def link_estimate(data: Dataset, q0_hat_values, v: float, level: QuantileLevel, h_g: float,
                  box: Optional[Box] = None, return_flag: bool = False):
    """``inf {y : F_hat(y | v) >= tau}``.

    When rounding leaves the total weight short of ``tau`` the largest
    in-window response is returned and the flag is set.
    """
    if not h_g > 0:
        raise ConfigError("h_g must be positive")
    w = _weights(q0_hat_values, v, h_g, _inside(data, box))
    val, flag = _left_inverse(data.y, w, level.tau)
    if val is None:
        raise EmptySampleError(f"empty v-neighborhood at v = {v:.6g} with h_g = {h_g:.4g}")
    return (val, flag) if return_flag else val


def default_h_g(q0_in_box, n: int) -> float:
    """Sample standard deviation of the in-box index times ``n^(-1/5)``."""
    return float(np.std(q0_in_box, ddof=1)) * n ** (-0.2)


@dataclass(frozen=True, eq=False)
class LinkEstimate:
    """``G_hat`` on a grid plus the in-box sample needed to evaluate it anywhere."""

    v_grid: NDArray[np.float64]
    g_values: NDArray[np.float64]
    flags: NDArray[np.bool_]
    level: QuantileLevel
    h_g: float
    support: tuple
    sample_q0: NDArray[np.float64]
    sample_y: NDArray[np.float64]

    def evaluate(self, v: float):
        """``(G_hat(v), flagged)``; ``v`` outside the support is moved to its nearest end."""
        lo, hi = self.support
        flag = not lo <= v <= hi
        v = min(max(v, lo), hi)
        val, short = _left_inverse(self.sample_y, _weights(self.sample_q0, v, self.h_g),
                                   self.level.tau)
        if val is None:
            raise EmptySampleError(f"empty v-neighborhood at v = {v:.6g}")
        return val, flag or short

    def __call__(self, v):
        if np.ndim(v) == 0:
            return self.evaluate(float(v))[0]
        return np.array([self.evaluate(float(t))[0] for t in np.ravel(v)])

    def to_files(self, csv_path, json_path, sample_path=None) -> None:
        with Path(csv_path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["v", "G_hat"])
            for v, g in zip(self.v_grid, self.g_values):
                w.writerow([repr(float(v)), repr(float(g))])
        side = {"h_g": self.h_g, "level": {"alpha": self.level.alpha, "tau": self.level.tau},
                "support": list(self.support), "flags": self.flags.astype(int).tolist()}
        if sample_path is not None:
            side["sample"] = Path(sample_path).name
            with Path(sample_path).open("w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["q0_hat", "y"])
                for q, y in zip(self.sample_q0, self.sample_y):
                    w.writerow([repr(float(q)), repr(float(y))])
        Path(json_path).write_text(json.dumps(side, indent=2))

    @classmethod
    def from_files(cls, csv_path, json_path) -> "LinkEstimate":
        try:
            side = json.loads(Path(json_path).read_text())
            grid = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
            sample = np.loadtxt(Path(json_path).parent / side["sample"], delimiter=",",
                                skiprows=1, ndmin=2)
        except (OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read link files: {exc}") from exc
        return cls(v_grid=grid[:, 0], g_values=grid[:, 1],
                   flags=np.array(side.get("flags", [0] * len(grid)), dtype=bool),
                   level=QuantileLevel.from_dict(side["level"]), h_g=float(side["h_g"]),
                   support=tuple(side["support"]), sample_q0=sample[:, 0],
                   sample_y=sample[:, 1])


def fit_link(data: Dataset, q0_hat_values, level: QuantileLevel, box: Optional[Box] = None,
             h_g: Optional[float] = None, grid_points: int = GRID_POINTS) -> LinkEstimate:
    """Evaluate ``G_hat`` on equispaced points between the 2.5% and 97.5% index quantiles."""
    q0 = np.asarray(q0_hat_values, dtype=float)
    inside = _inside(data, box)
    if not np.any(inside):
        raise EmptySampleError("no sample points inside the box for the link fit")
    q_in, y_in = q0[inside], data.y[inside]
    if h_g is None:
        h_g = default_h_g(q_in, data.n)
    if not h_g > 0:
        raise ConfigError("h_g must be positive (the estimated index may be constant)")
    lo, hi = np.quantile(q_in, [0.025, 0.975])
    grid = np.linspace(lo, hi, grid_points)
    vals, flags = [], []
    for v in grid:
        val, flag = _left_inverse(y_in, _weights(q_in, v, h_g), level.tau)
        if val is None:
            raise EmptySampleError(f"empty v-neighborhood at grid point v = {v:.6g}")
        vals.append(val)
        flags.append(flag)
    return LinkEstimate(v_grid=grid, g_values=np.array(vals), flags=np.array(flags),
                        level=level, h_g=float(h_g),
                        support=(float(q_in.min()), float(q_in.max())),
                        sample_q0=q_in, sample_y=y_in)


def predict_quantile(components, link: LinkEstimate, x, return_flag: bool = False):
    """End-to-end ``G_hat(q0_hat(x))`` for ``x`` inside the estimation box."""
    x = np.asarray(x, dtype=float).reshape(-1)
    box = components.config.box
    if x.shape[0] != box.d or not box.contains(x)[0]:
        raise ConfigError(f"x = {x.tolist()} lies outside the estimation box")
    val, flag = link.evaluate(float(components.q0(x)[0]))
    return (val, flag) if return_flag else val
