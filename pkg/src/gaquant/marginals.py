"""Marginal-integration estimators of the additive components.

For a pair of axes ``(1, u)`` a local fit at ``(t1, tu)`` (with the remaining
coordinates taken from the sample) yields slope estimates along both axes.
Averaging them over the sample gives ``D_u`` and ``D_1u``.  Their ratio
``D_u / D_1u`` equals ``q_u'(tu) / q_1'(t1)``, so integrating it against
``w1`` over ``t1`` and then over ``tu`` from the anchor recovers ``q_u`` up
to the normalisation ``int w1 / q_1' = 1``.  ``q_1`` is recovered the same
way from the ``(1, 2)`` table with the roles of the axes exchanged, and the
constant ``c`` restores its scale.

All slopes needed for one component come from a single table of local fits
on a Gauss-Legendre rectangle over ``[a1, b1] x [a_u, b_u]``.  The outer
integral uses the antiderivative of the Legendre interpolant through the
node values, so ``q_u(x_u)`` is available at any ``x_u`` in ``[a_u, b_u]``,
vanishes exactly at the anchor and is exactly antisymmetric in
``(x_u, x_u0)``.
"""
from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from numpy.polynomial import legendre as L
from numpy.typing import NDArray

from .core import (
    ConfigError,
    Dataset,
    DenominatorFloorError,
    EmptySampleError,
    FitConfig,
    validate,
)
from .lpq import fit_local, local_partial

FLOOR_FRACTION = 1e-3
GRID_POINTS = 101

__all__ = [
    "WeightFn",
    "weight_eval",
    "DPair",
    "DTable",
    "ComponentEstimate",
    "AdditiveFit",
    "estimate_D",
    "d_table",
    "estimate_component_u",
    "estimate_c_hat",
    "estimate_component_1",
    "estimate_all",
    "default_grid",
    "antiderivative",
]


@dataclass(frozen=True)
class WeightFn:
    """Quadratic bump ``6 (t - a)(b - t) / (b - a)^3`` on ``[a, b]``."""

    a: float
    b: float
    family: str = "quadratic-bump"

    def __post_init__(self):
        if not self.a < self.b:
            raise ConfigError("weight interval needs a < b")

    def __call__(self, t):
        return weight_eval(self, t)


def weight_eval(w: WeightFn, t):
    t = np.asarray(t, dtype=float)
    val = 6.0 * (t - w.a) * (w.b - t) / (w.b - w.a) ** 3
    val = np.where((t >= w.a) & (t <= w.b), val, 0.0)
    return float(val) if val.ndim == 0 else val


def weights_for(config: FitConfig, axis: int) -> WeightFn:
    """Weight function on the box side of 1-based ``axis``."""
    return WeightFn(float(config.box.lower[axis - 1]), float(config.box.upper[axis - 1]))


@dataclass(frozen=True)
class DPair:
    d_u: float
    d_1u: float
    t1: float
    tu: float
    n_used: int


@dataclass(frozen=True, eq=False)
class DTable:
    """``D_u`` and ``D_1u`` on the tensor rule; rows index ``t1``, columns ``tu``."""

    u: int
    t1: NDArray[np.float64]
    tu: NDArray[np.float64]
    d_u: NDArray[np.float64]
    d_1u: NDArray[np.float64]
    n_used: NDArray[np.int64]


def _gl(n: int, a: float, b: float):
    x, w = L.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


def _other_axes(d: int, u: int):
    return [k for k in range(d) if k not in (0, u - 1)]


def estimate_D(data: Dataset, u: int, t1: float, tu: float, config: FitConfig) -> DPair:
    """Averaged slope pair ``(D_u, D_1u)`` at ``(t1, tu)``.

    With ``d = 2`` there is nothing to average over and a single fit at
    ``(t1, tu)`` is used.  Otherwise each sample row ``j`` whose remaining
    coordinates lie in the box contributes a leave-one-out fit at the row
    with slots 1 and ``u`` replaced by ``t1`` and ``tu``; the sum is divided
    by ``n``.
    """
    if not 2 <= u <= data.d:
        raise ValueError(f"u must lie in 2..{data.d}")
    basis, h = config.basis, config.h
    if data.d == 2:
        point = np.array([t1, tu])
        fit = fit_local(data, point, h, basis, config.level, config.solver)
        return DPair(local_partial(fit, basis, u, h), local_partial(fit, basis, 1, h),
                     float(t1), float(tu), 1)
    rest = _other_axes(data.d, u)
    inside = np.flatnonzero(config.box.contains(data.x, axes=rest))
    if inside.size == 0:
        raise EmptySampleError(f"empty u-bar sample for u={u}: no rows inside the box on axes "
                               f"{[k + 1 for k in rest]}")
    su = s1 = 0.0
    for j in inside:
        point = data.x[j].copy()
        point[0] = t1
        point[u - 1] = tu
        fit = fit_local(data, point, h, basis, config.level, config.solver, exclude=int(j))
        su += local_partial(fit, basis, u, h)
        s1 += local_partial(fit, basis, 1, h)
    return DPair(su / data.n, s1 / data.n, float(t1), float(tu), int(inside.size))


def d_table(data: Dataset, u: int, config: FitConfig, threads: int = 1) -> DTable:
    """Evaluate ``estimate_D`` on the ``quad_nodes x quad_nodes`` Gauss-Legendre rectangle."""
    box, n = config.box, config.quad_nodes
    t1, _ = _gl(n, box.lower[0], box.upper[0])
    tu, _ = _gl(n, box.lower[u - 1], box.upper[u - 1])
    nodes = [(a, b) for a in t1 for b in tu]

    def one(node):
        return estimate_D(data, u, node[0], node[1], config)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            pairs = list(pool.map(one, nodes))
    else:
        pairs = [one(nd) for nd in nodes]
    du = np.array([p.d_u for p in pairs]).reshape(n, n)
    d1 = np.array([p.d_1u for p in pairs]).reshape(n, n)
    used = np.array([p.n_used for p in pairs], dtype=np.int64).reshape(n, n)
    return DTable(u=u, t1=t1, tu=tu, d_u=du, d_1u=d1, n_used=used)


def _checked_ratio(num, den, t1, tu, what: str):
    floor = FLOOR_FRACTION * float(np.median(np.abs(den)))
    bad = np.abs(den) <= floor
    if np.any(bad):
        i, j = np.argwhere(bad)[0]
        node = (float(t1[i]), float(tu[j]))
        raise DenominatorFloorError(
            f"{what} = {den[i, j]:.3g} is below the floor {floor:.3g} at (t1, tu) = "
            f"({node[0]:.6g}, {node[1]:.6g})", node=node)
    return num / den, floor


def antiderivative(values, a: float, b: float):
    """Legendre coefficients (on ``[a, b]``) of an antiderivative of the interpolant.

    ``values`` are samples at the Gauss-Legendre nodes of ``[a, b]``.
    """
    n = len(values)
    s, w = L.leggauss(n)
    vander = L.legvander(s, n - 1)
    coef = (vander * w[:, None]).T @ np.asarray(values, dtype=float)
    coef *= (2.0 * np.arange(n) + 1.0) / 2.0
    return L.legint(coef) * (0.5 * (b - a))


def _integral_from(coef, a: float, b: float, x0: float, x):
    scale = lambda t: (2.0 * np.asarray(t, dtype=float) - a - b) / (b - a)
    return L.legval(scale(x), coef) - L.legval(scale(x0), coef)


def default_grid(config: FitConfig, axis: int, points: int = GRID_POINTS):
    """Equispaced grid over the box side of 1-based ``axis``, with the anchor inserted."""
    lo, hi = config.box.lower[axis - 1], config.box.upper[axis - 1]
    g = np.linspace(lo, hi, points)
    return np.unique(np.append(g, config.anchors[axis - 1]))


def _check_grid(grid, config, axis):
    grid = np.asarray(grid, dtype=float).reshape(-1)
    lo, hi = config.box.lower[axis - 1], config.box.upper[axis - 1]
    if grid.size == 0 or np.any(grid < lo) or np.any(grid > hi):
        raise ConfigError(f"grid for axis {axis} must lie inside [{lo:g}, {hi:g}]")
    return grid


@dataclass(frozen=True, eq=False)
class ComponentEstimate:
    u: int
    grid: NDArray[np.float64]
    values: NDArray[np.float64]
    anchor: float
    c_hat: Optional[float] = None
    diagnostics: dict = field(default_factory=dict)

    def __call__(self, x):
        """Piecewise-linear interpolation on the grid (clamped at the ends)."""
        return np.interp(x, self.grid, self.values)


def estimate_component_u(data: Dataset, u: int, grid, config: FitConfig,
                         table: Optional[DTable] = None, threads: int = 1) -> ComponentEstimate:
    if not 2 <= u <= data.d:
        raise ValueError(f"u must lie in 2..{data.d}")
    grid = _check_grid(grid, config, u)
    table = table if table is not None else d_table(data, u, config, threads)
    box = config.box
    a1, b1 = box.lower[0], box.upper[0]
    au, bu = box.lower[u - 1], box.upper[u - 1]
    _, wq1 = _gl(config.quad_nodes, a1, b1)
    ratio, floor = _checked_ratio(table.d_u, table.d_1u, table.t1, table.tu, "D_1u")
    inner = (wq1 * weights_for(config, 1)(table.t1)) @ ratio
    coef = antiderivative(inner, au, bu)
    values = _integral_from(coef, au, bu, config.anchors[u - 1], grid)
    diag = {
        "denominator": "D_1u",
        "floor": floor,
        "min_abs_denominator": float(np.min(np.abs(table.d_1u))),
        "node_min_abs_denominator": np.min(np.abs(table.d_1u), axis=0).tolist(),
        "min_n_used": int(table.n_used.min()),
        "quad_nodes": config.quad_nodes,
    }
    return ComponentEstimate(u=u, grid=grid, values=values, anchor=float(config.anchors[u - 1]),
                             diagnostics=diag)


def _inner_12(table: DTable, config: FitConfig):
    box = config.box
    _, wq2 = _gl(config.quad_nodes, box.lower[1], box.upper[1])
    ratio, floor = _checked_ratio(table.d_1u, table.d_u, table.t1, table.tu, "D_2")
    inner = ratio @ (wq2 * weights_for(config, 2)(table.tu))
    return inner, floor


def estimate_c_hat(data: Dataset, config: FitConfig, table: Optional[DTable] = None,
                   threads: int = 1) -> float:
    """``int w1(t1) / [int (D_12 / D_2)(t1, t2) w2(t2) dt2] dt1``."""
    table = table if table is not None else d_table(data, 2, config, threads)
    inner, _ = _inner_12(table, config)
    floor = FLOOR_FRACTION * float(np.median(np.abs(inner)))
    bad = np.abs(inner) <= floor
    if np.any(bad):
        i = int(np.argmax(bad))
        raise DenominatorFloorError(
            f"inner integral {inner[i]:.3g} is below the floor {floor:.3g} at t1 = "
            f"{table.t1[i]:.6g}; c is undefined", node=(float(table.t1[i]),))
    _, wq1 = _gl(config.quad_nodes, config.box.lower[0], config.box.upper[0])
    return float(np.sum(wq1 * weights_for(config, 1)(table.t1) / inner))


def estimate_component_1(data: Dataset, grid, config: FitConfig,
                         table: Optional[DTable] = None, threads: int = 1) -> ComponentEstimate:
    grid = _check_grid(grid, config, 1)
    table = table if table is not None else d_table(data, 2, config, threads)
    c_hat = estimate_c_hat(data, config, table)
    inner, floor = _inner_12(table, config)
    a1, b1 = config.box.lower[0], config.box.upper[0]
    coef = antiderivative(inner, a1, b1)
    values = c_hat * _integral_from(coef, a1, b1, config.anchors[0], grid)
    diag = {
        "denominator": "D_2",
        "floor": floor,
        "min_abs_denominator": float(np.min(np.abs(table.d_u))),
        "node_min_abs_denominator": np.min(np.abs(table.d_u), axis=1).tolist(),
        "min_n_used": int(table.n_used.min()),
        "quad_nodes": config.quad_nodes,
    }
    return ComponentEstimate(u=1, grid=grid, values=values, anchor=float(config.anchors[0]),
                             c_hat=c_hat, diagnostics=diag)


@dataclass(frozen=True, eq=False)
class AdditiveFit:
    """All component estimates and the additive index ``q0(x) = sum_k q_k(x_k)``."""

    components: tuple
    config: FitConfig
    warnings: tuple = ()

    @property
    def c_hat(self) -> float:
        return self.components[0].c_hat

    def q0(self, x) -> NDArray[np.float64]:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return sum(c(x[:, c.u - 1]) for c in self.components)

    def to_files(self, csv_path, json_path) -> None:
        with Path(csv_path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["u", "x", "value"])
            for comp in self.components:
                for x, v in zip(comp.grid, comp.values):
                    w.writerow([comp.u, repr(float(x)), repr(float(v))])
        side = {
            "c_hat": self.c_hat,
            "config": self.config.to_dict(),
            "warnings": list(self.warnings),
            "anchors": self.config.anchors.tolist(),
            "diagnostics": {str(c.u): c.diagnostics for c in self.components},
        }
        Path(json_path).write_text(json.dumps(side, indent=2))

    @classmethod
    def from_files(cls, csv_path, json_path) -> "AdditiveFit":
        try:
            side = json.loads(Path(json_path).read_text())
            with Path(csv_path).open(newline="") as fh:
                rows = list(csv.DictReader(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read component files: {exc}") from exc
        config = FitConfig.from_dict(side["config"])
        comps = []
        for u in range(1, config.d + 1):
            sel = [r for r in rows if int(r["u"]) == u]
            if not sel:
                raise ConfigError(f"component {u} missing from {csv_path}")
            comps.append(ComponentEstimate(
                u=u, grid=np.array([float(r["x"]) for r in sel]),
                values=np.array([float(r["value"]) for r in sel]),
                anchor=float(config.anchors[u - 1]),
                c_hat=side["c_hat"] if u == 1 else None,
                diagnostics=side["diagnostics"].get(str(u), {})))
        return cls(tuple(comps), config, tuple(side.get("warnings", [])))


def estimate_all(data: Dataset, config: FitConfig, grids: Optional[Sequence] = None,
                 threads: int = 1) -> AdditiveFit:
    """Estimate every component; ``grids[k]`` overrides the default grid of axis ``k + 1``."""
    warnings = validate(config, data)
    grids = list(grids) if grids is not None else [None] * data.d
    if len(grids) != data.d:
        raise ConfigError("need one grid per axis")
    grids = [default_grid(config, k + 1) if g is None else g for k, g in enumerate(grids)]
    tables = {u: d_table(data, u, config, threads) for u in range(2, data.d + 1)}
    comps = [estimate_component_1(data, grids[0], config, tables[2])]
    comps += [estimate_component_u(data, u, grids[u - 1], config, tables[u])
              for u in range(2, data.d + 1)]
    return AdditiveFit(tuple(comps), config, tuple(warnings))
