"""Shared domain types: datasets, boxes, quantile levels, polynomial bases, configs.

The pinball level actually minimised everywhere is ``tau = 1 - alpha``.  The
check function ``|y| + (2 alpha - 1) y`` is a positive multiple of
``y (tau - 1{y < 0})`` with that ``tau``, so both parametrisations share
their minimisers.  Command-line entry points accept either number and record
both.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from functools import cached_property
from itertools import combinations_with_replacement
from pathlib import Path
from typing import Optional

import numpy as np
from numpy.typing import NDArray
from scipy.spatial import cKDTree


class GaquantError(Exception):
    """Base class for package errors."""


class ConfigError(GaquantError, ValueError):
    """Invalid configuration or input data."""


class EstimationError(GaquantError, RuntimeError):
    """A numerical estimation step could not produce a valid value."""


class DegenerateFitError(EstimationError):
    pass


class ConvergenceError(EstimationError):
    def __init__(self, message: str, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class DenominatorFloorError(EstimationError):
    def __init__(self, message: str, node=None):
        super().__init__(message)
        self.node = node


class EmptySampleError(EstimationError):
    pass


class QuadratureError(EstimationError):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    """Time-ordered sample of ``n`` rows with ``d >= 2`` covariates."""

    x: NDArray[np.float64]
    y: NDArray[np.float64]
    ordered: bool = True

    def __post_init__(self):
        x = np.ascontiguousarray(self.x, dtype=float)
        y = np.ascontiguousarray(self.y, dtype=float).reshape(-1)
        if x.ndim != 2:
            raise ConfigError("x must be a 2-d array")
        if x.shape[0] < 1:
            raise ConfigError("dataset needs at least one row")
        if x.shape[1] < 2:
            raise ConfigError("dataset needs d >= 2 covariates")
        if x.shape[0] != y.shape[0]:
            raise ConfigError("x and y have different lengths")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ConfigError("dataset contains non-finite entries")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @cached_property
    def tree(self) -> cKDTree:
        return cKDTree(self.x)

    def to_csv(self, path) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{k + 1}" for k in range(self.d)] + ["y"])
            for xi, yi in zip(self.x, self.y):
                w.writerow([repr(float(v)) for v in xi] + [repr(float(yi))])

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        path = Path(path)
        try:
            with path.open(newline="") as fh:
                rows = list(csv.reader(fh))
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from exc
        if not rows:
            raise ConfigError(f"{path} is empty")
        header = [h.strip() for h in rows[0]]
        d = len(header) - 1
        if d < 2 or header != [f"x{k + 1}" for k in range(d)] + ["y"]:
            raise ConfigError(f"{path}: header must be x1,...,xd,y with d >= 2")
        try:
            arr = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
        except ValueError as exc:
            raise ConfigError(f"{path}: non-numeric entry ({exc})") from exc
        if arr.size == 0:
            raise ConfigError(f"{path} has no data rows")
        if arr.shape[1] != d + 1:
            raise ConfigError(f"{path}: ragged rows")
        return cls(arr[:, :d], arr[:, d])


@dataclass(frozen=True, eq=False)
class Box:
    lower: NDArray[np.float64]
    upper: NDArray[np.float64]

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).reshape(-1)
        hi = np.asarray(self.upper, dtype=float).reshape(-1)
        if lo.shape != hi.shape:
            raise ConfigError("box bounds have different lengths")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ConfigError("box bounds must be finite")
        if np.any(lo >= hi):
            raise ConfigError("box needs lower < upper on every axis")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def d(self) -> int:
        return self.lower.shape[0]

    @property
    def midpoint(self) -> NDArray[np.float64]:
        return 0.5 * (self.lower + self.upper)

    @property
    def widths(self) -> NDArray[np.float64]:
        return self.upper - self.lower

    def contains(self, x, axes=None) -> NDArray[np.bool_]:
        """Row-wise membership test, optionally restricted to ``axes`` (0-based)."""
        x = np.atleast_2d(x)
        lo, hi = self.lower, self.upper
        if axes is not None:
            axes = list(axes)
            if not axes:
                return np.ones(x.shape[0], dtype=bool)
            x, lo, hi = x[:, axes], lo[axes], hi[axes]
        return np.all((x >= lo) & (x <= hi), axis=1)

    @classmethod
    def from_data(cls, x, lower_q: float = 0.05, upper_q: float = 0.95) -> "Box":
        x = np.asarray(x, dtype=float)
        return cls(np.quantile(x, lower_q, axis=0), np.quantile(x, upper_q, axis=0))

    def to_dict(self) -> dict:
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}


@dataclass(frozen=True)
class QuantileLevel:
    alpha: float
    tau: float

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0 and 0.0 < self.tau < 1.0):
            raise ConfigError("quantile levels must lie in (0, 1)")
        if abs(self.tau - (1.0 - self.alpha)) > 4 * np.finfo(float).eps:
            raise ConfigError("tau must equal 1 - alpha")

    @classmethod
    def from_tau(cls, tau: float) -> "QuantileLevel":
        return cls(alpha=1.0 - float(tau), tau=float(tau))

    @classmethod
    def from_alpha(cls, alpha: float) -> "QuantileLevel":
        return cls(alpha=float(alpha), tau=1.0 - float(alpha))

    @classmethod
    def from_dict(cls, obj: dict) -> "QuantileLevel":
        if "tau" in obj and obj["tau"] is not None:
            lvl = cls.from_tau(obj["tau"])
            if obj.get("alpha") is not None and abs(lvl.alpha - obj["alpha"]) > 1e-12:
                raise ConfigError("alpha and tau disagree: need tau = 1 - alpha")
            return lvl
        if obj.get("alpha") is not None:
            return cls.from_alpha(obj["alpha"])
        raise ConfigError("level needs alpha or tau")


@dataclass(frozen=True, eq=False)
class MultiIndexBasis:
    """Monomials ``z^lam`` with ``|lam| <= p - 1`` in graded-lexicographic order.

    ``unit_positions`` maps a 1-based axis ``u`` to the position of the unit
    multi-index ``e_u``; it is empty when ``p == 1``.
    """

    d: int
    p: int
    indices: tuple
    unit_positions: dict = field(default_factory=dict)

    @cached_property
    def powers(self) -> NDArray[np.int64]:
        return np.array(self.indices, dtype=np.int64).reshape(len(self.indices), self.d)

    @cached_property
    def degrees(self) -> NDArray[np.int64]:
        return self.powers.sum(axis=1)

    def __len__(self) -> int:
        return len(self.indices)


def _graded_lex(d: int, degree: int):
    # descending lex within one total degree: (1,0) before (0,1)
    out = []
    for combo in combinations_with_replacement(range(d), degree):
        lam = [0] * d
        for axis in combo:
            lam[axis] += 1
        out.append(tuple(lam))
    return sorted(set(out), reverse=True)


def multi_index_set(d: int, p: int) -> MultiIndexBasis:
    if d < 1 or p < 1:
        raise ValueError("need d >= 1 and p >= 1")
    indices = []
    for deg in range(p):
        indices.extend(_graded_lex(d, deg))
    units = {}
    for pos, lam in enumerate(indices):
        if sum(lam) == 1:
            units[lam.index(1) + 1] = pos
    assert len(indices) == math.comb(p - 1 + d, d)
    return MultiIndexBasis(d=d, p=p, indices=tuple(indices), unit_positions=units)


def basis_eval(basis: MultiIndexBasis, z) -> NDArray[np.float64]:
    """Evaluate ``A(z)``; ``z`` may be one point ``(d,)`` or rows ``(m, d)``."""
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    z2 = np.atleast_2d(z)
    if z2.shape[1] != basis.d:
        raise ValueError(f"expected points of dimension {basis.d}")
    out = np.ones((z2.shape[0], len(basis)))
    pw = basis.powers
    for j in range(1, len(basis)):
        col = out[:, j]
        for k in range(basis.d):
            e = pw[j, k]
            if e:
                col *= z2[:, k] ** e
    return out[0] if single else out


@dataclass(frozen=True)
class SolverOptions:
    """Knobs for the smoothed check-loss solver used by local fits."""

    smoothing_start: float = 0.5
    smoothing_shrink: float = 0.2
    max_outer: int = 3
    inner_tol: float = 1e-10
    ridge: float = 1e-10
    max_pivots: int = 5000

    def __post_init__(self):
        if not (0.0 < self.smoothing_shrink < 1.0):
            raise ConfigError("smoothing_shrink must lie in (0, 1)")
        for name in ("smoothing_start", "inner_tol", "ridge"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.max_outer < 1 or self.max_pivots < 1:
            raise ConfigError("iteration caps must be positive")


@dataclass(frozen=True, eq=False)
class FitConfig:
    """Everything the estimation pipeline needs besides the data."""

    p: int
    h: float
    h_g: Optional[float]
    level: QuantileLevel
    box: Box
    anchors: NDArray[np.float64]
    quad_nodes: int = 16
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        anchors = np.asarray(self.anchors, dtype=float).reshape(-1)
        anchors.setflags(write=False)
        object.__setattr__(self, "anchors", anchors)
        if self.p < 2:
            raise ConfigError("p must be >= 2 so first-order slopes are fitted")
        if not (np.isfinite(self.h) and self.h > 0):
            raise ConfigError("h must be finite and positive")
        if self.h_g is not None and not (np.isfinite(self.h_g) and self.h_g > 0):
            raise ConfigError("h_g must be finite and positive")
        if self.quad_nodes < 4:
            raise ConfigError("quad_nodes must be >= 4")
        if anchors.shape[0] != self.box.d:
            raise ConfigError("anchors and box dimensions differ")
        if np.any(anchors <= self.box.lower) or np.any(anchors >= self.box.upper):
            raise ConfigError("anchors must lie strictly inside the box")

    @property
    def d(self) -> int:
        return self.box.d

    @cached_property
    def basis(self) -> MultiIndexBasis:
        return multi_index_set(self.d, self.p)

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "h": self.h,
            "h_g": self.h_g,
            "level": {"alpha": self.level.alpha, "tau": self.level.tau},
            "box": self.box.to_dict(),
            "anchors": self.anchors.tolist(),
            "quad_nodes": self.quad_nodes,
            "solver": asdict(self.solver),
        }

    @classmethod
    def from_dict(cls, obj: dict, data: Optional[Dataset] = None) -> "FitConfig":
        """Build a config; ``box``, ``anchors`` and ``h`` may be null when data is given."""
        known = {"p", "h", "h_g", "level", "box", "anchors", "quad_nodes", "solver"}
        extra = set(obj) - known
        if extra:
            raise ConfigError(f"unknown config fields: {sorted(extra)}")
        try:
            p = int(obj.get("p", 2))
            level = QuantileLevel.from_dict(obj.get("level") or {"tau": 0.5})
            if obj.get("box") is not None:
                box = Box(obj["box"]["lower"], obj["box"]["upper"])
            elif data is not None:
                box = Box.from_data(data.x)
            else:
                raise ConfigError("box is required without data")
            anchors = obj.get("anchors")
            anchors = box.midpoint if anchors is None else anchors
            h = obj.get("h")
            if h is None:
                if data is None:
                    raise ConfigError("h is required without data")
                h = float(np.mean(box.widths)) * data.n ** (-1.0 / (2 * p + 1))
            solver = SolverOptions(**(obj.get("solver") or {}))
            return cls(
                p=p,
                h=float(h),
                h_g=None if obj.get("h_g") is None else float(obj["h_g"]),
                level=level,
                box=box,
                anchors=anchors,
                quad_nodes=int(obj.get("quad_nodes", 16)),
                solver=solver,
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed fit config: {exc}") from exc

    @classmethod
    def from_json(cls, path, data: Optional[Dataset] = None) -> "FitConfig":
        try:
            obj = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(obj, data)


def validate(config: FitConfig, data: Dataset) -> list:
    """Check ``config`` against ``data``.

    Raises ConfigError on hard violations and returns a list of advisory
    warning strings about the bandwidth.
    """
    if data.d != config.d:
        raise ConfigError(f"config is {config.d}-dimensional but data has d={data.d}")
    warnings = []
    widths = config.box.widths
    if config.h >= widths.max():
        warnings.append(
            f"oversmoothed: h={config.h:.4g} is at least the widest box side {widths.max():.4g}"
        )
    ref = float(np.mean(widths)) * data.n ** (-1.0 / (2 * config.p + 1))
    ratio = config.h / ref
    if ratio > 5.0 or ratio < 0.2:
        warnings.append(
            f"bandwidth h={config.h:.4g} is far from the n^(-1/(2p+1)) scale "
            f"({ref:.4g}); ratio {ratio:.3g}"
        )
    inside = data.x[config.box.contains(data.x)]
    if inside.shape[0]:
        probe = inside[:: max(1, inside.shape[0] // 50)]
        counts = np.array([len(c) for c in data.tree.query_ball_point(probe, config.h)])
        need = len(config.basis) + 1
        if np.median(counts) < need:
            warnings.append(
                f"undersmoothed: a typical h-ball holds {np.median(counts):.0f} points, "
                f"fewer than {need}"
            )
    else:
        warnings.append("no sample points fall inside the estimation box")
    return warnings
