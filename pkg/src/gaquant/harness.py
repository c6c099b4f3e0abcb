"""Monte Carlo experiments: replicate the full pipeline and summarise the errors.

Replication ``r`` at sample size ``n`` simulates with the seed
``[seed_base + r, n]``, so every cell is reproducible on its own and the
results do not depend on how cells are distributed over workers.
"""
from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .core import Box, ConfigError, EstimationError, FitConfig, QuantileLevel
from .dgp import TrueModel, covariate_draws, identify_normalize, simulate
from .link import fit_link
from .marginals import WeightFn, default_grid, estimate_all

FAILURE_LIMIT = 0.05

__all__ = [
    "Experiment",
    "McResult",
    "RateFit",
    "run_experiment",
    "run_cell",
    "rate_fit",
    "jarque_bera",
    "uniform_error",
    "report_tables",
    "format_tables",
]


@dataclass(frozen=True, eq=False)
class Experiment:
    """One Monte Carlo design.

    ``h = h_const * n^(-1/(2p+1))``; ``h_g = h_g_const * n^(-1/5)``, or the
    data-driven default when ``h_g_const`` is ``None``.  ``probe`` is the
    ``x_u`` value at which every component is evaluated; ``sup_points``
    equispaced points per axis feed the sup-norm error.  ``link_probe`` is
    an index value, or ``"median"`` for the median of the identified index
    over in-box covariates.
    """

    model: TrueModel
    n_list: tuple
    replications: int
    box: Box
    anchors: tuple
    p: int = 2
    h_const: float = 1.0
    h_g_const: Optional[float] = None
    quad_nodes: int = 16
    probe: float = 0.5
    sup_points: int = 21
    fit_link: bool = False
    link_probe: object = "median"
    seed_base: int = 0

    def __post_init__(self):
        n_list = tuple(int(n) for n in self.n_list)
        object.__setattr__(self, "n_list", n_list)
        object.__setattr__(self, "anchors", tuple(float(a) for a in self.anchors))
        if self.replications < 2:
            raise ConfigError("need at least 2 replications")
        if not n_list or any(b <= a for a, b in zip(n_list, n_list[1:])):
            raise ConfigError("n_list must be strictly increasing")
        if len(self.anchors) != self.model.d or self.box.d != self.model.d:
            raise ConfigError("box, anchors and model dimensions differ")

    @property
    def level(self) -> QuantileLevel:
        return QuantileLevel.from_tau(self.model.tau)

    def bandwidth(self, n: int) -> float:
        return self.h_const * n ** (-1.0 / (2 * self.p + 1))

    def identified(self):
        w1 = WeightFn(float(self.box.lower[0]), float(self.box.upper[0]))
        return identify_normalize(self.model, w1, self.anchors)

    def config(self, n: int) -> FitConfig:
        return FitConfig(p=self.p, h=self.bandwidth(n), h_g=None, level=self.level,
                         box=self.box, anchors=np.array(self.anchors),
                         quad_nodes=self.quad_nodes)

    def link_value(self) -> float:
        if self.link_probe != "median":
            return float(self.link_probe)
        ident = self.identified()
        xs = covariate_draws(ident.model, 100_000, np.random.default_rng(12345))
        xs = xs[self.box.contains(xs)]
        return float(np.median(ident.q0(xs)))

    def to_dict(self) -> dict:
        return {"model": self.model.to_dict(), "n_list": list(self.n_list),
                "replications": self.replications, "box": self.box.to_dict(),
                "anchors": list(self.anchors), "p": self.p, "h_const": self.h_const,
                "h_g_const": self.h_g_const, "quad_nodes": self.quad_nodes,
                "probe": self.probe, "sup_points": self.sup_points,
                "fit_link": self.fit_link, "link_probe": self.link_probe,
                "seed_base": self.seed_base}

    @classmethod
    def from_dict(cls, obj: dict) -> "Experiment":
        known = {"model", "n_list", "replications", "box", "anchors", "p", "h_const",
                 "h_g_const", "quad_nodes", "probe", "sup_points", "fit_link", "link_probe",
                 "seed_base"}
        extra = set(obj) - known
        if extra:
            raise ConfigError(f"unknown experiment fields: {sorted(extra)}")
        try:
            model = TrueModel.from_dict(obj["model"])
            box = Box(obj["box"]["lower"], obj["box"]["upper"])
            anchors = obj.get("anchors") or box.midpoint.tolist()
            rest = {k: obj[k] for k in known - {"model", "box", "anchors"} if k in obj}
            return cls(model=model, box=box, anchors=tuple(anchors), **rest)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed experiment: {exc}") from exc

    @classmethod
    def from_json(cls, path) -> "Experiment":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read experiment {path}: {exc}") from exc


def _grids(exp: Experiment, config: FitConfig):
    out = []
    for k in range(exp.model.d):
        lo, hi = exp.box.lower[k], exp.box.upper[k]
        extra = np.linspace(lo, hi, exp.sup_points)
        g = np.concatenate([default_grid(config, k + 1), extra, [exp.probe]])
        out.append(np.unique(np.clip(g, lo, hi)))
    return out


def run_cell(exp: Experiment, n: int, rep: int, link_v: Optional[float] = None):
    """Records ``(n, rep, probe, metric, value)`` for one replication."""
    start = time.perf_counter()
    ident = exp.identified()
    data = simulate(exp.model, n, [exp.seed_base + rep, n])
    config = exp.config(n)
    rows = []
    try:
        fit = estimate_all(data, config, grids=_grids(exp, config))
        for comp, truth in zip(fit.components, ident.components):
            at = float(comp(exp.probe))
            rows.append((n, rep, f"q{comp.u}@{exp.probe:g}", "error", at - float(truth(exp.probe))))
            lo, hi = exp.box.lower[comp.u - 1], exp.box.upper[comp.u - 1]
            sup = np.linspace(lo, hi, exp.sup_points)
            rows.append((n, rep, f"q{comp.u}", "sup_error", uniform_error(comp(sup), truth(sup))))
        rows.append((n, rep, "c_hat", "value", fit.c_hat))
        if exp.fit_link:
            h_g = None if exp.h_g_const is None else exp.h_g_const * n ** (-0.2)
            link = fit_link(data, fit.q0(data.x), config.level, config.box, h_g)
            v = exp.link_value() if link_v is None else link_v
            g_hat, flag = link.evaluate(v)
            rows.append((n, rep, f"G@{v:.6g}", "error", g_hat - float(ident.link(v))))
            rows.append((n, rep, f"G@{v:.6g}", "flag", float(flag)))
    except EstimationError as exc:
        rows = [(n, rep, "cell", "failed", 1.0)]
        rows.append((n, rep, "cell", "reason:" + type(exc).__name__, 1.0))
    rows.append((n, rep, "cell", "seconds", time.perf_counter() - start))
    return rows


def _cell_star(args):
    return run_cell(*args)


@dataclass
class McResult:
    experiment: dict
    records: list = field(default_factory=list)

    def values(self, probe: str, metric: str) -> dict:
        failed = {(r[0], r[1]) for r in self.records if r[3] == "failed"}
        out = {}
        for n, rep, pr, me, val in self.records:
            if pr == probe and me == metric and (n, rep) not in failed:
                out.setdefault(n, []).append(val)
        return {n: np.array(v) for n, v in sorted(out.items())}

    def probes(self, metric: str):
        return sorted({r[2] for r in self.records if r[3] == metric})

    def failure_rate(self) -> float:
        cells = {(r[0], r[1]) for r in self.records}
        failed = {(r[0], r[1]) for r in self.records if r[3] == "failed"}
        return len(failed) / max(1, len(cells))

    def rmse(self, probe: str, metric: str = "error") -> dict:
        return {n: float(np.sqrt(np.mean(v**2))) for n, v in self.values(probe, metric).items()}

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "rep", "probe", "metric", "value"])
            for n, rep, pr, me, val in self.records:
                w.writerow([n, rep, pr, me, repr(float(val))])

    def summary(self) -> dict:
        out = {"experiment": self.experiment, "failure_rate": self.failure_rate(), "rmse": {}}
        for probe in self.probes("error"):
            out["rmse"][probe] = {str(n): v for n, v in self.rmse(probe).items()}
        return out

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.summary(), indent=2))

    @classmethod
    def from_files(cls, csv_path, json_path=None) -> "McResult":
        try:
            with Path(csv_path).open(newline="") as fh:
                rows = list(csv.DictReader(fh))
            exp = json.loads(Path(json_path).read_text())["experiment"] if json_path else {}
        except (OSError, KeyError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read Monte Carlo results: {exc}") from exc
        if not rows:
            raise ConfigError(f"{csv_path} holds no results")
        try:
            recs = [(int(r["n"]), int(r["rep"]), r["probe"], r["metric"], float(r["value"]))
                    for r in rows]
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"malformed results file: {exc}") from exc
        return cls(experiment=exp, records=recs)


def run_experiment(exp: Experiment, threads: int = 1) -> McResult:
    """Run every ``(n, replication)`` cell; raises when more than 5% of cells fail."""
    link_v = exp.link_value() if exp.fit_link else None
    tasks = [(exp, n, r, link_v) for n in exp.n_list for r in range(exp.replications)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(_cell_star, tasks, chunksize=4))
    else:
        chunks = [_cell_star(t) for t in tasks]
    result = McResult(experiment=exp.to_dict(), records=[r for c in chunks for r in c])
    if result.failure_rate() > FAILURE_LIMIT:
        raise EstimationError(
            f"{result.failure_rate():.1%} of Monte Carlo cells failed (limit {FAILURE_LIMIT:.0%})")
    return result


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r2: float


def rate_fit(n_list, rmse_list) -> RateFit:
    """Least-squares line through ``(log n, log rmse)``."""
    n = np.asarray(n_list, dtype=float)
    e = np.asarray(rmse_list, dtype=float)
    if n.size < 3 or n.size != e.size:
        raise ConfigError("rate fit needs at least 3 sample sizes with one RMSE each")
    if np.any(e <= 0) or np.any(n <= 0):
        raise ConfigError("rate fit needs positive sample sizes and RMSEs")
    x, y = np.log(n), np.log(e)
    xc = x - x.mean()
    slope = float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (intercept + slope * x)
    ss = float(np.dot(y - y.mean(), y - y.mean()))
    # a flat response is fitted exactly; rounding in the mean must not turn that into r2 = 0
    flat = np.ptp(y) <= 1e-12 * max(1.0, float(np.max(np.abs(y))))
    r2 = 1.0 if flat else 1.0 - float(np.dot(resid, resid)) / ss
    return RateFit(slope, intercept, r2)


def jarque_bera(samples):
    """``(statistic, p_value)`` of the Jarque-Bera normality test."""
    x = np.asarray(samples, dtype=float).ravel()
    m = x.size
    if m < 20:
        raise ConfigError("Jarque-Bera needs at least 20 samples")
    c = x - x.mean()
    m2 = np.mean(c**2)
    if not m2 > 0:
        raise ConfigError("Jarque-Bera is undefined for constant samples")
    skew = np.mean(c**3) / m2**1.5
    kurt = np.mean(c**4) / m2**2
    stat = m / 6.0 * (skew**2 + (kurt - 3.0) ** 2 / 4.0)
    return float(stat), float(math.exp(-0.5 * stat))


def uniform_error(estimate, truth) -> float:
    return float(np.max(np.abs(np.asarray(estimate, dtype=float) - np.asarray(truth, dtype=float))))


SLOPE_BAND = (-0.55, -0.25)


def report_tables(mc: McResult, sigma2: Optional[dict] = None, h_const: Optional[float] = None,
                  p: int = 2) -> dict:
    """Rate, normality, variance-ratio, bias and uniform-error tables.

    ``sigma2`` maps a probe label such as ``"q2@0.5"`` to its asymptotic
    variance.  Each row carries a ``pass`` entry for the acceptance check.
    """
    exp = mc.experiment
    h_const = exp.get("h_const", 1.0) if h_const is None else h_const
    p = exp.get("p", p)
    tables = {"rate": [], "normality": [], "variance": [], "bias": [], "uniform": []}
    for probe in mc.probes("error"):
        rm = mc.rmse(probe)
        # an estimate pinned by construction (probe at the anchor) has zero error
        if len(rm) >= 3 and all(v > 0 for v in rm.values()):
            fit = rate_fit(list(rm), list(rm.values()))
            tables["rate"].append({"probe": probe, "slope": fit.slope, "intercept": fit.intercept,
                                   "r2": fit.r2, "pass": SLOPE_BAND[0] <= fit.slope <= SLOPE_BAND[1]})
        for n, v in mc.values(probe, "error").items():
            if v.size >= 20 and np.std(v) > 0:
                stat, pval = jarque_bera((v - v.mean()) / v.std(ddof=1))
                tables["normality"].append({"probe": probe, "n": n, "jb": stat, "p_value": pval,
                                            "pass": pval > 0.01})
            if not probe.startswith("q") or v.size < 2 or np.std(v) == 0:
                continue
            h = h_const * n ** (-1.0 / (2 * p + 1))
            scaled = math.sqrt(n * h) * v
            t = float(scaled.mean() / (scaled.std(ddof=1) / math.sqrt(v.size)))
            tables["bias"].append({"probe": probe, "n": n, "mean_scaled": float(scaled.mean()),
                                   "t": t, "pass": abs(t) < 3})
            if sigma2 and probe in sigma2 and sigma2[probe] > 0:
                ratio = float(scaled.var(ddof=1) / sigma2[probe])
                tables["variance"].append({"probe": probe, "n": n, "mc_var": float(scaled.var(ddof=1)),
                                           "sigma2": sigma2[probe], "ratio": ratio,
                                           "pass": 1 / 1.5 <= ratio <= 1.5})
    for probe in mc.probes("sup_error"):
        med = {n: float(np.median(v)) for n, v in mc.values(probe, "sup_error").items()}
        ns = list(med)
        dec = all(med[b] < med[a] for a, b in zip(ns, ns[1:]))
        tables["uniform"].append({"probe": probe, "medians": med, "pass": dec and len(ns) >= 2})
    return tables


def format_tables(tables: dict) -> str:
    """Aligned plain-text rendering of ``report_tables`` output."""
    lines = []
    for name, rows in tables.items():
        if not rows:
            continue
        lines.append(f"[{name}]")
        keys = list(rows[0])
        cells = [[_fmt(r[k]) for k in keys] for r in rows]
        widths = [max(len(k), *(len(c[i]) for c in cells)) for i, k in enumerate(keys)]
        lines.append("  ".join(k.ljust(w) for k, w in zip(keys, widths)))
        for c in cells:
            lines.append("  ".join(v.ljust(w) for v, w in zip(c, widths)))
        lines.append("")
    return "\n".join(lines)


def _fmt(v):
    if isinstance(v, bool):
        return "PASS" if v else "FAIL"
    if isinstance(v, float):
        return f"{v:.4g}"
    if isinstance(v, dict):
        return " ".join(f"{k}:{_fmt(x)}" for k, x in v.items())
    return str(v)
