"""Command-line entry point: ``python -m gaquant <command> ...``.

Exit codes: 0 success, 2 configuration or I/O error, 3 estimation error,
4 failed acceptance check (``report --check``).
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .asymptotics import asymptotic_report, sigma_u_squared
from .core import (
    Box,
    ConfigError,
    Dataset,
    EstimationError,
    FitConfig,
    QuantileLevel,
)
from .dgp import TrueModel, identify_normalize, simulate
from .harness import Experiment, McResult, format_tables, report_tables, run_experiment
from .link import LinkEstimate, fit_link, predict_quantile
from .marginals import AdditiveFit, WeightFn, estimate_all

EXIT_OK, EXIT_CONFIG, EXIT_ESTIMATION, EXIT_CHECK = 0, 2, 3, 4
TRUTH_GRID = 101


def _level_override(args, level: QuantileLevel) -> QuantileLevel:
    if args.alpha is not None and args.tau is not None:
        return QuantileLevel.from_dict({"alpha": args.alpha, "tau": args.tau})
    if args.tau is not None:
        return QuantileLevel.from_tau(args.tau)
    if args.alpha is not None:
        return QuantileLevel.from_alpha(args.alpha)
    return level


def _require(value, flag):
    if value is None:
        raise ConfigError(f"{flag} is required")
    return value


def _out_dir(path) -> Path:
    out = Path(_require(path, "--out"))
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
    return out


def cmd_simulate(args) -> int:
    model = TrueModel.from_json(_require(args.config, "--config"))
    if args.tau is not None or args.alpha is not None:
        model = replace(model, tau=_level_override(args, QuantileLevel.from_tau(model.tau)).tau)
    n = _require(args.n, "--n")
    data = simulate(model, n, args.seed)
    out = Path(_require(args.out, "--out"))
    try:
        data.to_csv(out)
    except OSError as exc:
        raise ConfigError(f"cannot write {out}: {exc}") from exc
    box = Box(np.full(model.d, 0.05), np.full(model.d, 0.95))
    anchors = box.midpoint
    ident = identify_normalize(model, WeightFn(0.05, 0.95), anchors)
    grid = np.linspace(0.05, 0.95, TRUTH_GRID)
    truth = {
        "n": n, "seed": args.seed, "level": {"alpha": 1 - model.tau, "tau": model.tau},
        "box": box.to_dict(), "anchors": anchors.tolist(), "gamma": ident.gamma,
        "identified_model": ident.model.to_dict(),
        "components": {str(k + 1): {"x": grid.tolist(), "q": ident.components[k](grid).tolist()}
                       for k in range(model.d)},
    }
    out.with_suffix(".truth.json").write_text(json.dumps(truth, indent=2))
    print(f"wrote {n} rows to {out}")
    return EXIT_OK


def cmd_fit(args) -> int:
    data = Dataset.from_csv(_require(args.data, "--data"))
    cfg_path = _require(args.config, "--config")
    try:
        obj = json.loads(Path(cfg_path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {cfg_path}: {exc}") from exc
    config = FitConfig.from_dict(obj, data)
    config = replace(config, level=_level_override(args, config.level))
    out = _out_dir(args.out)
    fit = estimate_all(data, config, threads=args.threads)
    fit.to_files(out / "components.csv", out / "components.json")
    link = fit_link(data, fit.q0(data.x), config.level, config.box, config.h_g)
    link.to_files(out / "link.csv", out / "link.json", out / "link_sample.csv")
    diag = {"warnings": list(fit.warnings), "c_hat": fit.c_hat, "h_g": link.h_g,
            "level": {"alpha": config.level.alpha, "tau": config.level.tau},
            "n": data.n, "d": data.d, "link_flags": int(link.flags.sum()),
            "components": {str(c.u): c.diagnostics for c in fit.components}}
    (out / "diagnostics.json").write_text(json.dumps(diag, indent=2))
    for w in fit.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"c_hat = {fit.c_hat:.6g}; outputs in {out}")
    return EXIT_OK


def cmd_predict(args) -> int:
    fit_dir = Path(_require(args.fit, "--fit"))
    comps = AdditiveFit.from_files(fit_dir / "components.csv", fit_dir / "components.json")
    link = LinkEstimate.from_files(fit_dir / "link.csv", fit_dir / "link.json")
    path = Path(_require(args.data, "--data"))
    try:
        with path.open(newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    d = comps.config.d
    try:
        pts = np.array([[float(r[f"x{k + 1}"]) for k in range(d)] for r in rows])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{path}: need numeric columns x1..x{d}") from exc
    if pts.size == 0:
        raise ConfigError(f"{path} has no rows")
    preds = [predict_quantile(comps, link, x, return_flag=True) for x in pts]
    dest = sys.stdout if args.out is None else Path(args.out).open("w", newline="")
    try:
        w = csv.writer(dest)
        w.writerow([f"x{k + 1}" for k in range(d)] + ["q_hat", "flag"])
        for x, (val, flag) in zip(pts, preds):
            w.writerow([repr(float(v)) for v in x] + [repr(float(val)), int(flag)])
    finally:
        if dest is not sys.stdout:
            dest.close()
    return EXIT_OK


def cmd_mc(args) -> int:
    exp = Experiment.from_json(_require(args.config, "--config"))
    if args.seed is not None:
        exp = replace(exp, seed_base=args.seed)
    out = _out_dir(args.out)
    result = run_experiment(exp, threads=args.threads)
    result.to_csv(out / "mc.csv")
    result.to_json(out / "mc.json")
    print(f"{len(result.records)} records, failure rate {result.failure_rate():.2%}; "
          f"outputs in {out}")
    return EXIT_OK


def _sigma_for(exp: Experiment) -> dict:
    ident = exp.identified()
    basis = exp.config(exp.n_list[0]).basis
    out = {}
    for u in range(1, exp.model.d + 1):
        out[f"q{u}@{exp.probe:g}"] = sigma_u_squared(ident, u, exp.probe, basis, exp.box,
                                                     exp.anchors)
    return out


def cmd_asymptotics(args) -> int:
    exp = Experiment.from_json(_require(args.config, "--config"))
    n = args.n or exp.n_list[-1]
    ident = exp.identified()
    reports = [asymptotic_report(ident, u, exp.probe, exp.config(n), n, exp.h_const,
                                 seed=args.seed or 0).to_dict()
               for u in range(1, exp.model.d + 1)]
    text = json.dumps({"n": n, "reports": reports}, indent=2)
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text)
    return EXIT_OK


def cmd_report(args) -> int:
    csv_path = Path(_require(args.data, "--data"))
    side = Path(args.config) if args.config else csv_path.with_suffix(".json")
    mc = McResult.from_files(csv_path, side if side.exists() else None)
    sigma = _sigma_for(Experiment.from_dict(mc.experiment)) if mc.experiment else None
    tables = report_tables(mc, sigma)
    text = format_tables(tables)
    if args.out:
        out = _out_dir(args.out)
        for name, rows in tables.items():
            if not rows:
                continue
            with (out / f"{name}.csv").open("w", newline="") as fh:
                w = csv.DictWriter(fh, fieldnames=list(rows[0]))
                w.writeheader()
                for r in rows:
                    w.writerow({k: json.dumps(v) if isinstance(v, dict) else v
                                for k, v in r.items()})
        (out / "report.txt").write_text(text)
    print(text)
    if args.check and not all(r["pass"] for rows in tables.values() for r in rows):
        return EXIT_CHECK
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gaquant",
                                     description="Generalized additive quantile estimation.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--data", help="input CSV")
        p.add_argument("--out", help="output file or directory")
        p.add_argument("--seed", type=int, default=None, help="random seed")
        p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                       help="worker cap (results do not depend on it)")
        p.add_argument("--alpha", type=float, default=None, help="quantile level alpha")
        p.add_argument("--tau", type=float, default=None, help="pinball level tau = 1 - alpha")
        return p

    common(sub.add_parser("simulate", help="simulate a dataset from a model JSON")) \
        .add_argument("--n", type=int, default=None, help="sample size")
    common(sub.add_parser("fit", help="estimate components and link"))
    common(sub.add_parser("predict", help="predict quantiles from a fit directory")) \
        .add_argument("--fit", help="directory written by the fit command")
    common(sub.add_parser("mc", help="run a Monte Carlo experiment"))
    common(sub.add_parser("asymptotics", help="asymptotic constants for an experiment")) \
        .add_argument("--n", type=int, default=None, help="sample size for h_opt")
    common(sub.add_parser("report", help="summary tables from Monte Carlo results")) \
        .add_argument("--check", action="store_true", help="exit 4 if any check fails")
    return parser


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "predict": cmd_predict, "mc": cmd_mc,
            "asymptotics": cmd_asymptotics, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "simulate" and args.seed is None:
        args.seed = 0
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EstimationError as exc:
        node = getattr(exc, "node", None)
        where = f" (node {node})" if node is not None else ""
        print(f"estimation error: {exc}{where}", file=sys.stderr)
        return EXIT_ESTIMATION


if __name__ == "__main__":
    sys.exit(main())
