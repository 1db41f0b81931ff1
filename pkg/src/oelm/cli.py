"""Batch experiment driver.

``oelm run config.json`` wires excitation, model, surrogate optimization and
the selected estimator from one config file, then writes plot-ready
artifacts: ``result.json``, ``manifest.json`` and, when a surrogate was
fitted, ``theta.json``, ``trace.csv``, ``irf.csv`` and ``frf.csv``.  All
randomness flows from the config seed, so re-running a config reproduces
every artifact byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .config import ExperimentConfig, load_config
from .counting import LINEAR_CALLS, NONLINEAR_CALLS
from .errors import ConfigError, OelmError
from .estimators import (
    control_variate_estimate,
    importance_sampling_estimate,
    mcs_estimate,
    rare_event_conditioning,
    rare_event_relaxed_is,
)
from .linear_system import (
    LinearSystemParams,
    SurrogateFactory,
    frequency_response,
    unit_impulse_response,
)
from .optimizer import (
    draw_pilot,
    optimize_correlation,
    optimize_cross_entropy,
    optimize_is_variance,
    optimize_rare_event,
    theta0_default,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_BUDGET = 4


def _json_default(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"not JSON serializable: {type(value).__name__}")


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _write_csv(path: str, rows: list[dict]) -> None:
    header: list[str] = []
    for row in rows:
        header.extend(k for k in row if k not in header)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=header)
        writer.writeheader()
        writer.writerows(rows)


def _display(value: float, digits: int = 3) -> float:
    if value == 0.0 or not math.isfinite(value):
        return value
    return float(f"{value:.{digits}g}")


def run_experiment(cfg: ExperimentConfig, out_dir: str) -> int:
    """Run one configured experiment and write its artifacts.

    Returns the process exit code: 0 on convergence, 4 when a call cap
    stopped the estimator short of its target CoV.
    """
    os.makedirs(out_dir, exist_ok=True)
    rng = cfg.rng()
    resp = cfg.build_response()
    basis = resp.basis
    budget = cfg.method.build_budget()
    method = cfg.method.name
    cap = cfg.method.max_nonlinear
    tcov = cfg.method.target_cov
    threshold = cfg.qoi.threshold
    n0 = NONLINEAR_CALLS.value
    l0 = LINEAR_CALLS.value

    opt = None
    if method == "mcs":
        res = mcs_estimate(resp.peaks, resp.n, rng, target_cov=tcov,
                           threshold=threshold, max_samples=cap)
    elif method in ("acv", "ais"):
        theta0 = theta0_default(basis, resp.model, budget.dof_max)
        if method == "acv":
            pilot = draw_pilot(resp.peaks, resp.n, budget.n_pilot, rng)
            opt = optimize_correlation(pilot, basis, budget, rng,
                                       modulation=resp.modulation, theta0=theta0)
        else:
            optimize = (optimize_is_variance
                        if cfg.method.objective == "is_variance"
                        else optimize_cross_entropy)
            opt = optimize(resp.peaks, basis, budget, rng,
                           modulation=resp.modulation, model=resp.model)
        surrogate = SurrogateFactory(basis, resp.modulation).build(opt.params)
        remaining = cap - (NONLINEAR_CALLS.value - n0)
        if remaining <= 0:
            raise OelmError("surrogate optimization spent the whole call budget")
        if method == "acv":
            res = control_variate_estimate(resp.peaks, surrogate, rng,
                                           target_cov=tcov, max_nonlinear=remaining)
        else:
            res = importance_sampling_estimate(resp.peaks, surrogate, rng,
                                               target_cov=tcov,
                                               max_nonlinear=remaining)
    else:
        opt = optimize_rare_event(resp.peaks, basis, threshold, budget, rng,
                                  objective=cfg.method.objective,
                                  modulation=resp.modulation,
                                  theta0=theta0_default(basis, resp.model,
                                                        budget.dof_max))
        surrogate = SurrogateFactory(basis, resp.modulation).build(opt.params)
        remaining = cap - (NONLINEAR_CALLS.value - n0)
        if remaining <= 0:
            raise OelmError("surrogate optimization spent the whole call budget")
        if method == "ais-relax":
            res = rare_event_relaxed_is(resp.peaks, surrogate, threshold, rng,
                                        reference_chain=opt.chain,
                                        target_cov=tcov,
                                        max_nonlinear=remaining)
        else:
            res = rare_event_conditioning(resp.peaks, surrogate, threshold, rng,
                                          target_cov=tcov,
                                          max_nonlinear=remaining)

    total_nonlinear = NONLINEAR_CALLS.value - n0
    total_linear = LINEAR_CALLS.value - l0
    payload = res.to_dict()
    payload.update({
        "seed": cfg.seed,
        "config_hash": cfg.config_hash(),
        "qoi": cfg.qoi.to_dict(),
        "n_nonlinear_total": total_nonlinear,
        "n_linear_total": total_linear,
        "optimization": None if opt is None else {
            "objective": opt.objective,
            "score": opt.score,
            "dof": opt.params.n_modes,
            "dof_scores": {str(k): v for k, v in opt.dof_scores.items()},
            "n_nonlinear": opt.n_nonlinear,
        },
        "display": {
            "estimate": _display(res.estimate),
            "cov": _display(res.cov),
        },
    })
    artifacts = ["manifest.json", "result.json"]
    _write_json(os.path.join(out_dir, "result.json"), payload)

    if opt is not None:
        artifacts += ["theta.json", "trace.csv", "irf.csv", "frf.csv"]
        _write_json(os.path.join(out_dir, "theta.json"), {
            "params": opt.params.to_dict(),
            "objective": opt.objective,
            "score": opt.score,
            "dof_scores": {str(k): v for k, v in opt.dof_scores.items()},
            "n_nonlinear": opt.n_nonlinear,
            "n_linear": opt.n_linear,
            "excitation": cfg.excitation.to_dict(),
        })
        _write_csv(os.path.join(out_dir, "trace.csv"), opt.trace)
        _export_linsys(opt.params, cfg.excitation.to_dict(), out_dir)

    _write_json(os.path.join(out_dir, "manifest.json"), {
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "version": __version__,
        "artifacts": sorted(artifacts),
    })
    return EXIT_OK if res.status == "converged" else EXIT_BUDGET


def _export_linsys(params: LinearSystemParams, excitation: dict, out_dir: str) -> None:
    duration = excitation["duration"]
    dt = excitation["dt"]
    omega_max = excitation["omega_max"]
    t = np.arange(0.0, duration + 0.5 * dt, dt)
    irf = unit_impulse_response(params, t)
    _write_csv(os.path.join(out_dir, "irf.csv"),
               [{"t": f"{ti:.6f}", "h": repr(float(hi))} for ti, hi in zip(t, irf)])
    omega = np.linspace(0.0, omega_max, 512)
    frf = frequency_response(params, omega)
    _write_csv(os.path.join(out_dir, "frf.csv"),
               [{"omega": repr(float(w)), "re": repr(float(v.real)),
                 "im": repr(float(v.imag)), "abs": repr(float(abs(v)))}
                for w, v in zip(omega, frf)])


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = ExperimentConfig.from_dict({**cfg.to_dict(), "seed": args.seed})
    out_dir = args.out or cfg.output or "."
    code = run_experiment(cfg, out_dir)
    result_path = os.path.join(out_dir, "result.json")
    with open(result_path) as fh:
        summary = json.load(fh)
    print(f"{cfg.method.name}: estimate {summary['display']['estimate']} "
          f"(cov {summary['display']['cov']}), "
          f"{summary['n_nonlinear_total']} nonlinear calls, {summary['status']}")
    print(f"artifacts in {out_dir}")
    return code


def cmd_table(args) -> int:
    config_paths = sorted(
        os.path.join(args.dir, name) for name in os.listdir(args.dir)
        if name.endswith(".json"))
    out_dir = args.out or args.dir
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    for path in config_paths:
        name = os.path.splitext(os.path.basename(path))[0]
        row = {"config": name, "method": "", "qoi": "", "estimate": "",
               "cov": "", "n_nonlinear": "", "status": ""}
        try:
            cfg = load_config(path)
            if args.seed is not None:
                cfg = ExperimentConfig.from_dict({**cfg.to_dict(), "seed": args.seed})
            row["method"] = cfg.method.name
            row["qoi"] = (cfg.qoi.kind if cfg.qoi.threshold is None
                          else f"P(peak>{cfg.qoi.threshold:g})")
            run_experiment(cfg, os.path.join(out_dir, name))
            with open(os.path.join(out_dir, name, "result.json")) as fh:
                res = json.load(fh)
            row.update({
                "estimate": repr(res["estimate"]),
                "cov": _display(res["cov"]),
                "n_nonlinear": res["n_nonlinear_total"],
                "status": res["status"],
            })
        except (OSError, OelmError, ValueError) as exc:
            row["status"] = f"error: {exc}"
        rows.append(row)
        print(f"{row['config']}: {row['status']}"
              + (f" estimate {row['estimate']}" if row["estimate"] else ""))
    _write_csv(os.path.join(out_dir, "table.csv"), rows)
    print(f"table written to {os.path.join(out_dir, 'table.csv')}")
    return EXIT_OK


def cmd_export_linsys(args) -> int:
    try:
        with open(args.theta) as fh:
            payload = json.load(fh)
        params = LinearSystemParams(**payload["params"])
        excitation = payload["excitation"]
    except (OSError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"theta: cannot read linear system from {args.theta}: {exc}")
    out_dir = args.out or os.path.dirname(os.path.abspath(args.theta))
    os.makedirs(out_dir, exist_ok=True)
    _export_linsys(params, excitation, out_dir)
    print(f"irf.csv and frf.csv written to {out_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oelm",
        description="Variance-reduced response statistics of nonlinear "
                    "oscillators via optimized linear surrogates.")
    parser.add_argument("--threads", type=int, default=None,
                        help="cap worker threads (default: available parallelism)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment config")
    p_run.add_argument("config", help="path to an experiment JSON file")
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.set_defaults(fn=cmd_run)

    p_table = sub.add_parser("table", help="run every config in a directory "
                                           "and aggregate a results table")
    p_table.add_argument("dir", help="directory of experiment JSON files")
    p_table.add_argument("--seed", type=int, default=None, help="override every config seed")
    p_table.add_argument("--out", default=None, help="output directory")
    p_table.set_defaults(fn=cmd_table)

    p_exp = sub.add_parser("export-linsys",
                           help="write IRF/FRF tables for a fitted linear system")
    p_exp.add_argument("theta", help="theta.json written by a previous run")
    p_exp.add_argument("--out", default=None, help="output directory")
    p_exp.set_defaults(fn=cmd_export_linsys)
    return parser


def _set_threads(threads: int | None) -> None:
    if threads is None:
        return
    if threads < 1:
        raise ConfigError("--threads: must be >= 1")
    os.environ["OMP_NUM_THREADS"] = str(threads)
    try:
        import numba

        numba.set_num_threads(threads)
    except ImportError:
        pass


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _set_threads(args.threads)
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OelmError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
