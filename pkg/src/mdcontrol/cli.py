"""Experiment runner.

Subcommands reproduce the benchmark studies at desk scale and emit
plot-ready CSV traces plus a JSON summary per experiment:

* ``lq``       -- scalar linear-quadratic problem against the Riccati oracle,
                  with a row-by-row certified geometric error bound.
* ``quartic``  -- quartic terminal problem, unregularized and regularized,
                  cross-checked node-for-node against the scalar recursion.
* ``highdim``  -- coupled nonlinear problem over a list of dimensions with
                  surrogate-gap semilog fits.
* ``gradcheck``-- gradient triangle and inequality suites with worst slacks.
* ``run``      -- any of the above from a JSON config file.

Flags override config-file keys; defaults are materialized into the summary
so every emitted file records the exact resolved configuration. Exit status
is 0 when all checks pass, 1 when any check fails, 2 on configuration
errors.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import checks as checks_mod
from .mirror import bregman_integrated, quadratic_map
from .problems import make_highdim, make_lq, make_quartic
from .reference import lq_reference, make_riccati, quartic_recursion
from .solver import (
    SolverConfig,
    Termination,
    fit_geometric_factor,
    fit_loglog_slope,
    run,
    semilog_fit,
    write_report_csv,
)
from .trajectories import TimeGrid, Trajectory, constant_control, evaluate_cost

__all__ = [
    "ExperimentConfig",
    "ConfigError",
    "build_config",
    "run_lq",
    "run_quartic",
    "run_highdim",
    "run_gradcheck",
    "read_rates_csv",
    "main",
]

EXPERIMENTS = ("lq", "quartic", "highdim", "gradcheck")

_DEFAULTS = {
    "lq": dict(tau=1.0, lam=30.0, nt=500, max_iters=200),
    "quartic": dict(tau=0.5, lam=10.0, nt=500, max_iters=1000),
    "highdim": dict(tau=0.5, lam=20.0, nt=500, max_iters=1000),
    "gradcheck": dict(tau=1.0, lam=30.0, nt=2000, max_iters=100),
}


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass
class ExperimentConfig:
    experiment: str
    tau: float
    lam: float
    nt: int = 500
    max_iters: int = 100
    dims: tuple[int, ...] = (5, 10, 20)
    seed: int = 42
    output_dir: str = "runs"
    tail_window: Optional[tuple[int, int]] = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.lam <= 0.0:
            raise ConfigError("lambda must be positive")
        if self.tau < 0.0:
            raise ConfigError("tau must be nonnegative")
        if self.nt < 1 or self.max_iters < 1:
            raise ConfigError("nt and max_iters must be positive")
        if self.experiment == "highdim" and not self.dims:
            raise ConfigError("highdim requires a nonempty dims list")
        if any(d < 1 for d in self.dims):
            raise ConfigError("dims must be positive")
        if self.seed < 0 or self.seed > 2**64 - 1:
            raise ConfigError("seed must fit in 64 bits")
        if self.tail_window is not None:
            lo, hi = self.tail_window
            if not (0 <= lo < hi):
                raise ConfigError("tail_window must be an increasing index pair")

    def resolved(self) -> dict:
        """Canonical JSON form; this exact dict is echoed into summaries."""
        return {
            "experiment": self.experiment,
            "tau": self.tau,
            "lambda": self.lam,
            "nt": self.nt,
            "max_iters": self.max_iters,
            "dims": list(self.dims),
            "seed": self.seed,
            "output_dir": self.output_dir,
            "tail_window": list(self.tail_window) if self.tail_window else None,
        }


_CONFIG_KEYS = {
    "experiment", "tau", "lambda", "lam", "nt", "max_iters",
    "dims", "seed", "output_dir", "tail_window",
}


def build_config(experiment: str, file_values: Optional[dict] = None, overrides: Optional[dict] = None) -> ExperimentConfig:
    """Merge defaults, config-file values, and flag overrides (in that order)."""
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    merged: dict = dict(_DEFAULTS[experiment])
    for source in (file_values or {}), (overrides or {}):
        for key, val in source.items():
            if val is None:
                continue
            if key not in _CONFIG_KEYS:
                raise ConfigError(f"unknown config key {key!r}")
            if key == "lambda":
                key = "lam"
            if key == "experiment":
                continue
            merged[key] = val
    if "dims" in merged:
        merged["dims"] = tuple(int(d) for d in merged["dims"])
    if merged.get("tail_window") is not None:
        lo, hi = merged["tail_window"]
        merged["tail_window"] = (int(lo), int(hi))
    try:
        return ExperimentConfig(experiment=experiment, **merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def _check_dict(result) -> dict:
    return {
        "name": result.name,
        "worst": float(result.worst),
        "threshold": float(result.threshold),
        "direction": result.direction,
        "trials": int(result.trials),
        "passed": bool(result.passed),
    }


def _auto_window(n_errors: int, requested: Optional[tuple[int, int]]) -> tuple[int, int]:
    if requested is not None:
        lo, hi = requested
        return min(lo, n_errors - 1), min(hi, n_errors)
    return max(0, n_errors // 2), n_errors


def _maybe_fit(errors, window, kind: str) -> Optional[float]:
    try:
        if kind == "geometric":
            return fit_geometric_factor(errors, window)
        return fit_loglog_slope(errors, window)
    except (ValueError, FloatingPointError):
        return None


def _write_rates_csv(path, errors: Sequence[float]) -> None:
    """Plot-ready columns; rows restricted to positive errors (n from 1)."""
    with open(path, "w") as fh:
        fh.write("n,error,log_n,log_error\n")
        for k, err in enumerate(errors):
            n = k + 1
            if err > 0.0:
                fh.write(f"{n},{err:.17g},{math.log(n):.17g},{math.log(err):.17g}\n")


def read_rates_csv(path) -> list[dict]:
    """Parse a rates/gap CSV back into typed rows (exact round trip)."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if header != ["n", "error", "log_n", "log_error"]:
            raise ValueError("malformed rates CSV header")
        rows = []
        for line in fh:
            if not line.strip():
                continue
            n, err, log_n, log_err = line.strip().split(",")
            rows.append(
                {"n": int(n), "error": float(err), "log_n": float(log_n), "log_error": float(log_err)}
            )
    return rows


def _emit_summary(summary: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")


def run_lq(config: ExperimentConfig) -> dict:
    """Solve the scalar linear-quadratic benchmark and certify its rate.

    The cost-error trace is measured against the closed-form optimum; each
    row must respect the geometric envelope
    ``lam * (1 - tau/lam)^(n-1) * D0`` (D0 the initial Bregman distance to
    the optimum) within 1e-7.
    """
    if config.tau <= 0.0:
        raise ConfigError("the lq experiment needs tau > 0")
    t0 = time.perf_counter()
    problem = make_lq(1.0, 1.0, 1.0, 0.5, 1.0)
    mirror = quadratic_map()
    grid = TimeGrid(1.0, config.nt)
    ref = lq_reference(make_riccati(1.0, 1.0, 1.0, config.tau, 1.0), 0.5, grid)
    u0 = constant_control(grid, 4.0)

    solver_cfg = SolverConfig(lam=config.lam, tau=config.tau, grid=grid, max_iters=config.max_iters)
    report = run(problem, mirror, solver_cfg, u0)
    costs = report.costs()
    errors = np.abs(costs - ref.j_star)

    d0 = bregman_integrated(mirror, ref.u_star, u0)
    contraction = 1.0 - config.tau / config.lam
    violations = [
        (costs[n] - ref.j_star) - config.lam * contraction ** (n - 1) * d0
        for n in range(1, len(costs))
    ]
    bound_check = checks_mod.CheckResult(
        "lq geometric cost-error bound", max(violations, default=0.0), 1e-7, "<=", len(costs) - 1
    )

    tail = [float(e) for e in errors[1:]]
    window = _auto_window(len(tail), config.tail_window)
    factor = _maybe_fit(tail, window, "geometric")
    report.fitted_geometric_factor = factor

    os.makedirs(config.output_dir, exist_ok=True)
    trace = os.path.join(config.output_dir, "lq_trace.csv")
    write_report_csv(report, trace, cost_errors=errors)
    summary = {
        "experiment": "lq",
        "config": config.resolved(),
        "runs": [
            {
                "label": f"tau={config.tau:g}",
                "j_star": ref.j_star,
                "final_cost": float(costs[-1]),
                "final_residual": report.records[-1].residual,
                "termination": report.termination.value,
                "fitted_geometric_factor": factor,
                "fitted_loglog_slope": None,
                "wall_time_s": time.perf_counter() - t0,
                "trace_csv": trace,
            }
        ],
        "checks": [_check_dict(bound_check)],
    }
    summary["all_passed"] = all(c["passed"] for c in summary["checks"])
    _emit_summary(summary, os.path.join(config.output_dir, "lq_summary.json"))
    return summary


def run_quartic(config: ExperimentConfig) -> dict:
    """Quartic terminal benchmark, unregularized and regularized.

    Always runs tau = 0 alongside the configured tau > 0. Each run is
    checked row-by-row against its certified envelope (sublinear
    ``lam * D0 / n`` for tau = 0, geometric otherwise) and node-for-node
    against the scalar recursion oracle over the first hundred iterations.
    """
    t0 = time.perf_counter()
    problem = make_quartic(1.0)
    mirror = quadratic_map()
    grid = TimeGrid(1.0, config.nt)
    u0 = constant_control(grid, 2.0)
    taus = [0.0] + ([config.tau] if config.tau > 0.0 else [])

    os.makedirs(config.output_dir, exist_ok=True)
    runs = []
    all_checks = []
    for tau in taus:
        t_run = time.perf_counter()
        solver_cfg = SolverConfig(
            lam=config.lam, tau=tau, grid=grid, max_iters=config.max_iters, record_trajectories=True
        )
        report = run(problem, mirror, solver_cfg, u0)
        costs = report.costs()
        errors = costs.copy()  # the optimum value is zero

        d0 = bregman_integrated(mirror, constant_control(grid, 0.0), u0)
        violations = []
        for n in range(1, len(costs)):
            if tau == 0.0:
                bound = config.lam * d0 / n
            else:
                bound = config.lam * (1.0 - tau / config.lam) ** (n - 1) * d0
            violations.append(costs[n] - bound)
        all_checks.append(
            checks_mod.CheckResult(
                f"quartic tau={tau:g} certified cost bound",
                max(violations, default=0.0),
                1e-9,
                "<=",
                len(costs) - 1,
            )
        )

        oracle = quartic_recursion(2.0, 1.0, config.lam, tau, min(100, len(report.controls) - 1))
        dev = 0.0
        for n, alpha in enumerate(oracle):
            dev = max(dev, float(np.max(np.abs(report.controls[n].values - alpha))))
        all_checks.append(
            checks_mod.CheckResult(
                f"quartic tau={tau:g} recursion node agreement", dev, 1e-10, "<=", len(oracle)
            )
        )

        tail = [float(e) for e in errors[1:]]
        window = _auto_window(len(tail), config.tail_window)
        factor = _maybe_fit(tail, window, "geometric") if tau > 0.0 else None
        slope = _maybe_fit(tail, window, "loglog") if tau == 0.0 else None
        report.fitted_geometric_factor = factor
        report.fitted_loglog_slope = slope

        label = f"tau={tau:g}"
        trace = os.path.join(config.output_dir, f"quartic_tau{tau:g}_trace.csv")
        rates = os.path.join(config.output_dir, f"quartic_tau{tau:g}_rates.csv")
        write_report_csv(report, trace, cost_errors=errors)
        _write_rates_csv(rates, tail)
        runs.append(
            {
                "label": label,
                "j_star": 0.0,
                "final_cost": float(costs[-1]),
                "final_residual": report.records[-1].residual,
                "termination": report.termination.value,
                "fitted_geometric_factor": factor,
                "fitted_loglog_slope": slope,
                "wall_time_s": time.perf_counter() - t_run,
                "trace_csv": trace,
                "rates_csv": rates,
            }
        )

    summary = {
        "experiment": "quartic",
        "config": config.resolved(),
        "runs": runs,
        "checks": [_check_dict(c) for c in all_checks],
        "wall_time_s": time.perf_counter() - t0,
    }
    summary["all_passed"] = all(c["passed"] for c in summary["checks"])
    _emit_summary(summary, os.path.join(config.output_dir, "quartic_summary.json"))
    return summary


def _highdim_initial_control(grid: TimeGrid, d: int) -> Trajectory:
    t = grid.nodes
    spread = np.linspace(-1.0, 1.0, d)
    vals = 2.0 * np.sin(2.0 * math.pi * t)[:, None] + 0.5 * np.cos(4.0 * math.pi * t)[:, None] * spread
    return Trajectory(grid, vals)


def run_highdim(config: ExperimentConfig) -> dict:
    """Coupled nonlinear benchmark across dimensions.

    Each dimension runs to ``max_iters`` and reports the surrogate gap
    (cost above the final iterate) over the first two hundred iterations;
    the semilog regression of that gap must be close to linear. A failed or
    blown-up dimension is reported without aborting the batch.
    """
    t0 = time.perf_counter()
    mirror = quadratic_map()
    grid = TimeGrid(1.0, config.nt)
    os.makedirs(config.output_dir, exist_ok=True)

    runs = []
    all_checks = []
    for d in config.dims:
        t_run = time.perf_counter()
        problem = make_highdim(d, seed=config.seed, q=1.0, s=5.0, gamma=1.0, horizon=1.0)
        u0 = _highdim_initial_control(grid, d)
        solver_cfg = SolverConfig(
            lam=config.lam, tau=config.tau, grid=grid, max_iters=config.max_iters, stop_residual=0.0
        )
        report = run(problem, mirror, solver_cfg, u0)
        label = f"d={d}"
        trace = os.path.join(config.output_dir, f"highdim_d{d}_trace.csv")
        write_report_csv(report, trace)

        if report.termination is Termination.BLOWUP or report.final_state is None:
            runs.append(
                {
                    "label": label,
                    "termination": report.termination.value,
                    "wall_time_s": time.perf_counter() - t_run,
                    "trace_csv": trace,
                }
            )
            all_checks.append(
                checks_mod.CheckResult(f"highdim d={d} semilog linearity (R^2)", 0.0, 0.98, ">=", 0)
            )
            continue

        costs = report.costs()
        j_final = evaluate_cost(problem, mirror, config.tau, report.final_control, report.final_state)
        n_show = min(200, len(costs) - 1)
        gaps = np.abs(costs[: n_show + 1] - j_final)

        gap_csv = os.path.join(config.output_dir, f"highdim_d{d}_gap.csv")
        _write_rates_csv(gap_csv, [float(g) for g in gaps[1:]])

        window = config.tail_window if config.tail_window is not None else (20, 200)
        lo = max(0, window[0] - 1)
        hi = min(len(gaps) - 1, window[1])
        tail = [float(g) for g in gaps[1:]]
        try:
            factor, r2 = semilog_fit(tail, (lo, hi))
        except ValueError:
            factor, r2 = None, 0.0
        report.fitted_geometric_factor = factor
        all_checks.append(
            checks_mod.CheckResult(f"highdim d={d} semilog linearity (R^2)", r2, 0.98, ">=", hi - lo)
        )
        runs.append(
            {
                "label": label,
                "final_cost": float(costs[-1]),
                "surrogate_final_cost": j_final,
                "final_residual": report.records[-1].residual,
                "termination": report.termination.value,
                "fitted_geometric_factor": factor,
                "semilog_r_squared": r2,
                "wall_time_s": time.perf_counter() - t_run,
                "trace_csv": trace,
                "gap_csv": gap_csv,
            }
        )

    summary = {
        "experiment": "highdim",
        "config": config.resolved(),
        "runs": runs,
        "checks": [_check_dict(c) for c in all_checks],
        "wall_time_s": time.perf_counter() - t0,
    }
    summary["all_passed"] = all(c["passed"] for c in summary["checks"])
    _emit_summary(summary, os.path.join(config.output_dir, "highdim_summary.json"))
    return summary


def run_gradcheck(config: ExperimentConfig) -> dict:
    """Gradient triangle and inequality suites with worst slacks."""
    t0 = time.perf_counter()
    os.makedirs(config.output_dir, exist_ok=True)
    results = []
    results += checks_mod.gradient_triangle_suite(n_pairs=20, nt=config.nt, seed=config.seed)
    results.append(checks_mod.relative_smoothness_suite(seed=config.seed + 1))
    results.append(checks_mod.relative_convexity_suite(seed=config.seed + 2))
    results.append(
        checks_mod.relative_convexity_suite(
            problem=make_quartic(1.0), tau=0.0, n_pairs=50, seed=config.seed + 3
        )
    )
    results.append(checks_mod.three_point_suite(n_trials=1000, seed=config.seed + 4))
    results.append(checks_mod.bregman_identity_suite(seed=config.seed + 5))
    results.append(checks_mod.dissipation_suite())
    results.append(checks_mod.admissibility_suite())
    results.append(checks_mod.descent_certificate_suite())

    summary = {
        "experiment": "gradcheck",
        "config": config.resolved(),
        "runs": [],
        "checks": [_check_dict(r) for r in results],
        "wall_time_s": time.perf_counter() - t0,
    }
    summary["all_passed"] = all(c["passed"] for c in summary["checks"])
    _emit_summary(summary, os.path.join(config.output_dir, "gradcheck_summary.json"))
    return summary


_RUNNERS = {
    "lq": run_lq,
    "quartic": run_quartic,
    "highdim": run_highdim,
    "gradcheck": run_gradcheck,
}


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--tau", type=float, default=None)
    parser.add_argument("--lambda", dest="lam", type=float, default=None)
    parser.add_argument("--nt", type=int, default=None)
    parser.add_argument("--max-iters", dest="max_iters", type=int, default=None)
    parser.add_argument("--dims", type=str, default=None, help="comma-separated, e.g. 5,10,20")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", dest="output_dir", type=str, default=None)
    parser.add_argument("--config", type=str, default=None, help="JSON config file")
    parser.add_argument(
        "--tail-window", dest="tail_window", type=str, default=None, help="lo:hi fit window"
    )


def _flags_to_overrides(args: argparse.Namespace) -> dict:
    overrides = {
        "tau": args.tau,
        "lam": args.lam,
        "nt": args.nt,
        "max_iters": args.max_iters,
        "seed": args.seed,
        "output_dir": args.output_dir,
    }
    if args.dims is not None:
        try:
            overrides["dims"] = tuple(int(p) for p in args.dims.split(",") if p)
        except ValueError:
            raise ConfigError(f"bad --dims value {args.dims!r}")
    if args.tail_window is not None:
        try:
            lo, hi = args.tail_window.split(":")
            overrides["tail_window"] = (int(lo), int(hi))
        except ValueError:
            raise ConfigError(f"bad --tail-window value {args.tail_window!r}")
    return overrides


def _load_config_file(path: Optional[str]) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}")
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return data


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(prog="mdcontrol", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        _add_common_flags(p)
    p_run = sub.add_parser("run", help="run the experiment named in a config file")
    _add_common_flags(p_run)

    args = parser.parse_args(argv)
    try:
        file_values = _load_config_file(args.config)
        if args.command == "run":
            experiment = file_values.get("experiment")
            if experiment is None:
                raise ConfigError("'run' needs an 'experiment' key in the config file")
        else:
            experiment = args.command
            file_exp = file_values.get("experiment")
            if file_exp is not None and file_exp != experiment:
                raise ConfigError(
                    f"config file is for experiment {file_exp!r}, not {experiment!r}"
                )
        overrides = _flags_to_overrides(args)
        config = build_config(experiment, file_values, overrides)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2

    try:
        summary = _RUNNERS[config.experiment](config)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    for row in summary["checks"]:
        status = "PASS" if row["passed"] else "FAIL"
        print(f"[{status}] {row['name']}: worst {row['worst']:+.3e} (require {row['direction']} {row['threshold']:+.3e})")
    print(f"summary written to {os.path.join(config.output_dir, config.experiment + '_summary.json')}")
    return 0 if summary["all_passed"] else 1


if __name__ == "__main__":
    sys.exit(main())
