"""Mirror-descent successive approximations with diagnostics.

One iteration performs a forward state solve, a backward adjoint solve, and
a pointwise prox update of the control at every grid node. The loop records
per-iteration cost, the integrated Bregman step size, and the fixed-point
residual of the update; helpers certify the energy-dissipation inequality,
the admissibility modulus of the iterates, and fitted convergence rates.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .mirror import QUADRATIC, MirrorMap, bregman_integrated, mirror_step_pointwise
from .problems import Box, ProblemSpec, Unconstrained
from .trajectories import (
    BlowupError,
    TimeGrid,
    Trajectory,
    evaluate_cost,
    integrate_adjoint,
    integrate_state,
)

__all__ = [
    "SolverConfig",
    "IterateRecord",
    "SolveReport",
    "Termination",
    "run",
    "stationarity_residual",
    "check_dissipation",
    "fit_geometric_factor",
    "fit_loglog_slope",
    "semilog_fit",
    "admissibility_modulus_check",
    "write_report_csv",
    "read_report_csv",
]


class Termination(Enum):
    MAX_ITERS = "MaxIters"
    RESIDUAL_MET = "ResidualMet"
    COST_DELTA_MET = "CostDeltaMet"
    BLOWUP = "Blowup"


@dataclass(frozen=True)
class SolverConfig:
    """Run parameters.

    ``lam`` is the prox penalty weight (larger means smaller steps), ``tau``
    the control regularization weight. Termination happens at the first of:
    fixed-point residual at most ``stop_residual``, consecutive cost change
    at most ``stop_cost_delta`` (ignored when zero), or ``max_iters``
    iterations. With ``record_trajectories`` the report keeps every control
    iterate and the dual variables of every prox step.
    """

    lam: float
    tau: float
    grid: TimeGrid
    max_iters: int = 100
    stop_residual: float = 1e-10
    stop_cost_delta: float = 0.0
    record_trajectories: bool = False

    def __post_init__(self):
        if self.lam <= 0.0:
            raise ValueError("lam must be positive")
        if self.tau < 0.0:
            raise ValueError("tau must be nonnegative")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if self.stop_residual < 0.0 or self.stop_cost_delta < 0.0:
            raise ValueError("stopping tolerances must be nonnegative")


@dataclass
class IterateRecord:
    iter: int
    cost: float
    bregman_step: float
    residual: float
    sup_control_change: float


@dataclass(eq=False)
class SolveReport:
    records: list[IterateRecord]
    final_control: Optional[Trajectory]
    final_state: Optional[Trajectory]
    final_adjoint: Optional[Trajectory]
    termination: Termination
    fitted_geometric_factor: Optional[float] = None
    fitted_loglog_slope: Optional[float] = None
    controls: list[Trajectory] = field(default_factory=list)
    etas: list[Trajectory] = field(default_factory=list)

    def costs(self) -> np.ndarray:
        return np.array([r.cost for r in self.records])


def _xi_values(problem, mirror, tau, nodes, u_vals, x_vals, p_vals) -> np.ndarray:
    # same expression as grad_u_hamiltonian_tau, with the per-node dimension
    # checks hoisted out of the loop
    grad_h = mirror.grad_h
    quad = mirror.kind == QUADRATIC
    b = problem.batch
    if b is not None and b.drift_jac_u is not None and b.running_grad_u is not None:
        ju = b.drift_jac_u(nodes, x_vals, u_vals)  # (K, d, m)
        g0 = np.einsum("kdm,kd->km", ju, p_vals) - b.running_grad_u(nodes, x_vals, u_vals)
        if tau == 0.0:
            return g0
        gh = u_vals if quad else np.stack([grad_h(u) for u in u_vals])
        return g0 - tau * gh

    jac_u = problem.drift_jac_u
    grad_fu = problem.running_grad_u
    xi = np.empty_like(u_vals)
    for k in range(len(nodes)):
        t, x, u = nodes[k], x_vals[k], u_vals[k]
        g0 = jac_u(t, x, u).T @ p_vals[k] - grad_fu(t, x, u)
        if tau == 0.0:
            xi[k] = g0
        else:
            xi[k] = g0 - tau * (u if quad else grad_h(u))
    return xi


def _step_values(mirror, cset, u_vals, xi_vals, lam) -> np.ndarray:
    # node-parallel prox; the quadratic map admits a vectorized closed form
    if mirror.kind == QUADRATIC and isinstance(cset, (Unconstrained, Box)):
        return cset.project_values(u_vals + xi_vals / lam)
    return np.stack(
        [mirror_step_pointwise(mirror, cset, u_vals[k], xi_vals[k], lam) for k in range(len(u_vals))]
    )


def _eta_values(mirror, u_vals, xi_vals, lam) -> np.ndarray:
    if mirror.kind == QUADRATIC:
        return xi_vals + lam * u_vals
    return xi_vals + lam * np.stack([mirror.grad_h(u) for u in u_vals])


def run(problem: ProblemSpec, mirror: MirrorMap, config: SolverConfig, u0: Trajectory) -> SolveReport:
    """Iterate state solve, adjoint solve, and mirror update from ``u0``.

    The initial control must live on ``config.grid`` with values in the
    problem's control set. Integration blowup ends the run with a
    ``Blowup`` termination instead of raising.
    """
    if u0.grid != config.grid:
        raise ValueError("u0 must live on config.grid")
    if u0.width != problem.control_dim:
        raise ValueError("u0 width must equal control_dim")

    from .reference import ledger_for_problem

    ledger = ledger_for_problem(problem, mirror, config.tau)
    if ledger is not None and config.lam < ledger.rel_smooth:
        warnings.warn(
            f"step parameter lam={config.lam:g} is below the certified smoothness "
            f"constant {ledger.rel_smooth:g}; the dissipation guarantee may not apply",
            stacklevel=2,
        )

    nodes = config.grid.nodes
    cset = problem.control_set
    records: list[IterateRecord] = []
    controls: list[Trajectory] = [u0] if config.record_trajectories else []
    etas: list[Trajectory] = []

    u = u0
    x = p = None
    termination = Termination.MAX_ITERS
    prev_cost = None
    for n in range(config.max_iters):
        try:
            x = integrate_state(problem, u)
            p = integrate_adjoint(problem, u, x)
        except BlowupError:
            records.append(IterateRecord(n, float("nan"), 0.0, float("inf"), float("inf")))
            termination = Termination.BLOWUP
            return SolveReport(records, u, None, None, termination, controls=controls, etas=etas)

        cost = evaluate_cost(problem, mirror, config.tau, u, x)
        xi = _xi_values(problem, mirror, config.tau, nodes, u.values, x.values, p.values)
        u_next = Trajectory(config.grid, _step_values(mirror, cset, u.values, xi, config.lam))
        step_sup = float(np.max(np.linalg.norm(u_next.values - u.values, axis=1)))
        breg = bregman_integrated(mirror, u_next, u)
        records.append(IterateRecord(n, cost, breg, step_sup, step_sup))
        if config.record_trajectories:
            controls.append(u_next)
            etas.append(Trajectory(config.grid, _eta_values(mirror, u.values, xi, config.lam)))

        stop = False
        if step_sup <= config.stop_residual:
            termination = Termination.RESIDUAL_MET
            stop = True
        elif (
            config.stop_cost_delta > 0.0
            and prev_cost is not None
            and abs(prev_cost - cost) <= config.stop_cost_delta
        ):
            termination = Termination.COST_DELTA_MET
            stop = True
        prev_cost = cost
        u = u_next
        if stop:
            break

    try:
        x = integrate_state(problem, u)
        p = integrate_adjoint(problem, u, x)
    except BlowupError:
        return SolveReport(records, u, None, None, Termination.BLOWUP, controls=controls, etas=etas)
    return SolveReport(records, u, x, p, termination, controls=controls, etas=etas)


def stationarity_residual(
    problem: ProblemSpec,
    mirror: MirrorMap,
    tau: float,
    lam: float,
    u: Trajectory,
    x: Trajectory,
    p: Trajectory,
) -> float:
    """Sup over nodes of the prox fixed-point displacement at ``u``.

    Zero exactly at controls satisfying the discrete maximum condition.
    """
    xi = _xi_values(problem, mirror, tau, u.grid.nodes, u.values, x.values, p.values)
    stepped = _step_values(mirror, problem.control_set, u.values, xi, lam)
    return float(np.max(np.linalg.norm(stepped - u.values, axis=1)))


def check_dissipation(records: Sequence[IterateRecord], lam: float, smooth_l: float = 0.0) -> float:
    """Worst signed slack of the per-iteration dissipation inequality.

    Returns ``min_n [cost_n - cost_{n+1} - (lam - smooth_l) * bregman_n]``,
    which is nonnegative (up to tolerance) whenever ``lam`` is at least the
    relative-smoothness constant. With ``smooth_l = 0`` this degrades to a
    monotone-decrease check, valid only when lam dominates the true constant.
    A single record yields 0 (vacuous).
    """
    if len(records) < 2:
        return 0.0
    return min(
        a.cost - b.cost - (lam - smooth_l) * a.bregman_step
        for a, b in zip(records, records[1:])
    )


def _line_fit(xs: np.ndarray, ys: np.ndarray) -> tuple[float, float, float]:
    slope, intercept = np.polyfit(xs, ys, 1)
    pred = slope * xs + intercept
    ss_res = float(np.sum((ys - pred) ** 2))
    ss_tot = float(np.sum((ys - np.mean(ys)) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(slope), float(intercept), r2


def _window_slice(errors, window):
    e = np.asarray(errors, dtype=float)
    lo, hi = (0, len(e)) if window is None else window
    if not (0 <= lo < hi <= len(e)):
        raise ValueError("window out of range")
    if hi - lo < 2:
        raise ValueError("window must contain at least two points")
    sel = e[lo:hi]
    if np.any(sel <= 0.0):
        raise ValueError("errors must be positive on the fit window")
    return np.arange(lo, hi), sel


def fit_geometric_factor(errors: Sequence[float], window=None) -> float:
    """Per-iteration contraction factor from a least-squares semilog fit.

    ``errors[k]`` is treated as the error at iteration ``k + 1``; ``window``
    is a half-open index pair into the list. The fitted slope of
    ``log(error)`` versus iteration is returned exponentiated.
    """
    idx, sel = _window_slice(errors, window)
    slope, _, _ = _line_fit(idx.astype(float), np.log(sel))
    return float(np.exp(slope))


def semilog_fit(errors: Sequence[float], window=None) -> tuple[float, float]:
    """Geometric factor together with the R^2 of the semilog regression."""
    idx, sel = _window_slice(errors, window)
    slope, _, r2 = _line_fit(idx.astype(float), np.log(sel))
    return float(np.exp(slope)), r2


def fit_loglog_slope(errors: Sequence[float], window=None) -> float:
    """Least-squares slope of log(error) against log(iteration).

    Iteration numbers are ``k + 1`` for list index ``k``, so a pure ``1/n``
    sequence starting at the first entry fits slope -1.
    """
    idx, sel = _window_slice(errors, window)
    slope, _, _ = _line_fit(np.log(idx + 1.0), np.log(sel))
    return slope


def admissibility_modulus_check(u_next: Trajectory, eta: Trajectory, lam: float, sigma_h: float) -> float:
    """Worst slack of the adjacent-node admissibility modulus bound.

    For each adjacent node pair the updated control must move by at most
    ``|eta_t - eta_s| / (lam * sigma_h)``; the minimum of (bound - actual)
    over pairs is returned, so values at or above a small negative roundoff
    tolerance certify the bound.
    """
    if u_next.grid != eta.grid:
        raise ValueError("grid mismatch")
    du = np.linalg.norm(np.diff(u_next.values, axis=0), axis=1)
    de = np.linalg.norm(np.diff(eta.values, axis=0), axis=1)
    slack = de / (lam * sigma_h) - du
    return float(np.min(slack))


def write_report_csv(report: SolveReport, path, cost_errors: Optional[Sequence[float]] = None) -> None:
    """Per-iteration trace; the ``cost_error`` column appears only when a
    reference optimum was supplied."""
    with_err = cost_errors is not None
    if with_err and len(cost_errors) != len(report.records):
        raise ValueError("cost_errors length must match records")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if with_err:
            writer.writerow(["iter", "cost", "cost_error", "bregman_step", "residual", "sup_control_change"])
        else:
            writer.writerow(["iter", "cost", "bregman_step", "residual", "sup_control_change"])
        for k, rec in enumerate(report.records):
            row = [rec.iter, f"{rec.cost:.17g}"]
            if with_err:
                row.append(f"{cost_errors[k]:.17g}")
            row += [f"{rec.bregman_step:.17g}", f"{rec.residual:.17g}", f"{rec.sup_control_change:.17g}"]
            writer.writerow(row)


def read_report_csv(path) -> list[dict]:
    """Parse a report trace back into float-valued rows (exact round trip)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for raw in reader:
            rows.append({k: (int(v) if k == "iter" else float(v)) for k, v in raw.items()})
    return rows
