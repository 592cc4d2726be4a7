"""Reusable verification suites.

Each suite measures the worst signed slack of one of the certified
inequalities (or the worst mutual deviation of the gradient oracles) over
randomized instances and reports it with its pass threshold. The gradcheck
experiment and the test suite both run these.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .mirror import (
    MirrorMap,
    bregman_integrated,
    bregman_pointwise,
    mirror_step_pointwise,
    quadratic_map,
    quartic_augmented_map,
    three_point_check,
)
from .problems import Box, ProblemSpec, Unconstrained, make_lq, make_quartic
from .reference import (
    adjoint_gradient,
    fd_gradient,
    ledger_for_problem,
    pair_gradient,
    sensitivity_gradient,
)
from .solver import SolverConfig, admissibility_modulus_check, check_dissipation, run
from .trajectories import TimeGrid, Trajectory, constant_control, inner_product

__all__ = [
    "CheckResult",
    "smooth_random_control",
    "gradient_triangle_suite",
    "relative_smoothness_suite",
    "relative_convexity_suite",
    "three_point_suite",
    "dissipation_suite",
    "admissibility_suite",
    "descent_certificate_suite",
    "bregman_identity_suite",
]

FD_TOL = 1e-6
SENS_TOL = 1e-8
SMOOTHNESS_TOL = 1e-8
CONVEXITY_TOL = 1e-8
THREE_POINT_TOL = 1e-9
DISSIPATION_TOL = 1e-8
ADMISSIBILITY_TOL = 1e-10
CERTIFICATE_TOL = 1e-8
BREGMAN_IDENTITY_TOL = 1e-10


@dataclass
class CheckResult:
    """Outcome of one suite: pass iff ``worst`` stays on the right side of
    ``threshold`` in the stated ``direction`` ('<=' or '>=')."""

    name: str
    worst: float
    threshold: float
    direction: str
    trials: int

    @property
    def passed(self) -> bool:
        if self.direction == "<=":
            return self.worst <= self.threshold
        return self.worst >= self.threshold

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"[{status}] {self.name}: worst {self.worst:+.3e} "
            f"(require {self.direction} {self.threshold:+.1e}, {self.trials} trials)"
        )


def smooth_random_control(grid: TimeGrid, rng: np.random.Generator, width: int = 1, scale: float = 1.0) -> Trajectory:
    """Low-frequency random control: affine part plus two Fourier modes."""
    t = grid.nodes / grid.horizon
    c = rng.uniform(-1.0, 1.0, size=(width, 4))
    vals = np.empty((grid.steps + 1, width))
    for j in range(width):
        vals[:, j] = scale * (
            c[j, 0]
            + c[j, 1] * t
            + 0.5 * c[j, 2] * np.sin(np.pi * t)
            + 0.25 * c[j, 3] * np.cos(2.0 * np.pi * t)
        )
    return Trajectory(grid, vals)


def _triangle_problems(nt: int):
    grid = TimeGrid(1.0, nt)
    return [
        ("lq", make_lq(1.0, 1.0, 1.0, 0.5, 1.0), 1.0, grid),
        ("quartic", make_quartic(1.0), 0.0, grid),
    ]


def gradient_triangle_suite(
    n_pairs: int = 20,
    nt: int = 2000,
    seed: int = 0,
    adjoint_fn: Callable = adjoint_gradient,
) -> list[CheckResult]:
    """Mutual agreement of the three directional-derivative routes.

    For random smooth ``(u, direction)`` pairs on the linear-quadratic and
    quartic benchmarks, compares the adjoint-gradient pairing against the
    central finite difference of the cost and against the forward
    linearized (sensitivity) value, as relative errors. ``adjoint_fn`` is
    injectable so a deliberately corrupted gradient can be shown to fail.
    """
    rng = np.random.default_rng(seed)
    mirror = quadratic_map()
    worst_fd = 0.0
    worst_sens = 0.0
    for name, problem, tau, grid in _triangle_problems(nt):
        for _ in range(n_pairs):
            u = smooth_random_control(grid, rng)
            if name == "quartic":
                # keep the terminal state away from the flat point so the
                # pairing magnitude stays well scaled
                u = Trajectory(grid, u.values + 1.0)
            direction = smooth_random_control(grid, rng)
            adj = pair_gradient(adjoint_fn(problem, mirror, tau, u), direction)
            fd = fd_gradient(problem, mirror, tau, u, direction)
            sens = sensitivity_gradient(problem, mirror, tau, u, direction)
            denom = max(abs(adj), abs(fd), 1e-12)
            worst_fd = max(worst_fd, abs(adj - fd) / denom)
            denom = max(abs(adj), abs(sens), 1e-12)
            worst_sens = max(worst_sens, abs(adj - sens) / denom)
    trials = 2 * n_pairs
    return [
        CheckResult("gradient triangle, adjoint vs central difference (rel)", worst_fd, FD_TOL, "<=", trials),
        CheckResult("gradient triangle, adjoint vs forward sensitivity (rel)", worst_sens, SENS_TOL, "<=", trials),
    ]


def _bregman_gap(problem, mirror, tau, u, v):
    """(J(v) - J(u) - dJ(u)(v-u), D_h(v|u)) with dJ from the adjoint pairing."""
    from .trajectories import evaluate_cost, integrate_state

    xu = integrate_state(problem, u)
    xv = integrate_state(problem, v)
    ju = evaluate_cost(problem, mirror, tau, u, xu)
    jv = evaluate_cost(problem, mirror, tau, v, xv)
    grad = adjoint_gradient(problem, mirror, tau, u)
    delta = Trajectory(u.grid, v.values - u.values)
    lin = pair_gradient(grad, delta)
    return jv - ju - lin, bregman_integrated(mirror, v, u)


def relative_smoothness_suite(
    problem: Optional[ProblemSpec] = None,
    tau: float = 1.0,
    n_pairs: int = 100,
    nt: int = 500,
    seed: int = 1,
) -> CheckResult:
    """Upper Bregman bound on the cost's linearization gap, modulus from the
    constants ledger."""
    problem = problem if problem is not None else make_lq(1.0, 1.0, 1.0, 0.5, 1.0)
    mirror = quadratic_map()
    ledger = ledger_for_problem(problem, mirror, tau)
    if ledger is None:
        raise ValueError("relative smoothness suite needs a problem with smoothness data")
    grid = TimeGrid(problem.horizon, nt)
    rng = np.random.default_rng(seed)
    worst = np.inf
    for _ in range(n_pairs):
        u = smooth_random_control(grid, rng, problem.control_dim)
        v = smooth_random_control(grid, rng, problem.control_dim)
        gap, breg = _bregman_gap(problem, mirror, tau, u, v)
        worst = min(worst, ledger.rel_smooth * breg - gap)
    return CheckResult("relative smoothness (ledger modulus)", worst, -SMOOTHNESS_TOL, ">=", n_pairs)


def relative_convexity_suite(
    problem: Optional[ProblemSpec] = None,
    tau: float = 1.0,
    n_pairs: int = 100,
    nt: int = 500,
    seed: int = 2,
) -> CheckResult:
    """Lower Bregman bound with modulus tau; requires a declared-convex problem."""
    problem = problem if problem is not None else make_lq(1.0, 1.0, 1.0, 0.5, 1.0)
    if not problem.convexity_flag:
        raise ValueError("relative convexity applies only to declared-convex problems")
    mirror = quadratic_map()
    grid = TimeGrid(problem.horizon, nt)
    rng = np.random.default_rng(seed)
    worst = np.inf
    for _ in range(n_pairs):
        u = smooth_random_control(grid, rng, problem.control_dim)
        v = smooth_random_control(grid, rng, problem.control_dim)
        gap, breg = _bregman_gap(problem, mirror, tau, u, v)
        worst = min(worst, gap - tau * breg)
    return CheckResult(f"relative convexity (modulus tau={tau:g})", worst, -CONVEXITY_TOL, ">=", n_pairs)


def three_point_suite(n_trials: int = 1000, seed: int = 3, dim: int = 1) -> CheckResult:
    """Prox three-point inequality over random points, both built-in maps,
    unconstrained and box sets."""
    rng = np.random.default_rng(seed)
    maps = [quadratic_map(), quartic_augmented_map(1.0)]
    worst = np.inf
    count = 0
    for trial in range(n_trials):
        mirror = maps[trial % 2]
        if trial % 4 < 2:
            cset = Unconstrained()
            u = rng.uniform(-2.0, 2.0, dim)
            w = rng.uniform(-2.0, 2.0, dim)
        else:
            cset = Box(lower=-np.ones(dim), upper=np.ones(dim))
            u = rng.uniform(-1.0, 1.0, dim)
            w = rng.uniform(-1.0, 1.0, dim)
        xi = rng.uniform(-3.0, 3.0, dim)
        lam = rng.uniform(0.5, 10.0)
        ustar = mirror_step_pointwise(mirror, cset, u, xi, lam)
        worst = min(worst, three_point_check(mirror, cset, u, ustar, w, xi, lam))
        count += 1
    return CheckResult("three-point inequality", worst, -THREE_POINT_TOL, ">=", count)


def bregman_identity_suite(n_trials: int = 200, seed: int = 4, dim: int = 2) -> CheckResult:
    """Three-term Bregman identity, exact up to roundoff for any map."""
    rng = np.random.default_rng(seed)
    maps = [quadratic_map(), quartic_augmented_map(0.7)]
    worst = 0.0
    for trial in range(n_trials):
        mirror = maps[trial % 2]
        u, ubar, w = rng.uniform(-2.0, 2.0, (3, dim))
        lhs = (
            bregman_pointwise(mirror, w, u)
            - bregman_pointwise(mirror, ubar, u)
            - bregman_pointwise(mirror, w, ubar)
        )
        rhs = float((mirror.grad_h(ubar) - mirror.grad_h(u)) @ (w - ubar))
        worst = max(worst, abs(lhs - rhs))
    return CheckResult("Bregman three-term identity (abs dev)", worst, BREGMAN_IDENTITY_TOL, "<=", n_trials)


def _lq_ledger_run(nt: int = 200, iters: int = 60):
    problem = make_lq(1.0, 1.0, 1.0, 0.5, 1.0)
    mirror = quadratic_map()
    tau = 1.0
    ledger = ledger_for_problem(problem, mirror, tau)
    lam = 1.02 * ledger.rel_smooth
    grid = TimeGrid(problem.horizon, nt)
    config = SolverConfig(lam=lam, tau=tau, grid=grid, max_iters=iters, record_trajectories=True)
    report = run(problem, mirror, config, constant_control(grid, 4.0))
    return problem, mirror, tau, ledger, lam, report


def dissipation_suite(nt: int = 200, iters: int = 60) -> CheckResult:
    """Per-iteration energy dissipation at a step parameter above the
    certified smoothness constant."""
    _, _, _, ledger, lam, report = _lq_ledger_run(nt, iters)
    worst = check_dissipation(report.records, lam, ledger.rel_smooth)
    return CheckResult("energy dissipation (lam >= ledger modulus)", worst, -DISSIPATION_TOL, ">=", len(report.records) - 1)


def admissibility_suite(report=None, lam: float = 30.0, sigma_h: float = 1.0) -> CheckResult:
    """Adjacent-node admissibility modulus across all recorded iterations."""
    if report is None:
        problem = make_lq(1.0, 1.0, 1.0, 0.5, 1.0)
        mirror = quadratic_map()
        grid = TimeGrid(1.0, 500)
        config = SolverConfig(lam=lam, tau=1.0, grid=grid, max_iters=100, record_trajectories=True)
        report = run(problem, mirror, config, constant_control(grid, 4.0))
        sigma_h = mirror.strong_convexity
    if not report.etas:
        raise ValueError("admissibility suite needs a report with recorded trajectories")
    worst = np.inf
    for eta, u_next in zip(report.etas, report.controls[1:]):
        worst = min(worst, admissibility_modulus_check(u_next, eta, lam, sigma_h))
    return CheckResult("admissibility modulus", worst, -ADMISSIBILITY_TOL, ">=", len(report.etas))


def descent_certificate_suite(report=None, lam: float = 30.0, mirror: Optional[MirrorMap] = None) -> CheckResult:
    """Integrated prox optimality certificate of every recorded step:
    the linearized gain of the step dominates lam times its Bregman size."""
    if mirror is None:
        mirror = quadratic_map()
    if report is None:
        problem = make_lq(1.0, 1.0, 1.0, 0.5, 1.0)
        grid = TimeGrid(1.0, 500)
        config = SolverConfig(lam=lam, tau=1.0, grid=grid, max_iters=100, record_trajectories=True)
        report = run(problem, mirror, config, constant_control(grid, 4.0))
    if not report.etas:
        raise ValueError("descent certificate suite needs recorded trajectories")
    worst = np.inf
    for n, eta in enumerate(report.etas):
        u_cur = report.controls[n]
        u_nxt = report.controls[n + 1]
        grad_h_vals = (
            u_cur.values
            if mirror.kind == "quadratic"
            else np.stack([mirror.grad_h(row) for row in u_cur.values])
        )
        xi = Trajectory(eta.grid, eta.values - lam * grad_h_vals)
        delta = Trajectory(eta.grid, u_nxt.values - u_cur.values)
        gain = inner_product(xi, delta)
        worst = min(worst, gain - lam * bregman_integrated(mirror, u_nxt, u_cur))
    return CheckResult("mirror-step descent certificate", worst, -CERTIFICATE_TOL, ">=", len(report.etas))
