"""Uniform time grids, trajectories, and fixed-step integration.

The state equation is integrated forward and the adjoint equation backward
with classical fourth-order Runge-Kutta. Controls (and, for the adjoint, the
stored state) are node samples; stage values at half steps come from
piecewise-linear interpolation, which caps the observable order at two for
rough inputs. Cost integrals use the composite trapezoidal rule on the same
nodes, so cost, Bregman, and dissipation diagnostics all see the identical
quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from .problems import ProblemSpec

__all__ = [
    "TimeGrid",
    "Trajectory",
    "BlowupError",
    "interpolate",
    "integrate_state",
    "integrate_adjoint",
    "evaluate_cost",
    "bound_check",
    "inner_product",
    "l2_norm",
    "constant_control",
    "control_from_function",
    "write_trajectory_csv",
    "read_trajectory_csv",
]


class BlowupError(RuntimeError):
    """Raised when an integration produces non-finite values."""

    def __init__(self, message: str, node: int):
        super().__init__(message)
        self.node = node


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_k = k * horizon / steps, k = 0..steps."""

    horizon: float
    steps: int

    def __post_init__(self):
        if self.horizon <= 0.0:
            raise ValueError("horizon must be positive")
        if self.steps < 1:
            raise ValueError("steps must be positive")

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @cached_property
    def nodes(self) -> np.ndarray:
        t = np.linspace(0.0, self.horizon, self.steps + 1)
        t.setflags(write=False)
        return t

    @cached_property
    def trapezoid_weights(self) -> np.ndarray:
        w = np.full(self.steps + 1, self.dt)
        w[0] *= 0.5
        w[-1] *= 0.5
        w.setflags(write=False)
        return w


@dataclass(eq=False)
class Trajectory:
    """Node samples of a vector path on a :class:`TimeGrid`.

    ``values`` has shape ``(steps + 1, width)``; entries must be finite.
    Instances are immutable after construction.
    """

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.values, dtype=float))
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] != self.grid.steps + 1:
            raise ValueError("values must have one row per grid node")
        if not np.isfinite(v).all():
            raise ValueError("trajectory values must be finite")
        v.setflags(write=False)
        self.values = v

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def sup_norm(self) -> float:
        return float(np.max(np.linalg.norm(self.values, axis=1)))


def interpolate(traj: Trajectory, t: float) -> np.ndarray:
    """Piecewise-linear value at time ``t``; exact at grid nodes."""
    grid = traj.grid
    if t < 0.0 or t > grid.horizon:
        raise ValueError(f"time {t} outside [0, {grid.horizon}]")
    pos = t / grid.dt
    nearest = round(pos)
    # the division can land an ulp off a node; snap so nodes are exact
    if abs(pos - nearest) <= 32.0 * np.finfo(float).eps * max(1.0, pos) and 0 <= nearest <= grid.steps:
        return traj.values[int(nearest)].copy()
    if pos >= grid.steps:
        return traj.values[grid.steps].copy()
    k = int(pos)
    frac = pos - k
    return (1.0 - frac) * traj.values[k] + frac * traj.values[k + 1]


def _first_bad_node(values: np.ndarray) -> int:
    bad = ~np.isfinite(values).all(axis=1)
    return int(np.argmax(bad))


def integrate_state(problem: ProblemSpec, control: Trajectory) -> Trajectory:
    """Forward RK4 solve of the state equation under ``control``."""
    grid = control.grid
    if control.width != problem.control_dim:
        raise ValueError("control width must equal control_dim")
    n = grid.steps
    h = grid.dt
    half = 0.5 * h
    sixth = h / 6.0
    t = grid.nodes
    u = control.values
    umid = 0.5 * (u[:-1] + u[1:])
    drift = problem.drift

    x = np.empty((n + 1, problem.state_dim))
    x[0] = problem.initial_state
    for k in range(n):
        xk = x[k]
        tk = t[k]
        uk = u[k]
        um = umid[k]
        k1 = drift(tk, xk, uk)
        k2 = drift(tk + half, xk + half * k1, um)
        k3 = drift(tk + half, xk + half * k2, um)
        k4 = drift(tk + h, xk + h * k3, u[k + 1])
        x[k + 1] = xk + sixth * (k1 + 2.0 * (k2 + k3) + k4)

    if not np.isfinite(x).all():
        node = _first_bad_node(x)
        raise BlowupError(f"state integration non-finite at node {node} (t={t[node]:g})", node)
    return Trajectory(grid, x)


def integrate_adjoint(problem: ProblemSpec, control: Trajectory, state: Trajectory) -> Trajectory:
    """Backward RK4 solve of the adjoint equation along ``(control, state)``.

    Terminal value is minus the terminal cost gradient; stage values of the
    state and control are linear interpolants of the stored nodes.
    """
    grid = control.grid
    if state.grid != grid:
        raise ValueError("control and state must share a grid")
    if state.width != problem.state_dim:
        raise ValueError("state width must equal state_dim")
    n = grid.steps
    h = grid.dt
    half = 0.5 * h
    sixth = h / 6.0
    t = grid.nodes
    u = control.values
    x = state.values
    umid = 0.5 * (u[:-1] + u[1:])
    xmid = 0.5 * (x[:-1] + x[1:])
    tmid = 0.5 * (t[:-1] + t[1:])
    jac_x = problem.drift_jac_x
    grad_fx = problem.running_grad_x

    # the rhs  pdot = grad_x f - jac_x^T p  is linear in p, so its
    # coefficients are evaluated once per node and midpoint
    d = problem.state_dim
    b = problem.batch
    if b is not None and b.drift_jac_x is not None and b.running_grad_x is not None:
        jt_node = np.ascontiguousarray(np.swapaxes(b.drift_jac_x(t, x, u), 1, 2))
        g_node = np.asarray(b.running_grad_x(t, x, u), dtype=float)
        jt_mid = np.ascontiguousarray(np.swapaxes(b.drift_jac_x(tmid, xmid, umid), 1, 2))
        g_mid = np.asarray(b.running_grad_x(tmid, xmid, umid), dtype=float)
    else:
        jt_node = np.empty((n + 1, d, d))
        g_node = np.empty((n + 1, d))
        for k in range(n + 1):
            jt_node[k] = jac_x(t[k], x[k], u[k]).T
            g_node[k] = grad_fx(t[k], x[k], u[k])
        jt_mid = np.empty((n, d, d))
        g_mid = np.empty((n, d))
        for k in range(n):
            jt_mid[k] = jac_x(tmid[k], xmid[k], umid[k]).T
            g_mid[k] = grad_fx(tmid[k], xmid[k], umid[k])

    p = np.empty((n + 1, d))
    p[n] = -np.asarray(problem.terminal_grad(x[n]), dtype=float).reshape(-1)
    if d == 1:
        # scalar recursion, avoids small-array dispatch in the hot loop
        jn = jt_node[:, 0, 0]
        gn = g_node[:, 0]
        jm_ = jt_mid[:, 0, 0]
        gm_ = g_mid[:, 0]
        pk = float(p[n, 0])
        for k in range(n, 0, -1):
            jm, gm = jm_[k - 1], gm_[k - 1]
            k1 = gn[k] - jn[k] * pk
            k2 = gm - jm * (pk - half * k1)
            k3 = gm - jm * (pk - half * k2)
            k4 = gn[k - 1] - jn[k - 1] * (pk - h * k3)
            pk = pk - sixth * (k1 + 2.0 * (k2 + k3) + k4)
            p[k - 1, 0] = pk
    else:
        for k in range(n, 0, -1):
            pk = p[k]
            jm, gm = jt_mid[k - 1], g_mid[k - 1]
            k1 = g_node[k] - jt_node[k].dot(pk)
            k2 = gm - jm.dot(pk - half * k1)
            k3 = gm - jm.dot(pk - half * k2)
            k4 = g_node[k - 1] - jt_node[k - 1].dot(pk - h * k3)
            p[k - 1] = pk - sixth * (k1 + 2.0 * (k2 + k3) + k4)

    if not np.isfinite(p).all():
        node = _first_bad_node(p)
        raise BlowupError(f"adjoint integration non-finite at node {node} (t={t[node]:g})", node)
    return Trajectory(grid, p)


def evaluate_cost(problem: ProblemSpec, mirror, tau: float, control: Trajectory, state: Trajectory) -> float:
    """Regularized cost: trapezoidal running + regularizer integral plus terminal cost."""
    grid = control.grid
    if state.grid != grid:
        raise ValueError("control and state must share a grid")
    t = grid.nodes
    u = control.values
    x = state.values
    b = problem.batch
    if b is not None and b.running_cost is not None:
        integrand = np.array(b.running_cost(t, x, u), dtype=float)
    else:
        f = problem.running_cost
        integrand = np.empty(grid.steps + 1)
        for k in range(grid.steps + 1):
            integrand[k] = f(t[k], x[k], u[k])
    if tau != 0.0:
        if getattr(mirror, "kind", None) == "quadratic":
            integrand += tau * 0.5 * np.einsum("ij,ij->i", u, u)
        else:
            h_fn = mirror.h
            for k in range(grid.steps + 1):
                integrand[k] += tau * h_fn(u[k])
    running = float(grid.trapezoid_weights @ integrand)
    return running + float(problem.terminal_cost(x[-1]))


def bound_check(traj: Trajectory, bound: float) -> bool:
    """True when the Euclidean norm at every node is at most ``bound``."""
    if bound <= 0.0:
        raise ValueError("bound must be positive")
    return traj.sup_norm() <= bound


def inner_product(a: Trajectory, b: Trajectory) -> float:
    """Discrete L2 inner product (trapezoidal) of two trajectories."""
    if a.grid != b.grid:
        raise ValueError("grid mismatch")
    return float(a.grid.trapezoid_weights @ np.einsum("ij,ij->i", a.values, b.values))


def l2_norm(traj: Trajectory) -> float:
    """Discrete L2 norm (trapezoidal)."""
    return np.sqrt(max(inner_product(traj, traj), 0.0))


def constant_control(grid: TimeGrid, value) -> Trajectory:
    value = np.atleast_1d(np.asarray(value, dtype=float))
    return Trajectory(grid, np.tile(value, (grid.steps + 1, 1)))


def control_from_function(grid: TimeGrid, fn: Callable[[float], np.ndarray]) -> Trajectory:
    vals = np.stack([np.atleast_1d(np.asarray(fn(t), dtype=float)) for t in grid.nodes])
    return Trajectory(grid, vals)


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """Dump node values as CSV with full double precision."""
    header = "t," + ",".join(f"v{j}" for j in range(traj.width))
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for t, row in zip(traj.grid.nodes, traj.values):
            fh.write(",".join(f"{v:.17g}" for v in (t, *row)) + "\n")


def read_trajectory_csv(path) -> Trajectory:
    """Inverse of :func:`write_trajectory_csv`; round-trips values exactly."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if not header or header[0] != "t":
            raise ValueError("malformed trajectory CSV header")
        rows = [[float(c) for c in line.strip().split(",")] for line in fh if line.strip()]
    data = np.asarray(rows)
    t = data[:, 0]
    steps = len(t) - 1
    if steps < 1:
        raise ValueError("trajectory CSV needs at least two rows")
    grid = TimeGrid(horizon=t[-1], steps=steps)
    if not np.allclose(t, grid.nodes, rtol=0.0, atol=1e-12 * max(1.0, abs(t[-1]))):
        raise ValueError("trajectory CSV nodes are not a uniform grid")
    return Trajectory(grid, data[:, 1:])
