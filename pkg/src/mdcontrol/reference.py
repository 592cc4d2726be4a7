"""Independent reference oracles.

Everything here is deliberately computed along routes that do not share code
with the solver: the scalar linear-quadratic benchmark has a closed-form
Riccati solution, the quartic benchmark collapses to an explicit scalar
recursion, and the cost derivative admits three mutually independent
computations (adjoint pairing, central finite differences of the cost, and
a forward linearized solve). The constants ledger evaluates the a priori
bound/stability/smoothness constants from problem data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .mirror import MirrorMap
from .problems import Box, ProblemSpec, Unconstrained, make_lq
from .trajectories import (
    TimeGrid,
    Trajectory,
    evaluate_cost,
    inner_product,
    integrate_adjoint,
    integrate_state,
)

__all__ = [
    "RiccatiSolution",
    "make_riccati",
    "riccati_p",
    "LQReference",
    "lq_reference",
    "quartic_recursion",
    "adjoint_gradient",
    "pair_gradient",
    "fd_gradient",
    "fd_gradient_sweep",
    "sensitivity_gradient",
    "ConstantsLedger",
    "constants_ledger",
    "ledger_for_problem",
]


@dataclass(frozen=True)
class RiccatiSolution:
    """Closed-form solution data of the scalar Riccati terminal-value problem

        P'(t) = P(t)^2 / tau - 2 a P(t) - q,    P(T) = s.

    ``p_plus``/``p_minus`` are the equilibrium roots and ``kappa`` the mixing
    coefficient determined by the terminal condition. Requires ``tau > 0``
    and ``gamma = sqrt(a^2 + q / tau) > 0``.
    """

    a: float
    q: float
    s: float
    tau: float
    horizon: float
    gamma: float
    p_plus: float
    p_minus: float
    kappa: float


def make_riccati(a: float, q: float, s: float, tau: float, horizon: float) -> RiccatiSolution:
    if tau <= 0.0:
        raise ValueError("tau must be positive for the closed-form solution")
    if q < 0.0 or s < 0.0:
        raise ValueError("q and s must be nonnegative")
    if horizon <= 0.0:
        raise ValueError("horizon must be positive")
    gamma = math.sqrt(a * a + q / tau)
    if gamma <= 0.0:
        raise ValueError("degenerate problem: a = q = 0 has no decaying mode")
    p_plus = tau * (a + gamma)
    p_minus = tau * (a - gamma)
    if s == p_minus:
        kappa = math.inf  # constant solution P == p_minus
    else:
        kappa = (s - p_plus) / (s - p_minus)
    return RiccatiSolution(
        a=float(a), q=float(q), s=float(s), tau=float(tau), horizon=float(horizon),
        gamma=gamma, p_plus=p_plus, p_minus=p_minus, kappa=kappa,
    )


def riccati_p(sol: RiccatiSolution, t: float) -> float:
    """Evaluate the closed-form P(t)."""
    if t < 0.0 or t > sol.horizon:
        raise ValueError("t outside the horizon")
    if math.isinf(sol.kappa):
        return sol.p_minus
    decay = math.exp(-2.0 * sol.gamma * (sol.horizon - t))
    return (sol.p_plus - sol.kappa * decay * sol.p_minus) / (1.0 - sol.kappa * decay)


class LQReference(NamedTuple):
    u_star: Trajectory
    x_star: Trajectory
    j_star: float


def lq_reference(sol: RiccatiSolution, x0: float, grid: TimeGrid) -> LQReference:
    """Optimal control, state, and cost of the scalar linear-quadratic problem.

    The optimal state is reconstructed from the closed form
    ``x*(t) = x0 exp(int_0^t (a - P/tau))`` with the exponent integral
    evaluated by the trapezoidal rule on a 10x refined grid, and the optimal
    cost by quadrature on that refined grid, so the oracle's discretization
    error sits an order below the solver's at the same ``grid``.
    """
    refine = 10
    fine = TimeGrid(grid.horizon, refine * grid.steps)
    t_fine = fine.nodes
    p_fine = np.array([riccati_p(sol, t) for t in t_fine])
    integrand = sol.a - p_fine / sol.tau
    # cumulative trapezoid of the exponent
    increments = 0.5 * fine.dt * (integrand[:-1] + integrand[1:])
    exponent = np.concatenate(([0.0], np.cumsum(increments)))
    x_fine = x0 * np.exp(exponent)
    u_fine = -(p_fine / sol.tau) * x_fine

    problem = make_lq(sol.a, sol.q, sol.s, x0, sol.horizon)
    from .mirror import quadratic_map

    u_traj_fine = Trajectory(fine, u_fine)
    x_traj_fine = Trajectory(fine, x_fine)
    j_star = evaluate_cost(problem, quadratic_map(), sol.tau, u_traj_fine, x_traj_fine)

    u_star = Trajectory(grid, u_fine[::refine])
    x_star = Trajectory(grid, x_fine[::refine])
    return LQReference(u_star=u_star, x_star=x_star, j_star=j_star)


def quartic_recursion(alpha0: float, horizon: float, lam: float, tau: float, n_iters: int) -> np.ndarray:
    """Exact scalar reduction of the solver on the quartic benchmark.

    Starting from a constant control level ``alpha0``, every iterate stays
    constant in time and the level obeys

        alpha_{n+1} = alpha_n - (T^3 alpha_n^3 + tau alpha_n) / lam.

    Returns the sequence ``alpha_0 .. alpha_{n_iters}``.
    """
    if lam <= 0.0:
        raise ValueError("lam must be positive")
    t3 = horizon**3
    out = np.empty(n_iters + 1)
    out[0] = alpha0
    a = float(alpha0)
    for n in range(n_iters):
        a = a - (t3 * a**3 + tau * a) / lam
        out[n + 1] = a
    return out


def adjoint_gradient(problem: ProblemSpec, mirror: MirrorMap, tau: float, u: Trajectory) -> Trajectory:
    """Cost gradient along ``u`` via the state/adjoint solves.

    Returns the trajectory ``t -> -grad_u H^tau(x_t, p_t, u_t)`` so that a
    trapezoidal pairing with a direction reproduces the directional
    derivative of the cost.
    """
    from .solver import _xi_values

    x = integrate_state(problem, u)
    p = integrate_adjoint(problem, u, x)
    xi = _xi_values(problem, mirror, tau, u.grid.nodes, u.values, x.values, p.values)
    return Trajectory(u.grid, -xi)


def pair_gradient(gradient: Trajectory, direction: Trajectory) -> float:
    """Trapezoidal pairing of a gradient trajectory with a direction."""
    return inner_product(gradient, direction)


def _check_feasible(problem: ProblemSpec, values: np.ndarray) -> None:
    cset = problem.control_set
    if isinstance(cset, Unconstrained):
        return
    if isinstance(cset, Box):
        if np.all(values >= cset.lower) and np.all(values <= cset.upper):
            return
        raise ValueError("perturbed control leaves the box control set")
    for row in values:
        if not cset.contains(row, tol=1e-12):
            raise ValueError("perturbed control leaves the control set")


def fd_gradient(
    problem: ProblemSpec,
    mirror: MirrorMap,
    tau: float,
    u: Trajectory,
    direction: Trajectory,
    eps: float = 1e-4,
) -> float:
    """Central-difference directional derivative of the discrete cost."""
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    if direction.grid != u.grid:
        raise ValueError("grid mismatch")
    up = u.values + eps * direction.values
    um = u.values - eps * direction.values
    _check_feasible(problem, up)
    _check_feasible(problem, um)
    cost = []
    for vals in (up, um):
        traj = Trajectory(u.grid, vals)
        state = integrate_state(problem, traj)
        cost.append(evaluate_cost(problem, mirror, tau, traj, state))
    return (cost[0] - cost[1]) / (2.0 * eps)


def fd_gradient_sweep(
    problem: ProblemSpec,
    mirror: MirrorMap,
    tau: float,
    u: Trajectory,
    direction: Trajectory,
    eps_values: Sequence[float] = (1e-3, 1e-4, 1e-5, 1e-6),
) -> tuple[float, list[tuple[float, float]]]:
    """Step-size sweep for the central difference.

    Returns the value on the most stable plateau (the midpoint of the pair of
    consecutive step sizes whose results agree best) together with the full
    ``(eps, value)`` table; truncation and roundoff trade off against each
    other, so the plateau is the trustworthy region.
    """
    table = [(e, fd_gradient(problem, mirror, tau, u, direction, e)) for e in eps_values]
    if len(table) == 1:
        return table[0][1], table
    best = min(range(len(table) - 1), key=lambda i: abs(table[i][1] - table[i + 1][1]))
    plateau = 0.5 * (table[best][1] + table[best + 1][1])
    return plateau, table


def sensitivity_gradient(
    problem: ProblemSpec,
    mirror: MirrorMap,
    tau: float,
    u: Trajectory,
    direction: Trajectory,
) -> float:
    """Directional derivative via the forward linearized state equation.

    Integrates ``ydot = drift_jac_x y + drift_jac_u delta_u`` with RK4 from
    ``y(0) = 0`` (state and controls interpolated at half steps) and returns
    the first-order cost expansion paired with ``y``.
    """
    if direction.grid != u.grid:
        raise ValueError("grid mismatch")
    grid = u.grid
    x = integrate_state(problem, u)
    n = grid.steps
    h = grid.dt
    half = 0.5 * h
    sixth = h / 6.0
    t = grid.nodes
    uv = u.values
    dv = direction.values
    xv = x.values
    umid = 0.5 * (uv[:-1] + uv[1:])
    dmid = 0.5 * (dv[:-1] + dv[1:])
    xmid = 0.5 * (xv[:-1] + xv[1:])
    tmid = 0.5 * (t[:-1] + t[1:])

    # the linearized rhs is affine in y; its coefficients and forcing are
    # evaluated once per node and midpoint
    d = problem.state_dim
    b = problem.batch
    if b is not None and b.drift_jac_x is not None and b.drift_jac_u is not None:
        j_node = b.drift_jac_x(t, xv, uv)
        j_mid = b.drift_jac_x(tmid, xmid, umid)
        f_node = np.einsum("kdm,km->kd", b.drift_jac_u(t, xv, uv), dv)
        f_mid = np.einsum("kdm,km->kd", b.drift_jac_u(tmid, xmid, umid), dmid)
    else:
        jac_x = problem.drift_jac_x
        jac_u = problem.drift_jac_u
        j_node = np.empty((n + 1, d, d))
        f_node = np.empty((n + 1, d))
        for k in range(n + 1):
            j_node[k] = jac_x(t[k], xv[k], uv[k])
            f_node[k] = jac_u(t[k], xv[k], uv[k]) @ dv[k]
        j_mid = np.empty((n, d, d))
        f_mid = np.empty((n, d))
        for k in range(n):
            j_mid[k] = jac_x(tmid[k], xmid[k], umid[k])
            f_mid[k] = jac_u(tmid[k], xmid[k], umid[k]) @ dmid[k]

    y = np.empty((n + 1, d))
    y[0] = 0.0
    if d == 1:
        jn = j_node[:, 0, 0]
        fn = f_node[:, 0]
        jm_ = j_mid[:, 0, 0]
        fm_ = f_mid[:, 0]
        yk = 0.0
        for k in range(n):
            jm, fm = jm_[k], fm_[k]
            k1 = jn[k] * yk + fn[k]
            k2 = jm * (yk + half * k1) + fm
            k3 = jm * (yk + half * k2) + fm
            k4 = jn[k + 1] * (yk + h * k3) + fn[k + 1]
            yk = yk + sixth * (k1 + 2.0 * (k2 + k3) + k4)
            y[k + 1, 0] = yk
    else:
        for k in range(n):
            yk = y[k]
            jm, fm = j_mid[k], f_mid[k]
            k1 = j_node[k] @ yk + f_node[k]
            k2 = jm @ (yk + half * k1) + fm
            k3 = jm @ (yk + half * k2) + fm
            k4 = j_node[k + 1] @ (yk + h * k3) + f_node[k + 1]
            y[k + 1] = yk + sixth * (k1 + 2.0 * (k2 + k3) + k4)
    if not np.isfinite(y).all():
        raise ValueError("linearized state integration blew up")

    if b is not None and b.running_grad_x is not None and b.running_grad_u is not None:
        node_vals = np.einsum("kd,kd->k", b.running_grad_x(t, xv, uv), y) + np.einsum(
            "km,km->k", b.running_grad_u(t, xv, uv), dv
        )
    else:
        node_vals = np.empty(n + 1)
        for k in range(n + 1):
            node_vals[k] = float(problem.running_grad_x(t[k], xv[k], uv[k]) @ y[k]) + float(
                problem.running_grad_u(t[k], xv[k], uv[k]) @ dv[k]
            )
    if tau != 0.0:
        if mirror.kind == "quadratic":
            node_vals = node_vals + tau * np.einsum("km,km->k", uv, dv)
        else:
            node_vals = node_vals + tau * np.array(
                [float(mirror.grad_h(uv[k]) @ dv[k]) for k in range(n + 1)]
            )
    w = grid.trapezoid_weights
    return float(w @ node_vals) + float(np.asarray(problem.terminal_grad(xv[-1])).reshape(-1) @ y[-1])


@dataclass(frozen=True)
class ConstantsLedger:
    """A priori constants evaluated from problem data.

    ``m_x``/``m_p`` bound the state and adjoint sup norms, ``c_x``/``c_p``
    are the control-to-state and control-to-adjoint L2 stability constants,
    ``c_h`` the Hamiltonian-gradient Lipschitz constant on the reachable
    tube, and ``rel_smooth`` the relative-smoothness modulus of the cost
    with respect to the integrated Bregman divergence. The closed forms are
    conservative by design; they exist to make the inequality suites and the
    small-step warning well defined, not to be tight.
    """

    m_x: float
    m_p: float
    c_x: float
    c_p: float
    c_h: float
    rel_smooth: float
    # echoed inputs
    m: float
    m_buu: float
    m_fuu: float
    sigma_h: float
    tau: float
    horizon: float
    x0_norm: float


def constants_ledger(
    m: float,
    m_buu: float,
    m_fuu: float,
    sigma_h: float,
    tau: float,
    horizon: float,
    x0_norm: float,
) -> ConstantsLedger:
    """Evaluate the chained closed-form constants.

    All inputs except ``tau`` and ``x0_norm`` must be strictly positive;
    ``tau`` and ``x0_norm`` must be nonnegative.
    """
    for name, val in (("m", m), ("m_buu", m_buu), ("m_fuu", m_fuu), ("sigma_h", sigma_h), ("horizon", horizon)):
        if val <= 0.0:
            raise ValueError(f"{name} must be strictly positive")
    if tau < 0.0 or x0_norm < 0.0:
        raise ValueError("tau and x0_norm must be nonnegative")

    emt = math.exp(m * horizon)
    m_x = (x0_norm + m * horizon) * emt
    m_p = m * (1.0 + horizon) * emt
    c_x = m * horizon * emt
    c_p = emt * m * (c_x + (m_p + 1.0) * (c_x + 1.0) * horizon)
    c_h = max(m * (m_p + 1.0), m_p * m_buu + m_fuu)
    rel_smooth = tau + c_h * (c_x + c_p + 1.0) / sigma_h
    return ConstantsLedger(
        m_x=m_x, m_p=m_p, c_x=c_x, c_p=c_p, c_h=c_h, rel_smooth=rel_smooth,
        m=m, m_buu=m_buu, m_fuu=m_fuu, sigma_h=sigma_h, tau=tau,
        horizon=horizon, x0_norm=x0_norm,
    )


def ledger_for_problem(problem: ProblemSpec, mirror: MirrorMap, tau: float) -> Optional[ConstantsLedger]:
    """Ledger from a problem's attached smoothness data, or None if absent."""
    if problem.smoothness is None:
        return None
    sm = problem.smoothness
    return constants_ledger(
        m=sm.lipschitz_m,
        m_buu=sm.hess_bound_buu,
        m_fuu=sm.hess_bound_fuu,
        sigma_h=mirror.strong_convexity,
        tau=tau,
        horizon=problem.horizon,
        x0_norm=float(np.linalg.norm(problem.initial_state)),
    )
