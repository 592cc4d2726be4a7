"""Control problem definitions.

A :class:`ProblemSpec` bundles the drift, running and terminal costs, their
analytic derivatives, the admissible control set, and dimension/horizon data.
Derivatives are supplied analytically per problem rather than by automatic
differentiation; the test suite cross-checks every callback against central
finite differences, which only stays meaningful if the two routes are
independent.

Three benchmark problems ship with the package:

* :func:`make_lq` -- scalar linear dynamics with quadratic costs; admits a
  closed-form optimum (see :mod:`mdcontrol.reference`).
* :func:`make_quartic` -- integrator dynamics with a purely quartic terminal
  cost, degenerate at the optimum.
* :func:`make_highdim` -- dense randomly generated coupled dynamics with a
  componentwise sine nonlinearity, in arbitrary dimension.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "ControlSet",
    "Unconstrained",
    "Box",
    "ConvexOracle",
    "SmoothnessData",
    "ProblemSpec",
    "hamiltonian0",
    "grad_u_hamiltonian_tau",
    "grad_x_hamiltonian0",
    "make_lq",
    "make_quartic",
    "make_highdim",
    "standard_normals",
]


class ControlSet:
    """Admissible control set. Subclasses provide a projection."""

    def project(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def contains(self, u: np.ndarray, tol: float = 0.0) -> bool:
        return bool(np.max(np.abs(self.project(u) - u), initial=0.0) <= tol)


class Unconstrained(ControlSet):
    """All of R^m."""

    def project(self, u):
        return u

    def project_values(self, values):
        return values


@dataclass(eq=False)
class Box(ControlSet):
    """Componentwise bounds, lower <= u <= upper."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if self.lower.shape != self.upper.shape:
            raise ValueError("box bounds must have equal shapes")
        if np.any(self.lower > self.upper):
            raise ValueError("box requires lower <= upper componentwise")

    def project(self, u):
        return np.clip(u, self.lower, self.upper)

    def project_values(self, values):
        return np.clip(values, self.lower, self.upper)


@dataclass
class ConvexOracle(ControlSet):
    """Closed convex set given only through a nearest-point projection."""

    projection: Callable[[np.ndarray], np.ndarray]

    def project(self, u):
        return np.asarray(self.projection(u), dtype=float)

    def project_values(self, values):
        return np.stack([self.project(v) for v in values])


@dataclass(frozen=True)
class SmoothnessData:
    """Global smoothness constants used by the constants ledger.

    ``lipschitz_m`` bounds the Lipschitz constants and first derivatives of
    the drift and costs, ``hess_bound_buu`` / ``hess_bound_fuu`` bound the
    control-Hessians of drift and running cost.
    """

    lipschitz_m: float
    hess_bound_buu: float
    hess_bound_fuu: float

    def __post_init__(self):
        for name in ("lipschitz_m", "hess_bound_buu", "hess_bound_fuu"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be strictly positive")


@dataclass
class BatchCallbacks:
    """Optional vectorized twins of the per-node callbacks.

    Each member takes ``(ts, xs, us)`` with shapes ``(K,)``, ``(K, d)``,
    ``(K, m)`` and returns the stacked per-node results. They must agree
    elementwise with the pointwise callbacks (the test suite enforces this);
    the integrators use them purely as a fast path.
    """

    drift_jac_x: Optional[Callable] = None
    drift_jac_u: Optional[Callable] = None
    running_cost: Optional[Callable] = None
    running_grad_x: Optional[Callable] = None
    running_grad_u: Optional[Callable] = None


@dataclass(eq=False)
class ProblemSpec:
    """A finite-horizon control problem with analytic derivatives.

    Callbacks take ``(t, x, u)`` with ``x`` of shape ``(state_dim,)`` and
    ``u`` of shape ``(control_dim,)``; the terminal callbacks take ``x``
    alone. All callbacks must be pure so one problem instance can be shared across
    concurrent solves.
    """

    state_dim: int
    control_dim: int
    horizon: float
    initial_state: np.ndarray
    drift: Callable[[float, np.ndarray, np.ndarray], np.ndarray]
    drift_jac_x: Callable[[float, np.ndarray, np.ndarray], np.ndarray]
    drift_jac_u: Callable[[float, np.ndarray, np.ndarray], np.ndarray]
    running_cost: Callable[[float, np.ndarray, np.ndarray], float]
    running_grad_x: Callable[[float, np.ndarray, np.ndarray], np.ndarray]
    running_grad_u: Callable[[float, np.ndarray, np.ndarray], np.ndarray]
    terminal_cost: Callable[[np.ndarray], float]
    terminal_grad: Callable[[np.ndarray], np.ndarray]
    control_set: ControlSet = field(default_factory=Unconstrained)
    convexity_flag: bool = False
    smoothness: Optional[SmoothnessData] = None
    batch: Optional[BatchCallbacks] = None

    def __post_init__(self):
        if self.state_dim < 1 or self.control_dim < 1:
            raise ValueError("dimensions must be positive")
        if self.horizon <= 0.0:
            raise ValueError("horizon must be positive")
        self.initial_state = np.asarray(self.initial_state, dtype=float).reshape(-1)
        if self.initial_state.shape != (self.state_dim,):
            raise ValueError("initial_state length must equal state_dim")


def _check_dims(problem: ProblemSpec, x, p, u) -> tuple[np.ndarray, ...]:
    x = np.asarray(x, dtype=float).reshape(-1)
    p = np.asarray(p, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    if x.shape != (problem.state_dim,) or p.shape != (problem.state_dim,):
        raise ValueError("state/adjoint dimension mismatch")
    if u.shape != (problem.control_dim,):
        raise ValueError("control dimension mismatch")
    return x, p, u


def hamiltonian0(problem: ProblemSpec, t: float, x, p, u) -> float:
    """Unregularized Hamiltonian ``p . drift(t,x,u) - running_cost(t,x,u)``."""
    x, p, u = _check_dims(problem, x, p, u)
    return float(p @ problem.drift(t, x, u)) - float(problem.running_cost(t, x, u))


def grad_u_hamiltonian_tau(problem: ProblemSpec, mirror, tau: float, t: float, x, p, u) -> np.ndarray:
    """Control gradient of the regularized Hamiltonian.

    Computed as the unregularized gradient minus ``tau * grad_h(u)``, so the
    two quantities are related by an exact identity for any ``tau``.
    """
    if tau < 0.0:
        raise ValueError("tau must be nonnegative")
    x, p, u = _check_dims(problem, x, p, u)
    g0 = problem.drift_jac_u(t, x, u).T @ p - problem.running_grad_u(t, x, u)
    return g0 - tau * mirror.grad_h(u)


def grad_x_hamiltonian0(problem: ProblemSpec, t: float, x, p, u) -> np.ndarray:
    """State gradient of the unregularized Hamiltonian."""
    x, p, u = _check_dims(problem, x, p, u)
    return problem.drift_jac_x(t, x, u).T @ p - problem.running_grad_x(t, x, u)


def make_lq(a: float, q: float, s: float, x0: float, horizon: float) -> ProblemSpec:
    """Scalar problem with drift ``a x + u``, running cost ``q x^2 / 2`` and
    terminal cost ``s x^2 / 2``.

    The control is unconstrained and the problem is jointly convex. The
    attached smoothness constants are conservative: the true control-Hessian
    bounds of drift and running cost are zero, and 1.0 is used as a valid
    positive stand-in so the constants ledger stays well-defined.
    """
    if q < 0.0 or s < 0.0:
        raise ValueError("q and s must be nonnegative")
    if horizon <= 0.0:
        raise ValueError("horizon must be positive")
    a = float(a)
    q = float(q)
    s = float(s)
    jac_x_const = np.array([[a]])
    jac_u_const = np.array([[1.0]])
    zero1 = np.zeros(1)
    for arr in (jac_x_const, jac_u_const, zero1):
        arr.setflags(write=False)

    def drift(t, x, u):
        return a * x + u

    def drift_jac_x(t, x, u):
        return jac_x_const

    def drift_jac_u(t, x, u):
        return jac_u_const

    def running_cost(t, x, u):
        return 0.5 * q * float(x[0]) ** 2

    def running_grad_x(t, x, u):
        return q * x

    def running_grad_u(t, x, u):
        return zero1

    def terminal_cost(x):
        return 0.5 * s * float(x[0]) ** 2

    def terminal_grad(x):
        return s * x

    batch = BatchCallbacks(
        drift_jac_x=lambda ts, xs, us: np.broadcast_to(jac_x_const, (len(ts), 1, 1)),
        drift_jac_u=lambda ts, xs, us: np.broadcast_to(jac_u_const, (len(ts), 1, 1)),
        running_cost=lambda ts, xs, us: 0.5 * q * xs[:, 0] ** 2,
        running_grad_x=lambda ts, xs, us: q * xs,
        running_grad_u=lambda ts, xs, us: np.zeros_like(us),
    )

    return ProblemSpec(
        state_dim=1,
        control_dim=1,
        horizon=horizon,
        initial_state=np.array([float(x0)]),
        drift=drift,
        drift_jac_x=drift_jac_x,
        drift_jac_u=drift_jac_u,
        running_cost=running_cost,
        running_grad_x=running_grad_x,
        running_grad_u=running_grad_u,
        terminal_cost=terminal_cost,
        terminal_grad=terminal_grad,
        control_set=Unconstrained(),
        convexity_flag=True,
        smoothness=SmoothnessData(
            lipschitz_m=max(1.0, abs(a), q, s),
            hess_bound_buu=1.0,
            hess_bound_fuu=1.0,
        ),
        batch=batch,
    )


def make_quartic(horizon: float) -> ProblemSpec:
    """Scalar integrator ``xdot = u`` from ``x0 = 0`` with terminal cost
    ``x^4 / 4`` and no running cost.

    The terminal cost is convex but not strongly so at the optimum, which is
    what makes the unregularized solve only sublinearly convergent. No global
    smoothness constants are attached (the terminal gradient is cubic, hence
    not globally Lipschitz).
    """
    if horizon <= 0.0:
        raise ValueError("horizon must be positive")

    zero1 = np.zeros(1)
    eye1 = np.eye(1)
    zmat = np.zeros((1, 1))
    for arr in (zero1, eye1, zmat):
        arr.setflags(write=False)

    batch = BatchCallbacks(
        drift_jac_x=lambda ts, xs, us: np.broadcast_to(zmat, (len(ts), 1, 1)),
        drift_jac_u=lambda ts, xs, us: np.broadcast_to(eye1, (len(ts), 1, 1)),
        running_cost=lambda ts, xs, us: np.zeros(len(ts)),
        running_grad_x=lambda ts, xs, us: np.zeros_like(xs),
        running_grad_u=lambda ts, xs, us: np.zeros_like(us),
    )

    return ProblemSpec(
        state_dim=1,
        control_dim=1,
        horizon=horizon,
        initial_state=np.zeros(1),
        drift=lambda t, x, u: u,
        drift_jac_x=lambda t, x, u: zmat,
        drift_jac_u=lambda t, x, u: eye1,
        running_cost=lambda t, x, u: 0.0,
        running_grad_x=lambda t, x, u: zero1,
        running_grad_u=lambda t, x, u: zero1,
        terminal_cost=lambda x: 0.25 * float(x[0]) ** 4,
        terminal_grad=lambda x: x**3,
        control_set=Unconstrained(),
        convexity_flag=True,
        smoothness=None,
        batch=batch,
    )


# splitmix64 finalizer constants; the generator is a counter sequence
# seed + k*GAMMA passed through the finalizer, k = 1, 2, ...
_SM64_GAMMA = 0x9E3779B97F4A7C15
_SM64_M1 = 0xBF58476D1CE4E5B9
_SM64_M2 = 0x94D049BB133111EB
_MASK64 = 0xFFFFFFFFFFFFFFFF


def _splitmix64_uniforms(seed: int, count: int) -> np.ndarray:
    """``count`` uniforms in [0, 1) from the splitmix64 counter generator."""
    idx = np.arange(1, count + 1, dtype=np.uint64)
    z = (np.uint64(seed & _MASK64) + idx * np.uint64(_SM64_GAMMA))
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_SM64_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_SM64_M2)
    z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)).astype(np.float64) * 2.0**-53


def standard_normals(seed: int, count: int) -> np.ndarray:
    """Deterministic standard normal draws, identical on every platform.

    Uses the splitmix64 counter generator with the Box-Muller transform:
    consecutive uniform pairs (v1, v2) map to
    ``sqrt(-2 log v1) * (cos, sin)(2 pi v2)`` where v1 is shifted into
    (0, 1]. The draw order is frozen; identical seeds reproduce identical
    arrays bit for bit.
    """
    pairs = (count + 1) // 2
    raw = _splitmix64_uniforms(seed, 2 * pairs)
    v1 = raw[0::2] + 2.0**-53  # avoid log(0)
    v2 = raw[1::2]
    radius = np.sqrt(-2.0 * np.log(v1))
    angle = 2.0 * math.pi * v2
    out = np.empty(2 * pairs)
    out[0::2] = radius * np.cos(angle)
    out[1::2] = radius * np.sin(angle)
    return out[:count]


def make_highdim(
    d: int,
    seed: int = 42,
    q: float = 1.0,
    s: float = 5.0,
    gamma: float = 1.0,
    horizon: float = 1.0,
) -> ProblemSpec:
    """Dense coupled nonlinear benchmark in dimension ``d``.

    Dynamics ``xdot = A x + B u + gamma * sin(C x)`` (sine componentwise)
    with dense matrices drawn from :func:`standard_normals`::

        A = 0.15 * M1 / sqrt(d) - 0.6 I
        B = 0.60 * M2 / sqrt(d) + 0.3 I
        C = 0.80 * M3 / sqrt(d)

    where M1, M2, M3 have i.i.d. standard normal entries, drawn row-major in
    the order M1, M2, M3 from a single stream. Costs are dimension-normalized:
    running ``q |x|^2 / (2 d)`` and terminal ``s |x - x_tar|^2 / (2 d)``. The
    initial state and target are ``0.4 sin(i pi / d)`` and
    ``0.8 cos(i pi / d)`` for components i = 1..d.

    Identical ``(d, seed, q, s, gamma, horizon)`` rebuild bit-identical
    matrices; no convexity is claimed for this problem.
    """
    if d < 1:
        raise ValueError("dimension must be positive")
    if horizon <= 0.0:
        raise ValueError("horizon must be positive")

    draws = standard_normals(seed, 3 * d * d)
    scale = 1.0 / math.sqrt(d)
    m1 = draws[: d * d].reshape(d, d)
    m2 = draws[d * d : 2 * d * d].reshape(d, d)
    m3 = draws[2 * d * d :].reshape(d, d)
    a_mat = 0.15 * scale * m1 - 0.6 * np.eye(d)
    b_mat = 0.6 * scale * m2 + 0.3 * np.eye(d)
    c_mat = 0.8 * scale * m3

    i = np.arange(1, d + 1)
    x_init = 0.4 * np.sin(i * math.pi / d)
    x_tar = 0.8 * np.cos(i * math.pi / d)

    q_over_d = q / d
    s_over_d = s / d
    gamma = float(gamma)

    def drift(t, x, u):
        out = a_mat.dot(x)
        out += b_mat.dot(u)
        cx = c_mat.dot(x)
        np.sin(cx, cx)
        cx *= gamma
        out += cx
        return out

    def drift_jac_x(t, x, u):
        return a_mat + gamma * np.cos(c_mat.dot(x))[:, None] * c_mat

    def drift_jac_u(t, x, u):
        return b_mat

    def running_cost(t, x, u):
        return 0.5 * q_over_d * float(x @ x)

    def running_grad_x(t, x, u):
        return q_over_d * x

    def running_grad_u(t, x, u):
        return np.zeros(d)

    def terminal_cost(x):
        dx = x - x_tar
        return 0.5 * s_over_d * float(dx @ dx)

    def terminal_grad(x):
        return s_over_d * (x - x_tar)

    c_mat_t = np.ascontiguousarray(c_mat.T)

    def batch_jac_x(ts, xs, us):
        cos_cx = np.cos(xs @ c_mat_t)  # (K, d)
        return a_mat + gamma * cos_cx[:, :, None] * c_mat

    batch = BatchCallbacks(
        drift_jac_x=batch_jac_x,
        drift_jac_u=lambda ts, xs, us: np.broadcast_to(b_mat, (len(ts), d, d)),
        running_cost=lambda ts, xs, us: 0.5 * q_over_d * np.einsum("ij,ij->i", xs, xs),
        running_grad_x=lambda ts, xs, us: q_over_d * xs,
        running_grad_u=lambda ts, xs, us: np.zeros_like(us),
    )

    return ProblemSpec(
        state_dim=d,
        control_dim=d,
        horizon=horizon,
        initial_state=x_init,
        drift=drift,
        drift_jac_x=drift_jac_x,
        drift_jac_u=drift_jac_u,
        running_cost=running_cost,
        running_grad_x=running_grad_x,
        running_grad_u=running_grad_u,
        terminal_cost=terminal_cost,
        terminal_grad=terminal_grad,
        control_set=Unconstrained(),
        convexity_flag=False,
        smoothness=None,
        batch=batch,
    )
