"""End-to-end acceptance criteria.

Each test certifies one criterion at its stated tolerance and prints one
PASS/FAIL line (visible under ``pytest -s``). Shared solver runs live in
module-scoped fixtures so the suite stays within a desk-scale time budget.

Known red: the forward-sensitivity leg of the gradient triangle demands
1e-8 relative agreement with the adjoint pairing at nt = 2000. The pinned
discretization (trapezoidal pairing of the continuous-time adjoint gradient
against an RK4 linearized solve) carries a structural O(1/nt^2) duality
defect around 1e-7 at that resolution, so the tolerance is unattainable for
the linear-quadratic problem; the defect is the discrete integration-by-
parts error, not an implementation bug (it shrinks at exactly second order
under grid refinement and vanishes for the quartic problem, whose adjoint
is constant in time). The test asserts the stated tolerance anyway and is
expected to fail.
"""

import time

import numpy as np
import pytest

import mdcontrol as md
from mdcontrol import checks, cli


def report(ok: bool, name: str, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")


@pytest.fixture(scope="module")
def lq_problem():
    return md.make_lq(1.0, 1.0, 1.0, 0.5, 1.0)


@pytest.fixture(scope="module")
def mirror():
    return md.quadratic_map()


@pytest.fixture(scope="module")
def quartic_tau0_run(mirror):
    problem = md.make_quartic(1.0)
    grid = md.TimeGrid(1.0, 500)
    config = md.SolverConfig(
        lam=10.0, tau=0.0, grid=grid, max_iters=300, stop_residual=0.0, record_trajectories=True
    )
    return md.run(problem, mirror, config, md.constant_control(grid, 2.0))


@pytest.fixture(scope="module")
def quartic_tau05_run(mirror):
    problem = md.make_quartic(1.0)
    grid = md.TimeGrid(1.0, 500)
    config = md.SolverConfig(
        lam=10.0, tau=0.5, grid=grid, max_iters=400, stop_residual=0.0, record_trajectories=True
    )
    return md.run(problem, mirror, config, md.constant_control(grid, 2.0))


@pytest.fixture(scope="module")
def triangle_rows():
    return checks.gradient_triangle_suite(n_pairs=20, nt=2000, seed=0)


def test_criterion_1_lq_geometric_envelope(lq_problem, mirror):
    """Cost error sits under the certified geometric envelope for 200
    iterations of the scalar linear-quadratic benchmark, within 2 s."""
    t0 = time.perf_counter()
    grid = md.TimeGrid(1.0, 500)
    ref = md.lq_reference(md.make_riccati(1.0, 1.0, 1.0, 1.0, 1.0), 0.5, grid)
    u0 = md.constant_control(grid, 4.0)
    config = md.SolverConfig(lam=30.0, tau=1.0, grid=grid, max_iters=200, stop_residual=0.0)
    run = md.run(lq_problem, mirror, config, u0)
    costs = run.costs()
    d0 = md.bregman_integrated(mirror, ref.u_star, u0)
    contraction = 1.0 - 1.0 / 30.0
    worst = max(
        (costs[n] - ref.j_star) - 30.0 * contraction ** (n - 1) * d0 for n in range(1, len(costs))
    )
    elapsed = time.perf_counter() - t0
    # two hundred iterations shave at least six orders off the initial error
    ratio = (costs[-1] - ref.j_star) / (costs[0] - ref.j_star)
    ok = worst <= 1e-7 and elapsed < 2.0 and ratio <= 1e-6
    report(
        ok,
        "criterion 1 (lq geometric envelope)",
        f"worst violation {worst:+.3e}, error ratio {ratio:.2e}, runtime {elapsed:.2f}s",
    )
    assert worst <= 1e-7
    assert ratio <= 1e-6
    assert elapsed < 2.0


def test_criterion_2_lq_optimum_consistency(lq_problem, mirror):
    """Solving to a 1e-10 fixed-point residual on a 2000-step grid lands
    within 5e-6 of the closed-form optimal cost."""
    grid = md.TimeGrid(1.0, 2000)
    ref = md.lq_reference(md.make_riccati(1.0, 1.0, 1.0, 1.0, 1.0), 0.5, grid)
    config = md.SolverConfig(lam=30.0, tau=1.0, grid=grid, max_iters=2000, stop_residual=1e-10)
    run = md.run(lq_problem, mirror, config, ref.u_star)
    gap = abs(run.costs()[-1] - ref.j_star)
    ok = run.termination is md.Termination.RESIDUAL_MET and gap <= 5e-6
    report(ok, "criterion 2 (lq optimum consistency)", f"|J_final - J*| = {gap:.3e}, {run.termination.value}")
    assert run.termination is md.Termination.RESIDUAL_MET
    assert gap <= 5e-6


def test_criterion_3_quartic_sublinear(quartic_tau0_run):
    """Unregularized quartic run: certified sublinear envelope out to 1e4
    iterations, a log-log tail slope near -2, and node-level agreement with
    the scalar level recursion.

    The solver is checked directly for the first 300 iterations; beyond
    that the level recursion stands in for the iterates, which part (c)
    justifies by pinning their agreement at 1e-10.
    """
    costs = quartic_tau0_run.costs()
    d0 = 2.0  # integrated divergence between the zero and initial controls
    bound_limit = 10.0 * d0

    worst_solver = max(costs[n] - bound_limit / n for n in range(1, len(costs)))
    alphas = md.quartic_recursion(2.0, 1.0, 10.0, 0.0, 10**4)
    recursion_costs = 0.25 * alphas**4
    worst_recursion = max(recursion_costs[n] - bound_limit / n for n in range(1, len(alphas)))
    ok_a = worst_solver <= 0.0 and worst_recursion <= 0.0

    solver_slope = md.fit_loglog_slope([float(c) for c in costs[1:]], (99, 299))
    tail_slope = md.fit_loglog_slope([float(c) for c in recursion_costs[1:]], (1999, 9999))
    ok_b = -2.2 <= solver_slope <= -1.8 and -2.2 <= tail_slope <= -1.8

    dev = 0.0
    for n in range(101):
        dev = max(dev, float(np.max(np.abs(quartic_tau0_run.controls[n].values - alphas[n]))))
    ok_c = dev <= 1e-10

    report(
        ok_a and ok_b and ok_c,
        "criterion 3 (quartic sublinear)",
        f"bound slack {max(worst_solver, worst_recursion):+.3e}, "
        f"slopes {solver_slope:.3f}/{tail_slope:.3f}, recursion dev {dev:.2e}",
    )
    assert ok_a
    assert ok_b
    assert ok_c


def test_criterion_4_quartic_geometric(quartic_tau05_run):
    """Regularized quartic run: geometric envelope with factor 0.95 at every
    iteration, and the asymptotic fitted cost factor equals the squared
    linearized contraction 0.9025 within 0.01."""
    costs = quartic_tau05_run.costs()
    d0 = 2.0
    worst = max(costs[n] - 10.0 * 0.95 ** (n - 1) * d0 for n in range(1, len(costs)))
    factor = md.fit_geometric_factor([float(c) for c in costs[1:]], (99, 199))
    ok = worst <= 1e-9 and abs(factor - 0.9025) <= 0.01

    alphas = md.quartic_recursion(2.0, 1.0, 10.0, 0.5, 100)
    dev = 0.0
    for n in range(101):
        dev = max(dev, float(np.max(np.abs(quartic_tau05_run.controls[n].values - alphas[n]))))

    report(
        ok and dev <= 1e-10,
        "criterion 4 (quartic geometric)",
        f"worst violation {worst:+.3e}, fitted factor {factor:.5f}, recursion dev {dev:.2e}",
    )
    assert worst <= 1e-9
    assert abs(factor - 0.9025) <= 0.01
    assert dev <= 1e-10


def test_criterion_5a_gradient_triangle_central_difference(triangle_rows):
    """Adjoint pairing and central differences of the cost agree to 1e-6
    relative on 20 random control/direction pairs per benchmark."""
    row = triangle_rows[0]
    report(row.passed, "criterion 5a (adjoint vs central difference)", f"worst rel {row.worst:.3e} <= 1e-6")
    assert row.passed, row.line()


def test_criterion_5b_gradient_triangle_forward_sensitivity(triangle_rows):
    """Adjoint pairing and the forward linearized derivative agree to 1e-8.

    Expected to fail: see the module docstring. The defect is O(1/nt^2) and
    about 1e-7 at nt = 2000 for the linear-quadratic benchmark, so the
    stated tolerance cannot be met by the pinned discretization.
    """
    row = triangle_rows[1]
    report(row.passed, "criterion 5b (adjoint vs forward sensitivity)", f"worst rel {row.worst:.3e} <= 1e-8")
    assert row.passed, row.line()


def test_criterion_6_inequality_suites():
    """Relative smoothness (ledger modulus), relative convexity (modulus
    tau), the pointwise three-point inequality, and per-iteration energy
    dissipation at a certified step parameter."""
    smooth = checks.relative_smoothness_suite(n_pairs=100, nt=500, seed=1)
    convex = checks.relative_convexity_suite(n_pairs=100, nt=500, seed=2)
    three = checks.three_point_suite(n_trials=1000, seed=3)
    dissip = checks.dissipation_suite()
    rows = [smooth, convex, three, dissip]
    ok = all(r.passed for r in rows)
    report(
        ok,
        "criterion 6 (inequality suites)",
        "; ".join(f"{r.name} worst {r.worst:+.2e}" for r in rows),
    )
    for r in rows:
        assert r.passed, r.line()


def test_criterion_7_highdim_semilog_and_determinism(tmp_path):
    """Coupled nonlinear benchmark in dimensions 5, 10, 20 with the stock
    parameters: the surrogate-gap semilog fit over iterations 20..200 is
    close to linear, and a rerun with the same seed emits bit-identical
    traces."""
    out_a = tmp_path / "a"
    config = cli.build_config(
        "highdim", {"dims": [5, 10, 20], "max_iters": 1000, "seed": 42, "output_dir": str(out_a)}
    )
    summary = cli.run_highdim(config)
    r2s = {c["name"]: c["worst"] for c in summary["checks"]}
    ok_fit = all(c["passed"] for c in summary["checks"])

    out_b = tmp_path / "b"
    rerun_cfg = cli.build_config(
        "highdim", {"dims": [5], "max_iters": 1000, "seed": 42, "output_dir": str(out_b)}
    )
    cli.run_highdim(rerun_cfg)
    first = (out_a / "highdim_d5_trace.csv").read_bytes()
    second = (out_b / "highdim_d5_trace.csv").read_bytes()
    ok_det = first == second

    report(
        ok_fit and ok_det,
        "criterion 7 (highdim semilog + determinism)",
        f"R^2 {sorted(round(v, 5) for v in r2s.values())}, rerun identical: {ok_det}",
    )
    assert ok_fit, summary["checks"]
    assert ok_det


def test_criterion_8_admissibility_modulus(lq_problem, mirror):
    """Adjacent-node increments of every update stay within the dual
    increment bound on all 200 recorded iterations."""
    grid = md.TimeGrid(1.0, 500)
    config = md.SolverConfig(
        lam=30.0, tau=1.0, grid=grid, max_iters=200, stop_residual=0.0, record_trajectories=True
    )
    run = md.run(lq_problem, mirror, config, md.constant_control(grid, 4.0))
    worst = min(
        md.admissibility_modulus_check(u_next, eta, 30.0, mirror.strong_convexity)
        for u_next, eta in zip(run.controls[1:], run.etas)
    )
    ok = worst >= -1e-10
    report(ok, "criterion 8 (admissibility modulus)", f"worst slack {worst:+.3e} >= -1e-10")
    assert worst >= -1e-10
