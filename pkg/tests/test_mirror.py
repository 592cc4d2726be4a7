import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import mdcontrol as md
from mdcontrol.mirror import _vi_residual


def ternary_argmax(fn, lo, hi, iters=300):
    """Independent maximizer of a strictly concave scalar function on [lo, hi]."""
    for _ in range(iters):
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        if fn(m1) < fn(m2):
            lo = m1
        else:
            hi = m2
    return 0.5 * (lo + hi)


def prox_objective(mirror, u, xi, lam):
    def phi(v):
        vv = np.atleast_1d(np.asarray(v, dtype=float))
        return float(xi @ (vv - u)) - lam * md.bregman_pointwise(mirror, vv, u)

    return phi


class TestBregman:
    def test_quadratic_example(self, quad_map):
        assert md.bregman_pointwise(quad_map, [3.0], [1.0]) == pytest.approx(2.0, abs=1e-14)

    def test_zero_at_equal_points(self):
        for mirror in (md.quadratic_map(), md.quartic_augmented_map(1.0)):
            v = np.array([0.7, -0.3])
            assert md.bregman_pointwise(mirror, v, v) == 0.0

    def test_quartic_augmented_example(self):
        mirror = md.quartic_augmented_map(1.0)
        assert md.bregman_pointwise(mirror, [1.0], [0.0]) == pytest.approx(0.75, abs=1e-14)

    @given(
        v=st.lists(st.floats(-3, 3), min_size=2, max_size=2),
        u=st.lists(st.floats(-3, 3), min_size=2, max_size=2),
        eps=st.floats(0.0, 2.0),
    )
    def test_nonnegative_and_strongly_convex(self, v, u, eps):
        mirror = md.quartic_augmented_map(eps)
        v = np.asarray(v)
        u = np.asarray(u)
        div = md.bregman_pointwise(mirror, v, u)
        gap = float((v - u) @ (v - u))
        assert div >= 0.5 * mirror.strong_convexity * gap - 1e-12
        if div <= 1e-12:
            assert np.linalg.norm(v - u) <= 2e-6

    def test_integrated_zero(self, quad_map):
        grid = md.TimeGrid(1.0, 8)
        u = md.constant_control(grid, 1.5)
        assert md.bregman_integrated(quad_map, u, u) == 0.0

    def test_integrated_constant_offset(self, quad_map):
        grid = md.TimeGrid(1.0, 64)
        u = md.constant_control(grid, 1.0)
        v = md.constant_control(grid, 3.5)
        assert md.bregman_integrated(quad_map, v, u) == pytest.approx(0.5 * 2.5**2, abs=1e-12)

    def test_integrated_lower_bound(self):
        grid = md.TimeGrid(1.0, 50)
        rng = np.random.default_rng(0)
        for mirror in (md.quadratic_map(), md.quartic_augmented_map(0.8)):
            for _ in range(50):
                u = md.Trajectory(grid, rng.uniform(-2, 2, (51, 2)))
                v = md.Trajectory(grid, rng.uniform(-2, 2, (51, 2)))
                breg = md.bregman_integrated(mirror, v, u)
                dist = md.l2_norm(md.Trajectory(grid, v.values - u.values))
                assert breg >= 0.5 * mirror.strong_convexity * dist**2 - 1e-10

    def test_grid_mismatch(self, quad_map):
        u = md.constant_control(md.TimeGrid(1.0, 4), 0.0)
        v = md.constant_control(md.TimeGrid(1.0, 5), 0.0)
        with pytest.raises(ValueError):
            md.bregman_integrated(quad_map, v, u)

    def test_gradient_matches_finite_differences(self):
        step = 1e-6
        rng = np.random.default_rng(5)
        for mirror in (md.quadratic_map(), md.quartic_augmented_map(1.3)):
            for _ in range(25):
                u = rng.uniform(-2, 2, 3)
                for j in range(3):
                    e = np.zeros(3)
                    e[j] = step
                    fd = (mirror.h(u + e) - mirror.h(u - e)) / (2 * step)
                    assert fd == pytest.approx(mirror.grad_h(u)[j], rel=1e-6, abs=1e-9)


class TestMirrorStep:
    def test_quadratic_unconstrained_closed_form(self, quad_map):
        u = np.array([1.0, -2.0])
        xi = np.array([3.0, 1.0])
        out = md.mirror_step_pointwise(quad_map, md.Unconstrained(), u, xi, 4.0)
        assert np.array_equal(out, u + xi / 4.0)

    def test_quadratic_box_clamps(self, quad_map):
        box = md.Box(lower=np.array([-1.0]), upper=np.array([1.0]))
        out = md.mirror_step_pointwise(quad_map, box, np.array([0.9]), np.array([2.0]), 1.0)
        assert np.array_equal(out, np.array([1.0]))

    @given(st.lists(st.floats(-3, 3), min_size=1, max_size=3))
    def test_zero_gradient_fixed_point(self, u):
        u = np.asarray(u)
        for mirror in (md.quadratic_map(), md.quartic_augmented_map(1.0)):
            out = md.mirror_step_pointwise(mirror, md.Unconstrained(), u, np.zeros_like(u), 2.0)
            assert np.array_equal(out, u)

    def test_invalid_lam(self, quad_map):
        with pytest.raises(ValueError):
            md.mirror_step_pointwise(quad_map, md.Unconstrained(), [0.0], [1.0], 0.0)

    def test_dimension_mismatch(self, quad_map):
        with pytest.raises(ValueError):
            md.mirror_step_pointwise(quad_map, md.Unconstrained(), [0.0], [1.0, 2.0], 1.0)

    def test_oracle_set_quadratic_only(self):
        oracle = md.ConvexOracle(projection=lambda v: v / max(1.0, np.linalg.norm(v)))
        u = np.array([0.5, 0.0])
        out = md.mirror_step_pointwise(md.quadratic_map(), oracle, u, np.array([5.0, 0.0]), 1.0)
        assert np.linalg.norm(out) == pytest.approx(1.0, abs=1e-12)
        with pytest.raises(ValueError):
            md.mirror_step_pointwise(md.quartic_augmented_map(1.0), oracle, u, np.array([1.0, 0.0]), 1.0)

    def test_vi_residual_of_accepted_solutions(self):
        rng = np.random.default_rng(9)
        box = md.Box(lower=np.array([-1.0, -1.0]), upper=np.array([1.0, 1.0]))
        mirror = md.quartic_augmented_map(1.0)
        for _ in range(50):
            u = rng.uniform(-1, 1, 2)
            xi = rng.uniform(-4, 4, 2)
            lam = rng.uniform(0.5, 8.0)
            for cset in (md.Unconstrained(), box):
                v = md.mirror_step_pointwise(mirror, cset, u, xi, lam)
                eta = xi + lam * mirror.grad_h(u)
                assert np.linalg.norm(_vi_residual(mirror, cset, v, eta, lam)) <= 1e-10

    def test_matches_ternary_search_oracle(self):
        # independent strictly concave maximization over an interval
        rng = np.random.default_rng(21)
        box = md.Box(lower=np.array([-1.0]), upper=np.array([1.0]))
        mirror = md.quartic_augmented_map(1.0)
        for _ in range(20):
            u = rng.uniform(-1, 1, 1)
            xi = rng.uniform(-5, 5, 1)
            lam = rng.uniform(0.5, 6.0)
            got = md.mirror_step_pointwise(mirror, box, u, xi, lam)[0]
            phi = prox_objective(mirror, u, xi, lam)
            want = ternary_argmax(phi, -1.0, 1.0)
            assert got == pytest.approx(want, abs=1e-8)


class TestThreePoint:
    def test_equality_at_maximizer(self, quad_map):
        u = np.array([0.4])
        xi = np.array([1.2])
        lam = 2.0
        ustar = md.mirror_step_pointwise(quad_map, md.Unconstrained(), u, xi, lam)
        slack = md.three_point_check(quad_map, md.Unconstrained(), u, ustar, ustar, xi, lam)
        assert abs(slack) <= 1e-12

    def test_random_quadratic_unconstrained(self, quad_map):
        rng = np.random.default_rng(13)
        for _ in range(200):
            u, w = rng.uniform(-3, 3, (2, 2))
            xi = rng.uniform(-4, 4, 2)
            lam = rng.uniform(0.5, 10.0)
            ustar = md.mirror_step_pointwise(quad_map, md.Unconstrained(), u, xi, lam)
            assert md.three_point_check(quad_map, md.Unconstrained(), u, ustar, w, xi, lam) >= -1e-12

    def test_box_boundary_maximizer(self):
        box = md.Box(lower=np.array([-1.0]), upper=np.array([1.0]))
        mirror = md.quartic_augmented_map(1.0)
        rng = np.random.default_rng(14)
        for _ in range(100):
            u = rng.uniform(-1, 1, 1)
            xi = np.array([rng.uniform(3.0, 6.0)])  # pushes to the boundary
            lam = rng.uniform(0.5, 2.0)
            ustar = md.mirror_step_pointwise(mirror, box, u, xi, lam)
            w = rng.uniform(-1, 1, 1)
            assert md.three_point_check(mirror, box, u, ustar, w, xi, lam) >= -1e-9

    def test_bregman_identity(self):
        rng = np.random.default_rng(15)
        for mirror in (md.quadratic_map(), md.quartic_augmented_map(0.7)):
            for _ in range(100):
                u, ubar, w = rng.uniform(-2, 2, (3, 2))
                lhs = (
                    md.bregman_pointwise(mirror, w, u)
                    - md.bregman_pointwise(mirror, ubar, u)
                    - md.bregman_pointwise(mirror, w, ubar)
                )
                rhs = float((mirror.grad_h(ubar) - mirror.grad_h(u)) @ (w - ubar))
                assert lhs == pytest.approx(rhs, abs=1e-10)


class TestMapConstruction:
    def test_strong_convexity_validation(self):
        with pytest.raises(ValueError):
            md.custom_map(h=lambda u: 0.0, grad_h=lambda u: u, strong_convexity=0.0)

    def test_quartic_augmented_validation(self):
        with pytest.raises(ValueError):
            md.quartic_augmented_map(-0.5)
