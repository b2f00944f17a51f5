import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize

from semigreen.geometry import build_box_grid
from semigreen.operator import EllipticCoefficients, assemble
from semigreen.potential import factorize, harmonic_extension
from semigreen.solver import (
    NonConvergence,
    Nonlinearity,
    apply_T,
    check_comparison,
    check_monotone_in_data,
    condition_factor,
    solve_U,
)

RAMP = Nonlinearity(lambda p, t: np.maximum(t, 0.0), differentiable=True)
SQRT = Nonlinearity(lambda p, t: np.sqrt(np.maximum(t, 0.0)))


def laplace(bbox, h):
    grid = build_box_grid(bbox, h)
    op = assemble(grid, EllipticCoefficients(zero_order_mode="c_zero"))
    return grid, op, factorize(op)


class TestNonlinearityValidation:
    def test_negative_values_rejected(self):
        bad = Nonlinearity(lambda p, t: np.full(p.shape[0], -1.0) * (t > 0))
        with pytest.raises(ValueError, match="nonnegative"):
            bad.validate(np.zeros((4, 1)))

    def test_nonvanishing_left_tail_rejected(self):
        bad = Nonlinearity(lambda p, t: np.full(p.shape[0], abs(t)))
        with pytest.raises(ValueError, match="vanish"):
            bad.validate(np.zeros((4, 1)))

    def test_decreasing_rejected(self):
        bad = Nonlinearity(lambda p, t: np.full(p.shape[0], max(1.0 - t, 0.0) if t > 0 else 0.0))
        with pytest.raises(ValueError, match="increasing"):
            bad.validate(np.zeros((4, 1)))

    def test_scalar_t_broadcasts(self):
        vals = RAMP(np.zeros((3, 1)), 2.0)
        np.testing.assert_allclose(vals, 2.0)


class TestSolveBasics:
    def test_zero_data_short_circuit(self):
        grid, op, gop = laplace((0.0, 1.0), 0.125)
        u, rep = solve_U(op, gop, 0.0, SQRT)
        assert np.max(np.abs(u)) == 0.0
        assert rep.iterations == 0 and rep.status == "converged"

    def test_negative_data_rejected(self):
        grid, op, gop = laplace((0.0, 1.0), 0.125)
        with pytest.raises(ValueError, match="nonnegative"):
            solve_U(op, gop, -1.0, RAMP)

    def test_unknown_scheme(self):
        grid, op, gop = laplace((0.0, 1.0), 0.125)
        with pytest.raises(ValueError, match="scheme"):
            solve_U(op, gop, 1.0, RAMP, scheme="secant")

    def test_newton_needs_differentiable_flag(self):
        grid, op, gop = laplace((0.0, 1.0), 0.125)
        with pytest.raises(ValueError, match="differentiable"):
            solve_U(op, gop, 1.0, SQRT, scheme="newton")

    def test_boundary_values_kept(self):
        grid, op, gop = laplace((0.0, 1.0), 0.125)
        fb = np.linspace(1.0, 2.0, grid.n_nodes - grid.n_interior)
        u, _ = solve_U(op, gop, fb, RAMP)
        np.testing.assert_allclose(u[grid.boundary_nodes], fb)

    def test_stall_is_reported_not_raised(self):
        grid, op, gop = laplace((0.0, 1.0), 0.125)
        u, rep = solve_U(op, gop, 1.0, RAMP, tol=1e-14, max_iter=1)
        assert rep.status == "max_iter"
        assert np.all(np.isfinite(u))


class TestBenchmark:
    """u'' = u on (0,1), u(0) = u(1) = 1: solution cosh(x - 1/2)/cosh(1/2)."""

    def solve(self, h, scheme="sandwich", tol=1e-12):
        grid, op, gop = laplace((0.0, 1.0), h)
        u, rep = solve_U(op, gop, 1.0, RAMP, tol=tol, max_iter=400, scheme=scheme)
        assert rep.status == "converged"
        return grid, u, rep

    def test_midpoint_value(self):
        grid, u, _ = self.solve(1 / 64)
        mid = u[grid.index_of((0.5,))]
        assert abs(mid - math.cosh(0.0) / math.cosh(0.5)) <= 5e-6

    def test_second_order_convergence(self):
        errs = []
        for h in (1 / 16, 1 / 32):
            grid, u, _ = self.solve(h)
            exact = np.cosh(grid.nodes[:, 0] - 0.5) / math.cosh(0.5)
            errs.append(np.max(np.abs(u - exact)))
        assert 3.5 <= errs[0] / errs[1] <= 4.5

    def test_schemes_agree(self):
        fields = [self.solve(1 / 32, scheme=s)[1] for s in ("sandwich", "damped_picard", "newton")]
        for other in fields[1:]:
            assert np.max(np.abs(fields[0] - other)) <= 1e-10

    def test_report_residual_matches_recomputation(self):
        grid, op, gop = laplace((0.0, 1.0), 1 / 32)
        u, rep = solve_U(op, gop, 1.0, RAMP, tol=1e-12)
        tu = apply_T(op, gop, 1.0, u, RAMP)
        assert np.max(np.abs(u - tu)) == pytest.approx(rep.final_identity_residual, abs=1e-15)
        assert rep.final_identity_residual <= 1e-12


class TestNonsmoothCrossValidation:
    def test_sqrt_problem_matches_root_finder(self):
        # same discrete system solved by an unrelated method: u'' = sqrt(u+)
        grid, op, gop = laplace((0.0, 1.0), 1 / 32)
        pts = grid.nodes[grid.interior_nodes]
        fb = np.ones(grid.n_nodes - grid.n_interior)
        rhs = op.B @ fb

        def system(ui):
            return op.K @ ui + SQRT(pts, ui) - rhs

        sol = optimize.root(system, 0.9 * np.ones(grid.n_interior), method="hybr", tol=1e-13)
        assert sol.success
        u, rep = solve_U(op, gop, 1.0, SQRT, tol=1e-12, max_iter=500)
        assert rep.status == "converged"
        assert np.max(np.abs(u[grid.interior_nodes] - sol.x)) <= 1e-7

    def test_newton_handles_sqrt_declared_differentiable(self):
        # the projected tangent iteration absorbs the kink at the dead core
        grid, op, gop = laplace((0.0, 1.0), 1 / 32)
        phi = Nonlinearity(lambda p, t: np.sqrt(np.maximum(t, 0.0)), differentiable=True)
        un, rn = solve_U(op, gop, 1.0, phi, tol=1e-12, scheme="newton")
        us, rs = solve_U(op, gop, 1.0, phi, tol=1e-12, scheme="sandwich", max_iter=500)
        assert rn.status == rs.status == "converged"
        assert rn.iterations < rs.iterations
        assert np.max(np.abs(un - us)) <= 1e-10


class TestSandwichStructure:
    def test_iterates_interleave(self):
        grid, op, gop = laplace((0.0, 1.0), 1 / 16)
        v = harmonic_extension(gop, 1.0)
        iterates = [v]
        for _ in range(6):
            iterates.append(apply_T(op, gop, 1.0, iterates[-1], RAMP))
        evens = iterates[0::2]
        odds = iterates[1::2]
        for a, b in zip(evens, evens[1:]):
            assert np.all(b <= a + 1e-12)
        for a, b in zip(odds, odds[1:]):
            assert np.all(b >= a - 1e-12)
        assert np.all(np.max(np.stack(odds), axis=0) <= np.min(np.stack(evens), axis=0) + 1e-12)

    def test_solution_is_fixed_point(self):
        grid, op, gop = laplace((0.0, 1.0), 1 / 16)
        u, _ = solve_U(op, gop, 1.0, SQRT, tol=1e-12, max_iter=500)
        np.testing.assert_allclose(apply_T(op, gop, 1.0, u, SQRT), u, atol=1e-11)

    @given(st.integers(0, 10**6))
    @settings(max_examples=25, deadline=None)
    def test_T_is_antitone(self, seed):
        grid, op, gop = laplace((0.0, 1.0), 1 / 8)
        rng = np.random.default_rng(seed)
        v1 = rng.uniform(0.0, 1.0, grid.n_nodes)
        v2 = v1 + rng.uniform(0.0, 1.0, grid.n_nodes)
        t1 = apply_T(op, gop, 1.0, v1, RAMP)
        t2 = apply_T(op, gop, 1.0, v2, RAMP)
        assert np.all(t2 <= t1 + 1e-12)

    @given(st.floats(0.1, 3.0), st.floats(0.0, 2.0))
    @settings(max_examples=25, deadline=None)
    def test_solution_bracket(self, amp, slope):
        # 0 <= u <= H f whenever the data is nonnegative
        grid, op, gop = laplace((0.0, 1.0), 1 / 8)
        fb = amp + slope * grid.nodes[grid.boundary_nodes, 0]
        u, rep = solve_U(op, gop, fb, SQRT, tol=1e-10, max_iter=500)
        assert rep.status == "converged"
        hf = harmonic_extension(gop, fb)
        assert np.min(u) >= -1e-12
        assert np.all(u <= hf + 1e-12)


class TestComparisonChecks:
    def setup_method(self):
        self.grid, self.op, self.gop = laplace((0.0, 1.0), 1 / 16)

    def test_ordered_solutions_pass(self):
        u1, _ = solve_U(self.op, self.gop, 1.0, RAMP, tol=1e-12)
        u2, _ = solve_U(self.op, self.gop, 1.5, RAMP, tol=1e-12)
        verdict = check_comparison(self.op, u2, u1, RAMP)
        assert verdict.passed
        assert verdict.kappa >= 1.0

    def test_boundary_premise_failure(self):
        u1, _ = solve_U(self.op, self.gop, 1.0, RAMP, tol=1e-12)
        u2, _ = solve_U(self.op, self.gop, 1.5, RAMP, tol=1e-12)
        verdict = check_comparison(self.op, u1, u2, RAMP)
        assert not verdict.passed
        assert "boundary" in verdict.reason

    def test_residual_premise_failure(self):
        u, _ = solve_U(self.op, self.gop, 1.0, RAMP, tol=1e-12)
        dented = u.copy()
        dented[self.grid.interior_nodes] -= 0.1 * np.sin(
            np.pi * self.grid.nodes[self.grid.interior_nodes, 0]
        )
        # a concave dent raises L(u) - phi(u) without moving the boundary
        verdict = check_comparison(self.op, dented, u, RAMP)
        assert not verdict.passed
        assert "residual" in verdict.reason

    def test_boundary_gap_allowance(self):
        u1, _ = solve_U(self.op, self.gop, 1.0, RAMP, tol=1e-12)
        u2, _ = solve_U(self.op, self.gop, 1.5, RAMP, tol=1e-12)
        # the smaller solution dominates the larger one up to the data gap
        assert check_comparison(self.op, u1, u2, RAMP, boundary_gap=0.5).passed
        assert not check_comparison(self.op, u1, u2, RAMP, boundary_gap=0.4).passed

    def test_needs_full_fields(self):
        u, _ = solve_U(self.op, self.gop, 1.0, RAMP, tol=1e-12)
        with pytest.raises(ValueError, match="full node fields"):
            check_comparison(self.op, u[self.grid.interior_nodes], u, RAMP)

    def test_monotone_in_data(self):
        verdict = check_monotone_in_data(self.op, self.gop, 1.0, 2.0, RAMP, tol=1e-9)
        assert verdict.passed

    def test_monotone_precondition(self):
        with pytest.raises(ValueError, match="pre-condition"):
            check_monotone_in_data(self.op, self.gop, 2.0, 1.0, RAMP)

    def test_monotone_propagates_nonconvergence(self):
        with pytest.raises(NonConvergence):
            check_monotone_in_data(self.op, self.gop, 1.0, 2.0, SQRT, max_iter=2)

    def test_condition_factor_interval(self):
        # 1 + max x(1-x)/2 on the unit interval
        assert condition_factor(self.gop) == pytest.approx(1.125, abs=1e-12)
