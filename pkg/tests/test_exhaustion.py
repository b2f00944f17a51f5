import numpy as np
import pytest

from semigreen.exhaustion import (
    _classify,
    correspondence_roundtrip,
    harmonic_majorant,
    run_exhaustion,
    split_experiment,
)
from semigreen.geometry import (
    build_box_grid,
    build_exhaustion,
    restrict,
    shared_node_indices,
)
from semigreen.operator import EllipticCoefficients
from semigreen.solver import NonConvergence, Nonlinearity

LAPLACE = EllipticCoefficients(zero_order_mode="c_zero")
RAMP = Nonlinearity(lambda p, t: np.maximum(t, 0.0), differentiable=True)
HALF_RAMP = Nonlinearity(lambda p, t: 0.5 * np.maximum(t, 0.0), differentiable=True)
SQRT = Nonlinearity(lambda p, t: np.sqrt(np.maximum(t, 0.0)))
# projected tangent steps tolerate the dead-core kink
SQRT_N = Nonlinearity(lambda p, t: np.sqrt(np.maximum(t, 0.0)), differentiable=True)
ZERO = Nonlinearity(lambda p, t: np.zeros(p.shape[0]), differentiable=True)
# absorption confined to {y > 1}
STRIP_OFF = Nonlinearity(
    lambda p, t: (p[:, 1] > 1.0) * np.maximum(t, 0.0), differentiable=True
)


def halfplane_exh(r0=2.0, stages=3, h=0.25):
    return build_exhaustion(r0, 2.0, stages, spacing=h, halfplane=True, delta=0.25)


def sqrt_cap(pts):
    return np.minimum(1.0, np.sqrt(pts[:, 1]))


class TestRunExhaustion:
    def test_zero_absorption_reproduces_harmonic_data(self):
        run = run_exhaustion(halfplane_exh(), LAPLACE, ZERO, 1.0)
        np.testing.assert_allclose(run.anchor_values, 1.0, atol=1e-12)
        for grid, u, h in run.stages:
            np.testing.assert_allclose(u, 1.0, atol=1e-12)
            np.testing.assert_allclose(h, 1.0, atol=1e-12)
        assert run.triviality_verdict == "nontrivial"
        assert run.monotone_slack <= 1e-12

    def test_confined_absorption_run(self):
        run = run_exhaustion(halfplane_exh(), LAPLACE, STRIP_OFF, sqrt_cap,
                             tol=1e-10, scheme="newton")
        a = run.anchor_values
        assert np.all(np.diff(a) < 0)  # larger domain, more absorption seen
        assert run.sup_s == pytest.approx(1.0)
        final_grid = run.stages[-1][0]
        for grid, u, h in run.stages:
            assert np.min(u) >= -1e-12
            assert np.max(u) <= run.sup_s + 1e-12
            # each majorant dominates the limit field on its own stage
            assert np.all(h >= restrict(run.limit_estimate, final_grid, grid) - 1e-9)
        assert len(run.tail_metrics) == 3
        assert max(run.tail_metrics) <= 1e-10

    def test_interval_exhaustion(self):
        exh = build_exhaustion((-1.0, 1.0), 2.0, 3, spacing=0.125, anchor=(0.0,))
        run = run_exhaustion(exh, LAPLACE, SQRT_N, 1.0, scheme="newton")
        assert np.all(np.diff(run.anchor_values) < 0)
        assert run.limit_estimate.shape == (run.stages[-1][0].n_nodes,)

    def test_majorants_can_be_skipped(self):
        run = run_exhaustion(halfplane_exh(), LAPLACE, ZERO, 1.0, track_majorants=False)
        assert all(h is None for _, _, h in run.stages)

    def test_rejects_non_superharmonic_witness(self):
        with pytest.raises(ValueError, match="superharmonic"):
            run_exhaustion(halfplane_exh(), LAPLACE, ZERO, lambda p: p[:, 1] ** 2)

    def test_nonconvergence_names_stage(self):
        with pytest.raises(NonConvergence, match="stage 0"):
            run_exhaustion(halfplane_exh(), LAPLACE, SQRT, 1.0, max_iter=1)

    def test_shared_node_decrease_is_tracked(self):
        run = run_exhaustion(halfplane_exh(), LAPLACE, STRIP_OFF, sqrt_cap,
                             scheme="newton")
        assert run.monotone_slack <= 1e-9
        # recompute the worst defect independently of the run bookkeeping
        worst = -np.inf
        for (g1, u1, _), (g2, u2, _) in zip(run.stages, run.stages[1:]):
            own, prior = shared_node_indices(g1, g2)
            worst = max(worst, float(np.max(u2[prior] - u1[own])))
        assert worst == pytest.approx(run.monotone_slack, abs=1e-14)


class TestTrendClassifier:
    def test_short_history_undecided(self):
        assert _classify(np.array([1.0, 0.5]), 1.0) == "undecided"

    def test_decay_to_zero(self):
        a = np.array([1.0, 1e-2, 5e-4, 2e-4, 9e-5])
        assert _classify(a, 1.0) == "trivial_trend"

    def test_stalled_plateau(self):
        a = np.array([1.0, 0.9, 0.89, 0.888])
        assert _classify(a, 1.0) == "nontrivial"

    def test_steady_decrease_stays_open(self):
        a = np.array([1.0, 0.6, 0.4, 0.25])
        assert _classify(a, 1.0) == "undecided"


class TestHarmonicMajorant:
    def test_family_increases_and_dominates(self):
        exh = halfplane_exh()
        run = run_exhaustion(exh, LAPLACE, STRIP_OFF, sqrt_cap, scheme="newton")
        family, h_final = harmonic_majorant(exh, LAPLACE, run.limit_estimate)
        assert len(family) == len(exh.stages)
        np.testing.assert_allclose(family[-1], h_final)
        assert np.all(h_final >= run.limit_estimate - 1e-9)
        for (g1, h1), (g2, h2) in zip(zip(exh.stages, family), zip(exh.stages[1:], family[1:])):
            own, prior = shared_node_indices(g1, g2)
            assert np.min(h2[prior] - h1[own]) >= -1e-9

    def test_harmonic_input_is_its_own_majorant(self):
        exh = halfplane_exh()
        ones = np.ones(exh.stages[-1].n_nodes)
        family, h_final = harmonic_majorant(exh, LAPLACE, ones)
        np.testing.assert_allclose(h_final, 1.0, atol=1e-12)

    def test_per_stage_input_length_checked(self):
        exh = halfplane_exh()
        with pytest.raises(ValueError, match="stage fields"):
            harmonic_majorant(exh, LAPLACE, [np.ones(g.n_nodes) for g in exh.stages[:-1]])

    def test_decreasing_family_rejected(self):
        exh = halfplane_exh()
        w = [c * np.ones(g.n_nodes) for c, g in zip((2.0, 1.0, 1.0), exh.stages)]
        with pytest.raises(RuntimeError, match="not increasing"):
            harmonic_majorant(exh, LAPLACE, w)


class TestCorrespondenceRoundtrip:
    def test_linear_data_1d(self):
        grid = build_box_grid((0.0, 1.0), 1 / 32)
        u, rep = correspondence_roundtrip(grid, LAPLACE, RAMP, lambda p: p[:, 0],
                                          tol=1e-12)
        assert rep.passed
        assert rep.reconstruction_residual <= rep.kappa * 1e-12
        assert rep.injective_gap > 0
        assert rep.harmonicity_residual <= 1e-10

    def test_linear_data_2d(self):
        grid = build_box_grid(((0.0, 1.0), (0.0, 1.0)), 1 / 8)
        u, rep = correspondence_roundtrip(grid, LAPLACE, SQRT, lambda p: p[:, 0],
                                          tol=1e-11, max_iter=500)
        assert rep.passed

    def test_zero_data(self):
        grid = build_box_grid((0.0, 1.0), 1 / 16)
        u, rep = correspondence_roundtrip(grid, LAPLACE, RAMP, 0.0, tol=1e-12)
        assert rep.passed
        assert np.max(np.abs(u)) == 0.0

    def test_larger_data_gives_larger_solution(self):
        grid = build_box_grid((0.0, 1.0), 1 / 32)
        u1, r1 = correspondence_roundtrip(grid, LAPLACE, RAMP, 1.0, tol=1e-12)
        u2, r2 = correspondence_roundtrip(grid, LAPLACE, RAMP, 2.0, tol=1e-12)
        assert r1.passed and r2.passed
        assert np.min(u2 - u1) >= -1e-11
        mid = grid.index_of((0.5,))
        assert u2[mid] - u1[mid] >= 1e-4

    def test_non_harmonic_data_rejected(self):
        grid = build_box_grid((0.0, 1.0), 1 / 16)
        with pytest.raises(ValueError, match="harmonicity"):
            correspondence_roundtrip(grid, LAPLACE, RAMP, lambda p: p[:, 0] ** 2)

    def test_negative_data_rejected(self):
        grid = build_box_grid((0.0, 1.0), 1 / 16)
        with pytest.raises(ValueError, match="nonnegative"):
            correspondence_roundtrip(grid, LAPLACE, RAMP, lambda p: -p[:, 0])

    def test_wrong_shape_rejected(self):
        grid = build_box_grid((0.0, 1.0), 1 / 16)
        with pytest.raises(ValueError, match="full node field"):
            correspondence_roundtrip(grid, LAPLACE, RAMP, np.ones(3))


class TestSplitExperiment:
    def test_domination(self):
        rep = split_experiment(halfplane_exh(), LAPLACE, HALF_RAMP, RAMP,
                               "domination", 1.0, scheme="newton")
        assert rep.passed
        assert rep.max_violation <= 1e-9
        assert set(rep.runs) == {"phi1", "phi2"}

    def test_domination_premise_checked(self):
        with pytest.raises(ValueError, match="domination"):
            split_experiment(halfplane_exh(), LAPLACE, RAMP, HALF_RAMP,
                             "domination", 1.0)

    def test_sum_mode(self):
        rep = split_experiment(halfplane_exh(), LAPLACE, RAMP, STRIP_OFF, "sum", 1.0,
                               scheme="newton")
        assert rep.passed
        assert rep.mode == "sum"
        assert rep.verdict in ("nontrivial", "trivial_trend", "undecided")

    def test_unknown_mode(self):
        with pytest.raises(ValueError, match="mode"):
            split_experiment(halfplane_exh(), LAPLACE, RAMP, RAMP, "ratio", 1.0)
