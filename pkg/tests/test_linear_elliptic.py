import json

import numpy as np
import pytest

from plaplab import (
    VectorField,
    estimate_c1,
    estimate_c2,
    estimate_c3,
    estimate_constants,
    field_from_fn,
    lq_norm,
    make_grid,
    random_sine_field,
    solve_poisson,
    zeros_field,
)
from plaplab.linear_elliptic import _hess_lap, neg_laplacian

from conftest import sinsin


class TestSolvePoisson:
    def test_analytic_solution_and_refinement(self):
        errs = {}
        for m in (33, 65):
            g = make_grid(2, [m, m], [1.0, 1.0])
            f = field_from_fn(g, 1, lambda x, y: 2 * np.pi**2 * sinsin()(x, y))
            u, rep = solve_poisson(g, f, 1e-12)
            assert rep.converged
            ue = field_from_fn(g, 1, sinsin())
            errs[m] = np.abs(u.values - ue.values).max()
        assert errs[65] < 3e-4
        assert 4 * 0.8 <= errs[33] / errs[65] <= 4 * 1.2

    def test_zero_rhs_exact(self, grid33):
        u, rep = solve_poisson(grid33, zeros_field(grid33), 1e-10)
        assert np.all(u.values == 0.0)
        assert rep.iterations == 0
        assert rep.converged

    def test_linearity(self, grid17):
        rng = np.random.default_rng(2)
        g1 = random_sine_field(grid17, 1, rng)
        g2 = random_sine_field(grid17, 1, np.random.default_rng(5))
        tol = 1e-12
        u1, _ = solve_poisson(grid17, g1, tol)
        u2, _ = solve_poisson(grid17, g2, tol)
        u12, _ = solve_poisson(grid17, VectorField(grid17, g1.values + g2.values), tol)
        gap = lq_norm(VectorField(grid17, u12.values - u1.values - u2.values), 2.0)
        scale = max(1.0, lq_norm(g1, 2.0) + lq_norm(g2, 2.0))
        assert gap <= 20 * tol * scale

    def test_round_trip_residual(self, grid33):
        g = random_sine_field(grid33, 2, np.random.default_rng(8))
        tol = 1e-11
        u, rep = solve_poisson(grid33, g, tol)
        res = g.values - neg_laplacian(u.values, grid33)
        res = np.where(grid33.interior_mask, res, 0.0)
        assert lq_norm(res, 2.0, grid33) <= tol * max(1.0, lq_norm(g, 2.0)) * 1.001
        assert rep.residual == pytest.approx(lq_norm(res, 2.0, grid33), rel=1e-9)

    def test_maximum_principle_spot_check(self, grid17):
        f = field_from_fn(grid17, 1, lambda x, y: x * (1 - x) + 0.1)
        tol = 1e-11
        u, _ = solve_poisson(grid17, f, tol)
        assert u.values.min() >= -tol

    def test_dirichlet_conforming_output(self, grid17):
        g = field_from_fn(grid17, 1, lambda x, y: np.cos(x + y))
        u, _ = solve_poisson(grid17, g, 1e-10)
        assert u.is_dirichlet_conforming()

    def test_deterministic(self, grid17):
        g = random_sine_field(grid17, 1, np.random.default_rng(1))
        u1, _ = solve_poisson(grid17, g, 1e-11)
        u2, _ = solve_poisson(grid17, g, 1e-11)
        assert np.array_equal(u1.values, u2.values)

    def test_nonconvergence_reported(self, grid33):
        g = random_sine_field(grid33, 1, np.random.default_rng(4))
        u, rep = solve_poisson(grid33, g, 1e-12, max_iters=3)
        assert not rep.converged
        assert rep.iterations == 3


class TestEstimateC2:
    def test_convex_square_near_unity(self, grid17):
        c = estimate_c2(grid17, 2.0, samples=12, ascent_steps=2, seed=11)
        assert 0.9 <= c <= 1.2

    def test_estimate_c1_alias(self, grid17):
        assert estimate_c1(grid17, 8, 1, 11) == estimate_c2(grid17, 2.0, 8, 1, 11)

    def test_single_eigen_sample_ratio(self):
        for m in (17, 33):
            g = make_grid(2, [m, m], [1.0, 1.0])
            u = field_from_fn(g, 1, sinsin())
            hess, lap = _hess_lap(u.values[0], g)
            ratio = lq_norm(hess, 2.0, g) / lq_norm(lap, 2.0, g)
            assert ratio <= 1.0 + g.spacing[0] ** 2

    def test_supremum_monotone_in_samples(self, grid17):
        a = estimate_c2(grid17, 4.0, samples=4, ascent_steps=1, seed=23)
        b = estimate_c2(grid17, 4.0, samples=9, ascent_steps=1, seed=23)
        assert b >= a

    def test_deterministic(self, grid17):
        a = estimate_c2(grid17, 2.0, samples=6, ascent_steps=2, seed=3)
        b = estimate_c2(grid17, 2.0, samples=6, ascent_steps=2, seed=3)
        assert a == b

    def test_q_validation(self, grid17):
        with pytest.raises(ValueError):
            estimate_c2(grid17, 1.5, 4, 1, 0)
        with pytest.raises(ValueError):
            estimate_c2(grid17, 2.0, 0, 1, 0)

    def test_degenerate_samples_rejected(self, grid17, monkeypatch):
        import plaplab.linear_elliptic as le

        def zero_sample(grid, rng, max_modes=8):
            return np.zeros((1, *grid.resolution)), np.zeros(1)

        monkeypatch.setattr(le, "_sine_sample", zero_sample)
        with pytest.raises(RuntimeError):
            estimate_c2(grid17, 2.0, samples=3, ascent_steps=1, seed=0)


class TestEstimateC3:
    def test_sobolev_exponent_formula(self):
        # q < n branch pairs q with n q / (n - q)
        q, n = 2.4, 3
        assert n * q / (n - q) == pytest.approx(12.0)

    def test_q_below_n_branch(self, grid3d):
        c = estimate_c3(grid3d, 2.4, samples=6, seed=5)
        assert np.isfinite(c) and c > 0

    def test_q_above_n_branch_2d(self, grid17):
        c = estimate_c3(grid17, 4.0, samples=6, seed=5)
        assert np.isfinite(c) and c > 0

    def test_q_equal_n_rejected(self, grid3d):
        with pytest.raises(ValueError):
            estimate_c3(grid3d, 3.0, samples=4, seed=0)

    def test_q_at_or_below_two_rejected(self, grid3d):
        with pytest.raises(ValueError):
            estimate_c3(grid3d, 2.0, samples=4, seed=0)


class TestConstantsReport:
    def test_report_roundtrip(self, grid17):
        rep = estimate_constants(grid17, [2.0, 4.0], samples=6, ascent_steps=1, seed=3)
        assert rep.C1 == rep.C2_of_q[2.0]
        assert set(rep.C3_of_q) == {4.0}
        assert rep.K_band[0] <= rep.K_band[1]
        assert all(v > 0 for v in rep.C2_of_q.values())
        blob = json.dumps(rep.to_dict())
        back = json.loads(blob)
        assert set(back) == {"C1", "C2_of_q", "C3_of_q", "K_band",
                             "sample_count", "ascent_steps"}

    def test_q2_c3_included_in_3d(self, grid3d):
        rep = estimate_constants(grid3d, [2.0], samples=5, ascent_steps=1, seed=3)
        assert 2.0 in rep.C3_of_q
        assert rep.C3_of_q[2.0] > 0
