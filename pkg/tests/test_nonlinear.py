import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plaplab import (
    ConfigError,
    SolverConfig,
    VectorField,
    admissible_p_min,
    apply_F,
    ball_radius,
    compute_a,
    estimate_constants,
    field_from_fn,
    jet,
    lq_norm,
    make_grid,
    r_of_q,
    random_sine_field,
    solve_fixed_point,
    solve_poisson,
    verify_apriori,
    w2q_norm,
    zeros_field,
)
from plaplab.calculus import cubic_term
from plaplab.oracle import manufactured_problem

from conftest import sinsin


class TestRofQ:
    def test_p2_forces_identity(self):
        assert r_of_q(2.0, 2.0, 3) == 2.0

    def test_low_q_gain(self):
        assert r_of_q(2.0, 1.5, 3) == pytest.approx(2.4)

    def test_above_dimension(self):
        assert r_of_q(5.0, 1.5, 3) == 5.0

    def test_both_branches_agree_at_n(self):
        n, p = 3, 1.4
        from_formula = n * n / (n * (p - 1) + n * (2 - p))
        assert from_formula == pytest.approx(float(n))
        assert r_of_q(float(n), p, n) == float(n)

    @settings(max_examples=60, deadline=None)
    @given(q=st.floats(2.0, 2.99), p=st.floats(1.01, 1.99))
    def test_gain_below_dimension(self, q, p):
        assert r_of_q(q, p, 3) > q

    @settings(max_examples=30, deadline=None)
    @given(q=st.floats(3.0, 50.0), p=st.floats(1.01, 2.0))
    def test_identity_above_dimension(self, q, p):
        assert r_of_q(q, p, 3) == q


class TestAdmissiblePMin:
    def test_unit_constant(self):
        assert admissible_p_min(1.0) == pytest.approx(1.0)

    def test_examples(self):
        assert admissible_p_min(2.0) == pytest.approx(1.5)
        assert admissible_p_min(4.0) == pytest.approx(1.75)

    def test_positive_required(self):
        with pytest.raises(ValueError):
            admissible_p_min(0.0)


class TestComputeA:
    def test_p2_closed_form(self):
        assert compute_a(0.5, 1.0, 2.0) == pytest.approx(6.0)
        assert compute_a(1.0, 7.3, 2.0) == pytest.approx(3.0)

    def test_sqrt_closed_form(self):
        # p = 3/2, c3 = 1, delta = 1: quadratic in sqrt(a) gives 3 + 2 sqrt(2)
        assert compute_a(1.0, 1.0, 1.5) == pytest.approx(3.0 + 2.0 * math.sqrt(2.0), rel=1e-9)

    def test_inadmissible_delta(self):
        with pytest.raises(ValueError):
            compute_a(0.0, 1.0, 1.5)

    @settings(max_examples=60, deadline=None)
    @given(
        delta=st.floats(0.05, 1.0),
        c3=st.floats(0.0, 5.0),
        p=st.floats(1.05, 2.0),
    )
    def test_feasible_and_minimal(self, delta, c3, p):
        a = compute_a(delta, c3, p)
        gap = lambda x: x * delta - 1.0 - 2.0 * c3 ** (2 - p) * x ** (2 - p)
        assert gap(a) >= -1e-8 * max(1.0, a * delta)
        assert gap(a * (1 - 1e-6)) < gap(a) + 1e-12


class TestBallRadius:
    def test_zero_datum(self, grid17):
        assert ball_radius(2.0, zeros_field(grid17), 4.0, 1.5, 2) == 0.0

    def test_p2_collapse(self, grid17):
        f = field_from_fn(grid17, 1, sinsin())
        a, q = 1.7, 4.0
        assert ball_radius(a, f, q, 2.0, 2) == pytest.approx(2 * a * lq_norm(f, q))

    def test_scaling_bound(self, grid17):
        f = field_from_fn(grid17, 1, sinsin())
        a, q, p = 2.0, 4.0, 1.5
        base = ball_radius(a, f, q, p, 2)
        for lam in (1.0, 2.0, 8.0):
            scaled = ball_radius(a, VectorField(grid17, lam * f.values), q, p, 2)
            assert scaled <= lam ** (1 / (p - 1)) * base * (1 + 1e-12)


class TestApplyF:
    def test_p2_ignores_iterate(self, grid17):
        f = random_sine_field(grid17, 1, np.random.default_rng(0))
        cfg = SolverConfig(p=2.0, mu=0.4, q=4.0)
        up, _ = solve_poisson(grid17, f, cfg.lin_tol)
        for seed in (1, 2):
            v = random_sine_field(grid17, 1, np.random.default_rng(seed))
            u, rep = apply_F(v, f, cfg)
            assert rep.converged
            assert np.array_equal(u.values, up.values)

    def test_zero_iterate_scales_datum(self, grid17):
        p, mu = 1.5, 0.2
        f = random_sine_field(grid17, 1, np.random.default_rng(3))
        cfg = SolverConfig(p=p, mu=mu, q=4.0)
        u, _ = apply_F(zeros_field(grid17), f, cfg)
        ref, _ = solve_poisson(
            grid17, VectorField(grid17, f.values * mu ** (2 - p)), cfg.lin_tol
        )
        assert np.abs(u.values - ref.values).max() < 1e-12

    def test_singular_quotient_bounded(self, grid17):
        v = random_sine_field(grid17, 2, np.random.default_rng(9))
        jv = jet(v)
        mu = 0.05
        s = np.sqrt((jv.grad * jv.grad).sum(axis=(0, 1)))
        cub = cubic_term(jv).values
        with np.errstate(divide="ignore", invalid="ignore"):
            S = np.where(s >= 1e-12, cub / ((mu + s) * s), 0.0)
        smag = np.sqrt((S * S).sum(axis=0))
        hmag = np.sqrt((jv.hess * jv.hess).sum(axis=(0, 1, 2)))
        gmag_ratio = np.where(s > 0, s / (mu + s), 0.0)
        assert np.all(smag <= gmag_ratio * hmag * (1 + 1e-12) + 1e-14)
        assert np.all(smag <= hmag * (1 + 1e-12) + 1e-14)


@pytest.fixture(scope="module")
def constants17(grid17):
    return estimate_constants(grid17, [4.0], samples=10, ascent_steps=2, seed=3)


class TestSolveFixedPoint:
    def test_p2_single_iteration_any_start(self, grid17):
        f = random_sine_field(grid17, 1, np.random.default_rng(0))
        up, _ = solve_poisson(grid17, f, 1e-12)
        for v0 in (None, random_sine_field(grid17, 1, np.random.default_rng(5))):
            cfg = SolverConfig(p=2.0, mu=0.3, q=4.0, picard_tol=1e-10)
            u, trace = solve_fixed_point(f, cfg, None, v0=v0)
            assert trace.converged
            assert len(trace.rows) == 1
            assert np.array_equal(u.values, up.values)

    def test_zero_datum(self, grid17, constants17):
        cfg = SolverConfig(p=1.5, mu=0.1, q=4.0, picard_tol=1e-10)
        u, trace = solve_fixed_point(zeros_field(grid17), cfg, constants17)
        assert trace.converged
        assert np.all(u.values == 0.0)
        assert trace.R == 0.0

    def test_manufactured_recovery(self, grid17, constants17):
        p, mu, tol = 1.8, 0.05, 1e-9
        ue, f = manufactured_problem(sinsin(0.05), p, mu, grid17, "nondivergence")
        cfg = SolverConfig(p=p, mu=mu, q=4.0, picard_tol=tol, picard_max_iters=200)
        u, trace = solve_fixed_point(f, cfg, constants17)
        assert trace.converged
        err = w2q_norm(VectorField(grid17, u.values - ue.values), 2.0)
        assert err <= 10 * tol
        assert not any(r.ball_violation for r in trace.rows)

    def test_chain_inequality_per_iterate(self, grid17, constants17):
        # the Laplacian of one map application is controlled by the iterate's
        # Hessian norm plus the two datum terms, up to numerical slack
        p, mu, q = 1.6, 0.08, 4.0
        ue, f = manufactured_problem(sinsin(0.5), p, mu, grid17, "nondivergence")
        cfg = SolverConfig(p=p, mu=mu, q=q, picard_tol=1e-9)
        nf_q = lq_norm(f, q)
        a = 2.0
        R = ball_radius(a, f, q, p, 2)
        v = zeros_field(grid17)
        for _ in range(4):
            jv = jet(v)
            u, _ = apply_F(v, f, cfg, v_jet=jv)
            s = np.sqrt((jv.grad * jv.grad).sum(axis=(0, 1)))
            weighted = lq_norm(f.values * s ** (2 - p), q, grid17)
            lhs = lq_norm(jet(u).lap, q, grid17)
            rhs = (2 - p) * lq_norm(jv.hess, q, grid17) + nf_q + weighted
            assert lhs <= rhs + 1e-8 * max(1.0, R)
            v = u

    def test_empirical_ball_invariance(self, grid17, constants17):
        p, mu, q = 1.7, 0.1, 4.0
        _, f = manufactured_problem(sinsin(0.05), p, mu, grid17, "nondivergence")
        cfg = SolverConfig(p=p, mu=mu, q=q, picard_tol=1e-9)
        u0, trace = solve_fixed_point(f, cfg, constants17)
        R = trace.R
        rng_ids = range(5)
        for k in rng_ids:
            v = random_sine_field(grid17, 1, np.random.default_rng([77, k]))
            lap_q = lq_norm(jet(v).lap, q, grid17)
            if lap_q > R:  # rescale into the invariant ball
                v = VectorField(grid17, v.values * (0.9 * R / lap_q))
            u, _ = apply_F(v, f, cfg)
            assert lq_norm(jet(u).lap, q, grid17) <= R * 1.05

    def test_exhaustion_reports_best(self, grid17, constants17):
        p, mu = 1.5, 0.05
        _, f = manufactured_problem(sinsin(0.3), p, mu, grid17, "nondivergence")
        cfg = SolverConfig(p=p, mu=mu, q=4.0, picard_tol=1e-12, picard_max_iters=3)
        u, trace = solve_fixed_point(f, cfg, constants17)
        assert not trace.converged
        assert len(trace.rows) == 3

    def test_deterministic_trace(self, grid17, constants17):
        p, mu = 1.8, 0.1
        _, f = manufactured_problem(sinsin(0.1), p, mu, grid17, "nondivergence")
        cfg = SolverConfig(p=p, mu=mu, q=4.0, picard_tol=1e-9)
        u1, t1 = solve_fixed_point(f, cfg, constants17)
        u2, t2 = solve_fixed_point(f, cfg, constants17)
        assert np.array_equal(u1.values, u2.values)
        assert t1.to_csv_text() == t2.to_csv_text()

    def test_trace_csv_columns(self, grid17, constants17):
        _, f = manufactured_problem(sinsin(0.1), 1.8, 0.1, grid17, "nondivergence")
        cfg = SolverConfig(p=1.8, mu=0.1, q=4.0, picard_tol=1e-8)
        _, trace = solve_fixed_point(f, cfg, constants17)
        header = trace.to_csv_text().splitlines()[0]
        assert header == "k,lap_norm_q,update_norm_q,theta,ball_violation"
        assert len(trace.rows) <= cfg.picard_max_iters + 1


class TestConfigValidation:
    def test_mu_zero_rejected(self, grid17):
        with pytest.raises(ConfigError):
            SolverConfig(p=1.5, mu=0.0, q=4.0).validate(grid17)

    def test_q_equal_dimension_rejected(self, grid17):
        with pytest.raises(ConfigError):
            SolverConfig(p=1.5, mu=0.1, q=2.0).validate(grid17)

    def test_p_out_of_range(self, grid17):
        for p in (1.0, 2.5, 0.5):
            with pytest.raises(ConfigError):
                SolverConfig(p=p, mu=0.1, q=4.0).validate(grid17)

    def test_inadmissible_p_rejected(self, grid17, constants17):
        # force a tiny admissible window by inflating the safety factor
        _, f = manufactured_problem(sinsin(0.1), 1.1, 0.1, grid17, "nondivergence")
        cfg = SolverConfig(p=1.1, mu=0.1, q=4.0, safety_factor=2.0)
        with pytest.raises(ConfigError):
            solve_fixed_point(f, cfg, constants17)

    def test_constants_required_below_p2(self, grid17):
        f = random_sine_field(grid17, 1, np.random.default_rng(1))
        with pytest.raises(ConfigError):
            solve_fixed_point(f, SolverConfig(p=1.5, mu=0.1, q=4.0), None)

    def test_nonconforming_start_rejected(self, grid17, constants17):
        f = random_sine_field(grid17, 1, np.random.default_rng(1))
        bad = field_from_fn(grid17, 1, lambda x, y: 1.0)
        with pytest.raises(ConfigError):
            solve_fixed_point(f, SolverConfig(p=1.5, mu=0.1, q=4.0),
                              constants17, v0=bad)


class TestVerifyApriori:
    def test_undefined_for_zero_datum(self, grid17):
        cfg = SolverConfig(p=1.5, mu=0.1, q=4.0)
        assert math.isnan(verify_apriori(zeros_field(grid17), zeros_field(grid17), cfg))
        u = random_sine_field(grid17, 1, np.random.default_rng(0))
        assert math.isnan(verify_apriori(u, zeros_field(grid17), cfg))

    def test_p2_reduces_to_poisson_ratio(self, grid17):
        f = field_from_fn(grid17, 1, lambda x, y: 2 * np.pi**2 * sinsin()(x, y))
        u, _ = solve_poisson(grid17, f, 1e-11)
        cfg = SolverConfig(p=2.0, mu=0.5, q=2.0)
        # at p = 2 the two datum norms coincide, so the ratio is the
        # classical W^{2,2}-to-datum quotient
        expected = w2q_norm(u, 2.0) / (2 * lq_norm(f, 2.0))
        assert verify_apriori(u, f, cfg) == pytest.approx(expected, rel=1e-12)
