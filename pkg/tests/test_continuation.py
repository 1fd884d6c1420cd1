import numpy as np
import pytest

from plaplab import (
    ConfigError,
    SolverConfig,
    VectorField,
    estimate_constants,
    field_from_fn,
    lq_norm,
    run_continuation,
    solve_poisson,
    zeros_field,
)
from plaplab.oracle import manufactured_problem

from conftest import sinsin


@pytest.fixture(scope="module")
def constants17(grid17):
    return estimate_constants(grid17, [4.0], samples=8, ascent_steps=2, seed=3)


class TestRunContinuation:
    def test_p2_mu_drops_out(self, grid17):
        f = field_from_fn(grid17, 1, lambda x, y: 2 * np.pi**2 * sinsin()(x, y))
        up, _ = solve_poisson(grid17, f, 1e-12)
        cfg = SolverConfig(p=2.0, mu=0.5, q=4.0, picard_tol=1e-10)
        rep = run_continuation(f, cfg, [0.5, 0.1, 0.01], None, oracle_tol=1e-10)
        assert rep.oracle_converged
        assert all(r.converged for r in rep.rows)
        # every solve is the same linear problem; distances to the oracle
        # stay at combined solver tolerances
        assert all(r.w1p_dist <= 1e-6 for r in rep.rows)
        assert rep.monotone_envelope_ok

    def test_zero_datum(self, grid17, constants17):
        cfg = SolverConfig(p=1.6, mu=0.5, q=4.0, picard_tol=1e-9)
        rep = run_continuation(zeros_field(grid17), cfg, [0.1, 0.01], constants17,
                               oracle_tol=1e-9)
        assert all(r.w2q_norm == 0.0 for r in rep.rows)
        assert all(np.isnan(r.lap_ratio_to_R) for r in rep.rows)
        assert rep.monotone_envelope_ok

    def test_manufactured_approach_to_oracle(self, grid17, constants17):
        p = 1.8
        ue, f = manufactured_problem(sinsin(0.05), p, 0.0, grid17, "variational")
        cfg = SolverConfig(p=p, mu=0.5, q=4.0, picard_tol=1e-8, picard_max_iters=200)
        rep = run_continuation(f, cfg, [1e-1, 1e-2, 1e-3, 1e-4], constants17,
                               oracle_tol=1e-6)
        assert rep.oracle_converged
        assert all(r.converged for r in rep.rows)
        dists = [r.w1p_dist for r in rep.rows]
        assert dists[-1] < dists[0] / 2
        assert rep.monotone_envelope_ok
        norms = [r.w2q_norm for r in rep.rows]
        assert max(norms) / min(norms) <= 1.5
        # the mu = 0 weak residual decays along the schedule, up to the
        # cross-discretization floor
        weak = [r.weak_residual for r in rep.rows]
        assert weak[-1] <= weak[0]

    def test_warm_start_iteration_bound(self, grid17, constants17):
        p = 1.8
        _, f = manufactured_problem(sinsin(0.05), p, 0.1, grid17, "nondivergence")
        cfg = SolverConfig(p=p, mu=0.5, q=4.0, picard_tol=1e-8)
        rep = run_continuation(f, cfg, [1e-1, 1e-2], constants17, oracle_tol=1e-6)
        from plaplab import solve_fixed_point
        from dataclasses import replace

        cold_iters = []
        for mu in (1e-1, 1e-2):
            _, tr = solve_fixed_point(f, replace(cfg, mu=mu), constants17)
            cold_iters.append(len(tr.rows))
        warm_iters = [r.iters for r in rep.rows]
        # advisory performance property: warm starts at most double the work
        assert sum(warm_iters) <= 2 * sum(cold_iters)

    def test_schedule_validation(self, grid17, constants17):
        f = zeros_field(grid17)
        cfg = SolverConfig(p=1.6, mu=0.5, q=4.0)
        with pytest.raises(ConfigError):
            run_continuation(f, cfg, [], constants17, oracle_tol=1e-6)
        with pytest.raises(ConfigError):
            run_continuation(f, cfg, [0.01, 0.1], constants17, oracle_tol=1e-6)
        with pytest.raises(ConfigError):
            run_continuation(f, cfg, [2.0, 0.1], constants17, oracle_tol=1e-6)
        with pytest.raises(ConfigError):
            run_continuation(f, cfg, [0.1, 0.0], constants17, oracle_tol=1e-6)

    def test_csv_columns(self, grid17, constants17):
        cfg = SolverConfig(p=1.8, mu=0.5, q=4.0, picard_tol=1e-8)
        _, f = manufactured_problem(sinsin(0.05), 1.8, 0.1, grid17, "nondivergence")
        rep = run_continuation(f, cfg, [0.1, 0.01], constants17, oracle_tol=1e-6)
        lines = rep.to_csv_text().strip().splitlines()
        assert lines[0] == "mu,w2q_norm,w1p_dist,weak_residual,iters,converged"
        assert len(lines) == 3
