"""plaplab: solver and verification lab for regularized p-Laplacian N-systems.

A finite-difference laboratory for the Dirichlet problem of vector-valued
p-Laplacian-type systems with flux (mu + |grad u|)^{p-2} grad u, 1 < p <= 2,
mu >= 0, on axis-aligned boxes in 2 or 3 dimensions.  It provides a
linearized fixed-point solver for the nondivergence form, an independent
convex-energy oracle valid down to mu = 0, empirical estimation of the
elliptic constants entering the admissibility condition, randomized checks
of every pointwise inequality the construction relies on, and a vanishing-mu
continuation driver.
"""

from .calculus import Jet, cubic_term, holder_seminorm, jet, lq_norm, w2q_norm
from .continuation import ContinuationReport, ContinuationRow, run_continuation
from .grid import (
    Grid,
    VectorField,
    enforce_dirichlet,
    field_from_fn,
    load_field,
    make_grid,
    random_sine_field,
    save_field,
    zeros_field,
)
from .inequalities import (
    InequalitySweep,
    check_appendix,
    check_mu_bounds,
    check_tensor_lipschitz,
    check_young_type,
)
from .linear_elliptic import (
    ConstantsReport,
    PoissonSolveReport,
    estimate_c1,
    estimate_c2,
    estimate_c3,
    estimate_constants,
    solve_poisson,
)
from .nonlinear import (
    ConfigError,
    IterationTrace,
    SolverConfig,
    admissible_p_min,
    apply_F,
    ball_radius,
    compute_a,
    r_of_q,
    solve_fixed_point,
    verify_apriori,
)
from .oracle import (
    EnergyReport,
    energy,
    energy_gradient,
    manufactured_problem,
    minimize,
    weak_residual,
)

__version__ = "0.1.0"
