"""cmalab: desk-scale verification of interior Monge-Ampere regularity machinery."""

from .exponents import (ExponentParams, MuWindow, beta0, delta_sequence,
                        epsilon_interp, feasibility_threshold, mu_window,
                        params_with_mu, phi, plan_exponents, variant_threshold)
from .field import (BallDomain, CatalogEntry, GridField, ball_field, box_field,
                    complex_hessian, load_field, ma_determinant, save_field,
                    test_solution, third_derivatives)
from .mollify import Kernel, make_kernel, mollify, mollify_at, smoothness_report
from .norms import DecayFit, SeminormSpec, fit_decay_rate, holder_seminorm, weighted_f_norm
from .solver import (DirichletProblem, NewtonOpts, RhsModel, SolveReport,
                     comparison_check, solve_cma, solve_dirichlet, solve_poisson)
from .cascade import (CascadeConfig, CascadeReport, build_auxiliary,
                      cross_center_compare, gradient_telescope, rescaled_profiles,
                      run_cascade, verify_sandwich)
from .calabi import (HessianBounds, compute_S, prop24_bound, theorem61_ledger)

__version__ = "0.1.0"
