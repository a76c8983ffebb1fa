"""Polya-Gamma EM and parameter-expanded ECME solvers for weighted, penalized logistic regression."""

from .bench import (BenchConfig, builtin_table1, gen_ar1, gen_exp_weights, load_csv,
                    make_penalty, run_benchmark, write_dataset_csv)
from .coordinate import CDConfig, CDState, cd_solve, kkt_check
from .diagnostics import JacobianReport, SeparationError, spectral_radius, verify_rate_ordering
from .missing import (MissingDataset, e_step, enumerate_consistent, m_step,
                      observed_loglik_missing, px_solve_missing)
from .model import (Dataset, LinkQuantities, grad_loglik, link_quantities, nr_weight,
                    penalized_loglik, pg_weight, weighted_loglik)
from .numerics import (LinearSolveError, PowerIterationError, RaySearchConfig,
                       max_eigenvalue, ray_maximize, solve_spd)
from .penalties import Penalty, scalar_quadratic_penalized_min
from .solvers import (SOLVER_KINDS, AA1State, SolveResult, SolverConfig, TraceRow,
                      aa1_step, em_step, gd_backtrack_step, gd_step, gpx_ecme_pgd_step,
                      mm_step, newton_step, px_ecme_step, px_mm_step, run)

__version__ = "0.1.0"
