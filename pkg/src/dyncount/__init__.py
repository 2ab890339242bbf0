"""Private continual counting on fully dynamic streams via factorization mechanisms."""

from .errors import BudgetError, DataError, DyncountError, FeasibilityError
from .factorizations import (BaryTree, FactorNorms, NaiveFactorization, SquareRootToeplitz,
                             gram_entry, norms, online_noise_stream, sqrt_coeff, tree_query_nodes)
from .mechanisms import (MechanismRun, PrivacyBudget, analytic_error, calibrate, empirical_error,
                         run_stream)
from .sensitivity import (SensQuery, SensResult, brute_force_sens, empirical_lower_estimate,
                          parity_dp_full, parity_dp_reduced, reduction_bounds, sensitivity,
                          toeplitz_sens_bound, tree_sens)
from .stream_model import (Decomposition, SetParams, decompose, enumerate_S1k, enumerate_SDk,
                           interval_sum_bound, is_alternating, is_member)

__version__ = "0.1.0"
