"""Gradient-informed subspace Bayesian optimization toolkit."""

from .acquisition import (AcquisitionSpec, expected_improvement, select_next,
                          ucb_quantile, ucb_sampling)
from .benchmarks import Problem, make, make_embedded, make_shifted
from .core import (IterationRecord, ObservationSet, PosteriorBatch, RunTrace,
                   SearchDomain, denormalize, normalize)
from .optimizer import (RunConfig, build_surrogate, run_gisbo, run_plain_bo,
                        run_random_search)
from .sampling import SampleBatch, lhs, sobol, uniform_cube
from .stats import (friedman_test, holm_correct, rank_table, regret_trace,
                    wilcoxon_signed_rank)
from .subspace import (FisherMatrix, GiSubspace, RSelectionPolicy, centroid,
                       fisher_matrix, identify_subspace, project_candidates,
                       select_r, top_eigvecs)
from .surrogate import (GpState, GpSurrogate, GpTheta, SurrogateContract,
                        build_state, finite_difference_mean_grad, fit,
                        log_marginal_likelihood, mean_grad, predict)

__version__ = "0.1.0"
