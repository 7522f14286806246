"""Sparse regularized estimation with the dual augmented Lagrangian method."""
from ._kernels import BACKEND
from .baselines import FirstOrderOptions, fista_solve, ist_solve, ist_step
from .dal import DalOptions, InnerOptions, solve
from .data import Dataset, lambda_from_bar, load_dataset, synth, write_libsvm
from .design import DenseOperator, SparseOperator, as_operator, standardize
from .diagnostics import (Trace, TraceRecord, check_bounds, estimate_sigma, rdg,
                          reference_solution)
from .errors import ContractViolation, DomainError, InputError, NonConvergenceError
from .losses import LogisticLoss, SechLoss, SquaredLoss, make_loss
from .problem import Problem
from .prox import ElasticNet, GroupLasso, L1, SupportFunction, TraceNorm, WeightedL1

__version__ = "0.1.0"
