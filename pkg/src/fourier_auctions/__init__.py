"""Fourier analysis of set functions and its use in combinatorial auctions."""

__version__ = "0.1.0"

from .core import Allocation, AuctionResult, CapacityError, InvalidInstanceError, ReportSet, TableValuation, efficiency
from .fourier import SparseSpectrum, TransformKind, energy_by_cardinality, forward, inverse, select_best_k
from .mechanisms import HybridConfig, MlcaConfig, run_hybrid_ica, run_mlca, vcg_payments, wht_allocation_rule
from .milp import build_ft_wdp, build_nn_wdp, build_reported_wdp, exhaustive_wdp, solve, solve_wdp
from .recovery import FitConfig, SupportSuperset, discover_support, fit_sparse, fit_wht_lasso, reconstruction_queries
from .surrogate import MlpNetwork, TrainConfig, fit_mlp, gradient_check
from .valuemodels import InstanceSpec, generate, true_optimum
