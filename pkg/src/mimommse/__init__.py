"""Mutual information of MMSE receivers on correlated MIMO channels.

Large-system approximations, Monte Carlo estimates and precoder
optimization for Kronecker-correlated Rayleigh channels.
"""

from .channel import ChannelModel, ClusterSpec, clustered_correlation, effective_transmit_correlation
from .errors import (
    ConstraintError,
    ConvergenceError,
    DefinitenessError,
    DegeneratePointError,
    DimensionError,
    DomainError,
    MimoMmseError,
    NumericalError,
    RankDeficiencyError,
    StabilityError,
)
from .largesys import ApproxReport, FixedPointSolution, grad_lambda, i_bar, i_hat, j_bar, solve_fixed_point
from .mcsim import McEstimate, emi_estimate
from .optimize import (
    OptimResult,
    PGOptions,
    antenna_selection_iid,
    multistart,
    optimize_true_emi,
    structured_objective,
    projected_gradient,
)

__version__ = "0.1.0"
