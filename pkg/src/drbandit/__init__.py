"""Bandit maximisation of monotone DR-submodular functions over products of
simplexes, with discrete reductions and an experiment harness."""
from .errors import (
    CapacityError,
    ConfigError,
    ContractError,
    ConvergenceError,
    DomainError,
    InvariantError,
    NumericError,
)
from .geometry import (
    LocalMetric,
    ProductSimplexBarrier,
    ProductSimplexDomain,
    analytic_center,
    barrier_gradient,
    barrier_hessian,
    barrier_value,
    make_domain,
    rftl_argmin,
)
from .sampling import RandomStream
from .objectives import LinearObjective, MultilinearPolynomial, SetFunction, coverage_function
from .learners import BanditDRSM, BanditMLSM, BanditMLSM4PS, default_params
from .environments import (
    compute_alpha_regret,
    make_oblivious_sequence,
    make_stochastic_env,
    offline_optimum_continuous,
    offline_optimum_discrete,
)
from .reductions import (
    MLSMWrapper,
    OrderedListExtension,
    OrderedListSpace,
    PartitionMatroid,
    PartitionMatroidExtension,
    run_mlsm_wrapper,
)

__version__ = "0.1.0"
