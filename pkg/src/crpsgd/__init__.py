"""Communication-reduced parallel SGD on a simulated worker pool."""

from .algorithms import (
    CatalystConfig,
    CrPsgdConfig,
    cr_psgd,
    cr_psgd_catalyst,
    local_sgd_baseline,
    psgd_baseline,
    sweep_local_h,
)
from .errors import (
    ConfigurationError,
    DegenerateProblemError,
    DegenerateRunWarning,
    InsufficientDataError,
    StreamReuseError,
    RateConditionWarning,
)
from .executor import Counters, WorkerPool, aggregate, parallel_batch_averages
from .objectives import (
    AdditiveGaussianOracle,
    CosineNonconvex,
    LogisticOracle,
    LogisticProblem,
    ProximalObjective,
    ProximalOracle,
    QuadraticPL,
    generate_logistic_instance,
    isotropic_quadratic,
    proximal_oracle_factory,
)
from .rng import RngStream
from .schedule import BatchSchedule, ConstantSchedule, batch_size, num_rounds, rate_constants
from .trace import RunTrace, TraceRow

__version__ = "0.1.0"
