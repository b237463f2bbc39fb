"""Maximal branching processes in deterministic and random environments."""

from .laws import (
    EULER_GAMMA,
    Degenerate,
    Deterministic,
    Empirical,
    EmpiricalEnv,
    EmpiricalService,
    EnvironmentLaw,
    Exponential,
    ExponentialEnv,
    Frechet,
    GumbelShifted,
    HeavyLogTail,
    IntegerTail,
    NumericsError,
    OffspringLaw,
    Pareto,
    QueueInduced,
    ServiceLaw,
    StrictlyStable,
    UnitFrechet,
)
from .process import (
    MBP_CONTINUOUS,
    MBP_INTEGER,
    MBPPLRE,
    MBPRE_INTEGER,
    ProcessSpec,
    SimulationError,
    Trajectory,
    UnsupportedTransformError,
    simulate,
    simulate_batch,
    step_autoregression,
    step_frechet_multiplicative,
    step_mbp_continuous,
    step_mbp_integer,
    step_mbpplre,
    step_mbpre_integer,
)
from .analysis import (
    PI2_OVER_12,
    Classification,
    DriftReport,
    TailFunctionals,
    classify,
    compute_delta,
    delta_infinite_series_check,
    drift_probe,
    stationary_moment_frechet_stable,
    tail_functionals,
)
from .couplings import (
    CoupledPair,
    CouplingViolationError,
    OrderCertificateError,
    StationaryEstimate,
    association_test,
    coupled_monotone_paths,
    coupled_parameter_paths,
    degeneracy_experiment,
    estimate_stationary,
    ks_two_sample,
    scaling_transport,
    stationary_order_check,
)
from .gated_queue import (
    GatedQueueConfig,
    StageRecord,
    induced_offspring_law,
    queue_performance_report,
    queue_vs_mbp_equivalence,
    simulate_gated_queue,
)

__version__ = "0.1.0"
