"""Tests of H0: Sigma = I for high-dimensional data.

The centerpiece is a likelihood-ratio statistic evaluated on a linearly
shrunken sample covariance, calibrated by its Gaussian limit as p/n tends to
a constant below one, together with three reference tests and a reproducible
Monte Carlo engine for size/power experiments.
"""

__version__ = "0.1.0"

from .covariance import (
    DataMatrix,
    SampleCovariance,
    ShrunkenCovariance,
    sample_covariance,
    shrink,
    sym_eigenvalues,
)
from .errors import (
    CloseSpikeError,
    DomainError,
    NumericError,
    RegimeError,
    SingularCovarianceError,
)
from .montecarlo import (
    CellResult,
    Method,
    Scenario,
    SimulationGrid,
    StatSample,
    empirical_density,
    empirical_power_curve,
    materialize_sigma,
    run_grid,
    sample_mvn,
    simulate_statistics,
)
from .rmt import (
    DimensionSetup,
    MnRoots,
    MpLaw,
    NullAsymptotics,
    ShrinkageParams,
    SpikedModel,
    analytic_power_cs,
    centering_integral,
    cs_spike_constant,
    mn_roots,
    mp_density,
    mp_expectation,
    mp_support,
    null_asymptotics,
    null_mean,
    null_variance,
    spike_constant,
    spike_phi,
    spiked_centering,
)
from .testing import (
    TestResult,
    chen_statistic_bruteforce,
    chen_test,
    clrt_test,
    empirical_critical_value,
    lw_test,
    rlrt_statistic,
    rlrt_test,
)

__all__ = [name for name in dir() if not name.startswith("_")]
