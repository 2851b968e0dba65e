"""Random-exchange market simulator and mean-field solvers for economies
with heavy-tailed wealth."""

__version__ = "0.1.0"

from ._kernels import BACKEND, HAS_NUMBA
from .errors import (
    ConfigurationError,
    DegenerateInputError,
    EnumerationCapError,
    FitDomainError,
    PackingError,
    ParameterError,
    ParetoMarketError,
    RegimeError,
    SolverError,
)
from .wealth import (
    ShareTable,
    StaircaseSpec,
    WealthVector,
    adjust_to_expected_mean,
    build_staircase,
    fit_pareto_exponent,
    gini,
    pareto_inverse_cdf,
    sample_pareto,
)
from .market import (
    GoodsSpec,
    MarketState,
    TradeOutcome,
    build_goods,
    economy_digest,
    initial_allocation,
    is_feasible,
    parse_price_ratio,
    quantize_wealth,
    trade_step,
)
from .oracle import (
    ExactOracleResult,
    enumerate_feasible_allocations,
    exact_stationary_success_rates,
    rate_symmetry_violation,
    transition_kernel,
)
from .simulate import (
    EconomyTemplate,
    Observables,
    SimConfig,
    SweepResult,
    SweepRow,
    aggregate_liquidity,
    detect_stationarity,
    measure_visitation,
    run_simulation,
    sweep_beta,
)
from .analytic import (
    ClassThresholds,
    SelfConsistentSolution,
    closed_form_c1_ps,
    mode_z,
    recurrence_ck,
    solve_multi_class_fixed_point,
    solve_single_class,
    threshold_probability,
    truncated_poisson_marginal,
    truncated_poisson_mean,
)
