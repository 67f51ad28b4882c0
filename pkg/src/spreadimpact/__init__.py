"""Long-run optimal rebalancing under a bid-ask spread and linear price impact.

The package solves the free-boundary problem characterizing the optimal
policy exactly (``solve``), evaluates its small-cost expansion
(``find_z_minus``/``asymptotic_policy``), and cross-validates both by Monte
Carlo simulation of the controlled wealth dynamics (``simulate_paths``/
``estimate_esr``).
"""

from .asymptotic import (
    AsymptoticInputs,
    AsymptoticSolution,
    NoRootError,
    asymptotic_policy,
    find_z_minus,
    midfield_r,
    near_boundary_slope,
    r_buy,
    welfare_coefficient,
)
from .market import (
    AllocationRegime,
    FrictionlessBaseline,
    MarketParams,
    ParameterError,
    baseline,
    buy_and_hold_esr,
    degenerate_regime,
    validate,
)
from .montecarlo import (
    PathEnsemble,
    SimConfig,
    SimulationReport,
    estimate_esr,
    simulate_paths,
)
from .solver import (
    BlowUpEvent,
    FreeBoundarySolution,
    NoMatchError,
    NumericalFailure,
    ShootOutcome,
    SolverOptions,
    TradingPolicy,
    policy,
    shoot_backward,
    shoot_forward,
    solve,
)

__version__ = "0.1.0"

__all__ = [
    "AllocationRegime",
    "AsymptoticInputs",
    "AsymptoticSolution",
    "BlowUpEvent",
    "FreeBoundarySolution",
    "FrictionlessBaseline",
    "MarketParams",
    "NoMatchError",
    "NoRootError",
    "NumericalFailure",
    "ParameterError",
    "PathEnsemble",
    "ShootOutcome",
    "SimConfig",
    "SimulationReport",
    "SolverOptions",
    "TradingPolicy",
    "asymptotic_policy",
    "baseline",
    "buy_and_hold_esr",
    "degenerate_regime",
    "estimate_esr",
    "find_z_minus",
    "midfield_r",
    "near_boundary_slope",
    "policy",
    "r_buy",
    "shoot_backward",
    "shoot_forward",
    "simulate_paths",
    "solve",
    "validate",
    "welfare_coefficient",
]
