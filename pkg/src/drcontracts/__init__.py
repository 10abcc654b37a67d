"""Incentive-based demand-response contract sizing and settlement.

The package covers the full workflow for a retailer offering curtailment
contracts against uncertain customer capability:

* :mod:`drcontracts.program` — program terms (rates, event probability,
  risk aversion) and realized settlement cash flows.
* :mod:`drcontracts.distributions` — empirical and normal capability
  models with the partial-expectation machinery the pricing formulas need.
* :mod:`drcontracts.contracts` — critical-fractile contract sizing,
  tail-risk valuation, and the supporting sensitivity analysis.
* :mod:`drcontracts.estimation` — capability estimation from metered
  load via end-use decomposition and calendar bucketing.
* :mod:`drcontracts.aggregation` — multi-asset aggregation and partner
  ranking by complementarity.
* :mod:`drcontracts.simulation` — counter-based Monte Carlo settlement
  with analytic cross-checks.
* :mod:`drcontracts.cli` — the ``drcontracts`` command-line pipeline.
"""

from .aggregation import (
    AggregationReport,
    AssetPortfolio,
    ComparisonVerdict,
    PartnerRank,
    aggregate_distribution,
    aggregation_contract,
    bracket_factor,
    build_report,
    complementarity,
    contract_comparison,
    member_contracts,
    member_sigmas,
    profit_delta_from_sigmas,
    profit_delta_normal,
    profit_delta_oracle,
    rank_partners,
    write_ranking_csv,
)
from .contracts import (
    ContractDecision,
    ProfitAudit,
    SigmaSensitivity,
    alpha_sweep,
    alpha_threshold,
    cvar,
    expected_profit,
    gamma,
    gamma_hat,
    grid_search_optimal,
    objective,
    optimal_contract,
    optimal_profit_formula,
    quantile_argument,
    sigma_coefficient,
    sigma_sensitivity,
)
from .distributions import (
    ClippedMassWarning,
    CovarianceModel,
    EmpiricalDistribution,
    NormalDistribution,
    distribution_from_json,
    distribution_to_json,
    fit_normal,
    kolmogorov_distance,
    restrict_to_common,
    sum_empirical,
    sum_normal,
)
from .errors import (
    AlignmentError,
    DrContractsError,
    IllPosedProgramError,
    InputFormatError,
    ModelConsistencyError,
    UnconstrainedContractError,
)
from .estimation import (
    BucketKey,
    BuildingModel,
    BucketModel,
    CapabilityModel,
    CurtailableSeries,
    EndUseShapes,
    EstimationConfig,
    LoadRecord,
    bucket,
    build_capability_model,
    curtailable_series,
    decompose_load,
    read_load_csv,
    read_shapes_csv,
)
from .nnls import nnls
from .program import (
    DEFAULT_CVAR_LEVEL,
    DEFAULT_EVENT_PROBABILITY,
    ProgramTerms,
    realized_curtailment,
    realized_profit,
)
from .simulation import (
    CvarEstimate,
    SimulationConfig,
    SimulationResult,
    analytic_summary,
    convergence_rows,
    empirical_cvar,
    simulate_horizon,
    write_profits_csv,
)
from ._kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = [
    "AggregationReport",
    "AlignmentError",
    "AssetPortfolio",
    "BucketKey",
    "BucketModel",
    "BuildingModel",
    "CapabilityModel",
    "ClippedMassWarning",
    "ComparisonVerdict",
    "ContractDecision",
    "CovarianceModel",
    "CurtailableSeries",
    "CvarEstimate",
    "DEFAULT_CVAR_LEVEL",
    "DEFAULT_EVENT_PROBABILITY",
    "DrContractsError",
    "EmpiricalDistribution",
    "EndUseShapes",
    "EstimationConfig",
    "IllPosedProgramError",
    "InputFormatError",
    "KERNEL_BACKEND",
    "LoadRecord",
    "ModelConsistencyError",
    "NormalDistribution",
    "PartnerRank",
    "ProfitAudit",
    "ProgramTerms",
    "SigmaSensitivity",
    "SimulationConfig",
    "SimulationResult",
    "UnconstrainedContractError",
    "aggregate_distribution",
    "aggregation_contract",
    "alpha_sweep",
    "alpha_threshold",
    "analytic_summary",
    "bracket_factor",
    "bucket",
    "build_capability_model",
    "build_report",
    "complementarity",
    "contract_comparison",
    "convergence_rows",
    "curtailable_series",
    "cvar",
    "decompose_load",
    "distribution_from_json",
    "distribution_to_json",
    "empirical_cvar",
    "expected_profit",
    "fit_normal",
    "gamma",
    "gamma_hat",
    "grid_search_optimal",
    "kolmogorov_distance",
    "member_contracts",
    "member_sigmas",
    "nnls",
    "objective",
    "optimal_contract",
    "optimal_profit_formula",
    "profit_delta_from_sigmas",
    "profit_delta_normal",
    "profit_delta_oracle",
    "quantile_argument",
    "rank_partners",
    "read_load_csv",
    "read_shapes_csv",
    "realized_curtailment",
    "realized_profit",
    "restrict_to_common",
    "sigma_coefficient",
    "sigma_sensitivity",
    "simulate_horizon",
    "sum_empirical",
    "sum_normal",
    "write_profits_csv",
    "write_ranking_csv",
]
