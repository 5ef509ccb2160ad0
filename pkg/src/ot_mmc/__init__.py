"""Entropic solvers for optimal transport and minimum mean cycle.

Sinkhorn matrix scaling solves entropic OT, Osborne matrix balancing solves
entropic minimum mean cycle; exact oracles (assignment expansion, Karp's
dynamic program, brute-force enumeration) check both.
"""

from .core import (
    Cycle,
    DualPotentials,
    NumericalError,
    SolveReport,
    TraceRecord,
    col_marginals,
    entropy,
    hellinger_imbalance,
    kl_divergence,
    row_marginals,
    transport_cost,
)
from .estimators import EntropicOT, MinimumMeanCycle, OsborneBalancer, SinkhornScaler
from .kernel import LogScaledMatrix, dual_objective, log_marginals, materialize, softmin
from .oracles import brute_force_mmc, exact_ot, karp_mmc, random_feasible_coupling
from .osborne import (
    OsborneConfig,
    choose_coordinate,
    decompose_circulation,
    extract_cycle_greedy,
    mmc_lower_bound,
    osborne_update,
    run_osborne,
    solve_mmc,
)
from .sinkhorn import (
    SinkhornConfig,
    round_to_coupling,
    run_sinkhorn,
    sinkhorn_col_step,
    sinkhorn_row_step,
    solve_ot,
)

__version__ = "0.1.0"

__all__ = [
    "Cycle", "DualPotentials", "NumericalError", "SolveReport", "TraceRecord",
    "col_marginals", "entropy", "hellinger_imbalance", "kl_divergence",
    "row_marginals", "transport_cost",
    "EntropicOT", "MinimumMeanCycle", "OsborneBalancer", "SinkhornScaler",
    "LogScaledMatrix", "dual_objective", "log_marginals", "materialize", "softmin",
    "brute_force_mmc", "exact_ot", "karp_mmc", "random_feasible_coupling",
    "OsborneConfig", "choose_coordinate", "decompose_circulation",
    "extract_cycle_greedy", "mmc_lower_bound", "osborne_update", "run_osborne",
    "solve_mmc",
    "SinkhornConfig", "round_to_coupling", "run_sinkhorn", "sinkhorn_col_step",
    "sinkhorn_row_step", "solve_ot",
]
