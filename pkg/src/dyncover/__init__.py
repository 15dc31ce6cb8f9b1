"""Exact solvers for dynamic maximum covering location problems."""

from .model import (
    Budget,
    Cardinality,
    CoverageCount,
    DomainSpec,
    Instance,
    Knapsack,
    Linear,
    Persistence,
    Precedence,
    Solution,
    UserRecord,
    check_domain,
    coverage,
    coverage_counts,
    fractional_coverage,
    fractional_coverage_counts,
    overlap_instance,
)
from .preprocess import (
    PreprocessReport,
    aggregate_users,
    drop_precovered,
    drop_uncoverable,
    singles_set,
)
from .milp import (
    CandidateEvent,
    LpModel,
    LpSolution,
    MilpOptions,
    MilpResult,
    SolveResult,
    add_rows_during_solve,
    solve_lp,
    solve_milp,
)
from .benders import (
    CorePoint,
    Cut,
    DualInspection,
    GammaVariant,
    PartialBendersPlan,
    evaluate_cut,
    gamma_set,
    multi_cuts,
    pareto_dual,
    partial_plan,
    single_cut,
    solve_abbc,
    solve_bc,
    solve_greedy,
    solve_ubbc,
    update_core_point,
)
from .bdd import LspSolution, candidate_multipliers, lsp1, lsp2, strengthened_cut
from .localbranching import (
    LbConfig,
    LbState,
    NeighborhoodMove,
    SepDBlock,
    build_restricted_reformulation,
    enumerate_moves,
    hamming_distance,
    per_period_distance,
    sepb_branch_problems,
    sepd_block,
    solve_diversified,
    solve_lb,
    solve_restricted,
)
from .greedy import greedy_warmstart
from .oracle import enumerate_neighborhood_optimum, enumerate_optimum
from .io import (
    GeneratorParams,
    generate_instance,
    parse_instance,
    result_csv_header,
    write_instance,
    write_result,
)

__version__ = "0.1.0"
