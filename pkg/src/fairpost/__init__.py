"""Federated training with LP-based fairness post-processing.

Train a global classifier with federated averaging over community shards,
summarize its joint error behaviour per (sensitive, community) group, then
solve an explicit linear program for a randomized prediction-flipping policy
that equalizes opportunity across sensitive groups and error rates across
communities — exactly, or within chosen slack — while giving up as little
accuracy as possible.  The expected accuracy cost is read directly off the
program, before any data is touched.
"""

from .analysis import (
    EqualizabilityBound,
    FairnessReport,
    LocalFairnessGap,
    MulticlassReport,
    accuracy_loss,
    analytic_report,
    empirical_report,
    equalizability_bound,
    evaluate,
    evaluate_multiclass,
    local_fairness_gap,
    smallest_singular_value,
)
from .data import (
    DatasetSchema,
    DatasetSplit,
    PartitionRule,
    Predicate,
    ScenarioSpec,
    assign_community,
    census_partition_rules,
    census_schema,
    generate_census_csv,
    generate_multiclass_records,
    load_csv,
    partition_by_rule,
    split_records,
    synthesize_scenario,
)
from .errors import (
    BundleMismatch,
    ConfigError,
    DataError,
    FairpostError,
    MissingArtifact,
    NegativeRelaxation,
    NumericalFailure,
    SingularityFailure,
    SolverError,
)
from .fl import (
    FlConfig,
    FlModel,
    TrainingTrace,
    aggregate,
    fedavg,
    init_model,
    local_train,
    predict,
    predict_scores,
)
from .lp import (
    LpProblem,
    MulticlassLp,
    StandardLp,
    build_multiclass_lp,
    build_relaxed_lp,
    build_strict_lp,
    read_lp,
    to_standard_form,
    write_lp,
)
from .policy import (
    FairPolicy,
    MulticlassPolicy,
    RngStream,
    apply_policy,
    apply_policy_multiclass,
    fair_decide,
    fair_decide_multiclass,
    policy_from_solution,
    read_policy,
    write_policy,
)
from .solver import LpSolution, SolveStatus, feasibility_check, solve
from .stats import (
    GroupStatistics,
    MulticlassStats,
    Record,
    estimate_community_weights,
    estimate_joint_statistics,
    estimate_multiclass_statistics,
)

__version__ = "0.1.0"

__all__ = [
    "BundleMismatch",
    "ConfigError",
    "DataError",
    "DatasetSchema",
    "DatasetSplit",
    "EqualizabilityBound",
    "FairPolicy",
    "FairnessReport",
    "FairpostError",
    "FlConfig",
    "FlModel",
    "GroupStatistics",
    "LocalFairnessGap",
    "LpProblem",
    "LpSolution",
    "MissingArtifact",
    "MulticlassLp",
    "MulticlassPolicy",
    "MulticlassReport",
    "MulticlassStats",
    "NegativeRelaxation",
    "NumericalFailure",
    "PartitionRule",
    "Predicate",
    "Record",
    "RngStream",
    "ScenarioSpec",
    "SingularityFailure",
    "SolveStatus",
    "SolverError",
    "StandardLp",
    "TrainingTrace",
    "accuracy_loss",
    "aggregate",
    "analytic_report",
    "apply_policy",
    "apply_policy_multiclass",
    "assign_community",
    "build_multiclass_lp",
    "build_relaxed_lp",
    "build_strict_lp",
    "census_partition_rules",
    "census_schema",
    "empirical_report",
    "equalizability_bound",
    "estimate_community_weights",
    "estimate_joint_statistics",
    "estimate_multiclass_statistics",
    "evaluate",
    "evaluate_multiclass",
    "fair_decide",
    "fair_decide_multiclass",
    "feasibility_check",
    "fedavg",
    "generate_census_csv",
    "generate_multiclass_records",
    "init_model",
    "load_csv",
    "local_fairness_gap",
    "local_train",
    "partition_by_rule",
    "policy_from_solution",
    "predict",
    "predict_scores",
    "read_lp",
    "read_policy",
    "smallest_singular_value",
    "solve",
    "split_records",
    "synthesize_scenario",
    "to_standard_form",
    "write_lp",
    "write_policy",
]
