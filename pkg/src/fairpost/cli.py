"""Experiment runner: train federate, collect statistics, solve the fairness
program, post-process, and report.

The config is a single JSON file (grammar documented in the README); its
canonical form — sorted keys, no whitespace — is hashed, and the hash plus the
seed name the result-bundle directory and are stamped into every artifact.
Exit codes: 0 success, 2 config error, 3 data error, 4 solver failure.
"""

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import analysis, data, fl, lp, policy as policy_mod, report as report_mod, solver, stats as stats_mod
from .errors import (
    BundleMismatch,
    ConfigError,
    DataError,
    MissingArtifact,
    NegativeRelaxation,
    NumericalFailure,
    SolverError,
)

_DECISION_STREAM_BASE = 700  # + grid index -> one policy-sampling stream per point


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    seed: int
    output_dir: str
    dataset_path: str
    schema: data.DatasetSchema
    rules: Optional[List[data.PartitionRule]]
    scenario: Optional[data.ScenarioSpec]
    fl_config: fl.FlConfig
    grid: List[Tuple[float, float]]

    def to_json_dict(self) -> Dict[str, object]:
        out: Dict[str, object] = {
            "seed": self.seed,
            "output_dir": self.output_dir,
            "dataset": {"path": self.dataset_path, "schema": self.schema.to_json_dict()},
            "fl": self.fl_config.to_json_dict(),
            "fairness": {"grid": [[e, d] for e, d in self.grid]},
        }
        if self.rules is not None:
            out["partition"] = {"rules": [[p.to_json_dict() for p in rule] for rule in self.rules]}
        if self.scenario is not None:
            out["scenario"] = self.scenario.to_json_dict()
        return out

    def canonical_form(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_form().encode()).hexdigest()[:12]


def parse_config(raw: Dict[str, object], base_dir: Optional[Path] = None) -> ExperimentConfig:
    """Validate a parsed config dict.  Paths resolve relative to ``base_dir``."""
    try:
        seed = int(raw["seed"])
        dataset = raw["dataset"]
        dataset_path = str(dataset["path"])
        schema = data.DatasetSchema.from_json_dict(dataset["schema"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from None
    if seed < 0:
        raise ConfigError("seed must be nonnegative")
    if base_dir is not None and not Path(dataset_path).is_absolute():
        dataset_path = str(base_dir / dataset_path)

    has_partition = "partition" in raw and raw["partition"] is not None
    has_scenario = "scenario" in raw and raw["scenario"] is not None
    if has_partition == has_scenario:
        raise ConfigError("config needs exactly one of 'partition' or 'scenario'")
    rules = None
    scenario = None
    if has_partition:
        try:
            rules = [
                tuple(data.Predicate.from_json_dict(p) for p in rule)
                for rule in raw["partition"]["rules"]
            ]
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"invalid partition rules: {exc}") from None
        if not rules:
            raise ConfigError("partition rules must be non-empty")
    else:
        try:
            scenario = data.ScenarioSpec.from_json_dict(raw["scenario"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid scenario: {exc}") from None

    fl_raw = dict(raw.get("fl", {}))
    fl_raw["seed"] = seed  # all randomness flows from the one top-level seed
    try:
        fl_config = fl.FlConfig.from_json_dict(fl_raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid fl block: {exc}") from None

    fairness = raw.get("fairness", {"eps": 0.0, "delta": 0.0})
    if "grid" in fairness and ("eps" in fairness or "delta" in fairness):
        raise ConfigError("fairness block takes either eps/delta or grid, not both")
    if "grid" in fairness:
        try:
            grid = [(float(e), float(d)) for e, d in fairness["grid"]]
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid fairness grid: {exc}") from None
    else:
        try:
            grid = [(float(fairness.get("eps", 0.0)), float(fairness.get("delta", 0.0)))]
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid fairness block: {exc}") from None
    if not grid:
        raise ConfigError("fairness grid must be non-empty")
    for e, d in grid:
        if e < 0 or d < 0:
            raise NegativeRelaxation(e, d)

    return ExperimentConfig(
        seed=seed,
        output_dir=str(raw.get("output_dir", "results")),
        dataset_path=dataset_path,
        schema=schema,
        rules=rules,
        scenario=scenario,
        fl_config=fl_config,
        grid=grid,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    cfg = parse_config(raw, base_dir=path.parent)
    if "output_dir" in raw and not Path(cfg.output_dir).is_absolute():
        cfg = replace(cfg, output_dir=str(path.parent / cfg.output_dir))
    return cfg


# ---------------------------------------------------------------------------
# bundle I/O helpers
# ---------------------------------------------------------------------------

def _write_json(path: Path, payload: Dict[str, object], config_hash: str, seed: int) -> None:
    body = {"config_hash": config_hash, "seed": seed}
    body.update(payload)
    path.write_text(json.dumps(body, sort_keys=True, indent=1) + "\n")


def _read_json(path: Path) -> Dict[str, object]:
    if not path.exists():
        raise MissingArtifact(path)
    return json.loads(path.read_text())


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

def _prepare_splits(config: ExperimentConfig):
    """Load the dataset and produce (train, val, test, k)."""
    if config.rules is not None:
        split = data.load_csv(config.dataset_path, config.schema, config.seed, rules=config.rules)
        return split.train, split.val, split.test, split.k
    split = data.load_csv(config.dataset_path, config.schema, config.seed)
    pool = split.all_records()
    records = data.synthesize_scenario(config.scenario, pool, config.seed)
    train, val, test = data.split_records(records, config.seed)
    return train, val, test, config.scenario.k


def _shards_by_community(train: Sequence[stats_mod.Record], k: int) -> List[List[stats_mod.Record]]:
    shards: List[List[stats_mod.Record]] = [[] for _ in range(k)]
    for r in train:
        shards[r.community - 1].append(r)
    return shards


def run_experiment(config: ExperimentConfig) -> Path:
    """Execute the full pipeline and write the result bundle.

    Returns the bundle directory.  Deterministic: identical config (including
    seed) and dataset bytes produce byte-identical artifacts.
    """
    config_hash = config.config_hash()
    bundle = Path(config.output_dir) / f"{config_hash}-s{config.seed}"
    bundle.mkdir(parents=True, exist_ok=True)
    stamp = f"config {config_hash} seed {config.seed}"

    train, val, test, k = _prepare_splits(config)
    shards = _shards_by_community(train, k)
    model, trace = fl.fedavg(shards, config.fl_config, validation=val)

    train_preds = fl.predict(model, train)
    group_stats = stats_mod.estimate_joint_statistics(train_preds, train, k)
    test_preds = fl.predict(model, test)
    baseline = analysis.empirical_report(test_preds, test, k)

    test_sensitive = np.array([r.sensitive for r in test], dtype=np.int64)
    test_community = np.array([r.community for r in test], dtype=np.int64)

    entries: List[report_mod.GridEntry] = []
    for gi, (eps, delta) in enumerate(config.grid):
        problem = lp.build_relaxed_lp(group_stats, eps, delta)
        solution = solver.solve(problem)
        if solution.status != solver.SolveStatus.OPTIMAL:
            raise NumericalFailure(
                f"grid point {gi} (eps={eps}, delta={delta}): solver returned {solution.status.value}"
            )
        fair_policy = policy_mod.policy_from_solution(solution, k)
        est_loss = analysis.accuracy_loss(problem, solution)
        analytic = analysis.analytic_report(group_stats, fair_policy)
        post_preds = policy_mod.apply_policy(
            test_preds, test_sensitive, test_community, fair_policy,
            policy_mod.RngStream(config.seed, _DECISION_STREAM_BASE + gi),
        )
        empirical = analysis.empirical_report(post_preds, test, k)
        emp_loss = baseline.avg_acc - empirical.avg_acc
        lp.write_lp(problem, bundle / f"lp_{gi}.txt", comments=[stamp, f"eps {eps} delta {delta}"])
        policy_mod.write_policy(
            fair_policy, bundle / f"policy_{gi}.txt", comments=[stamp, f"eps {eps} delta {delta}"]
        )
        _write_json(bundle / f"solution_{gi}.json", {"solution": solution.to_json_dict()}, config_hash, config.seed)
        entries.append(report_mod.GridEntry(
            eps=eps, delta=delta, objective=solution.objective,
            estimated_loss=est_loss, empirical_loss=emp_loss,
            analytic=analytic, empirical=empirical,
        ))

    _write_json(bundle / "config.json", {"config": config.to_json_dict()}, config_hash, config.seed)
    _write_json(bundle / "model.json", {"model": model.to_json_dict()}, config_hash, config.seed)
    _write_json(bundle / "trace.json", {"trace": trace.to_json_dict()}, config_hash, config.seed)
    _write_json(bundle / "stats.json", {"stats": group_stats.to_json_dict()}, config_hash, config.seed)
    _write_json(bundle / "baseline_report.json", {"report": baseline.to_json_dict()}, config_hash, config.seed)
    _write_json(
        bundle / "results.json",
        {"entries": [e.to_json_dict() for e in entries]},
        config_hash, config.seed,
    )
    return bundle


# ---------------------------------------------------------------------------
# report rendering + re-verification
# ---------------------------------------------------------------------------

def _check_close(name: str, stored: float, recomputed: float, tol: float = 1e-9) -> None:
    if stored is None and recomputed is None:
        return
    if abs(stored - recomputed) > tol:
        raise BundleMismatch(f"{name}: stored {stored!r} vs recomputed {recomputed!r}")


def render_bundle(bundle_dir, out_dir=None) -> Path:
    """Re-render tables, plot data and figures from a bundle, re-verifying the
    stored reports against a fresh evaluation of the stored statistics and
    policies."""
    bundle = Path(bundle_dir)
    if not bundle.is_dir():
        raise MissingArtifact(bundle)
    out = Path(out_dir) if out_dir else bundle
    out.mkdir(parents=True, exist_ok=True)

    config_doc = _read_json(bundle / "config.json")
    stamp = f"config {config_doc.get('config_hash')} seed {config_doc.get('seed')}"
    group_stats = stats_mod.GroupStatistics.from_json_dict(_read_json(bundle / "stats.json")["stats"])
    trace = fl.TrainingTrace.from_json_dict(_read_json(bundle / "trace.json")["trace"])
    baseline = analysis.FairnessReport.from_json_dict(_read_json(bundle / "baseline_report.json")["report"])
    entries = [
        report_mod.GridEntry.from_json_dict(d)
        for d in _read_json(bundle / "results.json")["entries"]
    ]

    for gi, entry in enumerate(entries):
        policy_path = bundle / f"policy_{gi}.txt"
        lp_path = bundle / f"lp_{gi}.txt"
        solution_path = bundle / f"solution_{gi}.json"
        if not policy_path.exists():
            raise MissingArtifact(policy_path)
        if not lp_path.exists():
            raise MissingArtifact(lp_path)
        stored_policy = policy_mod.read_policy(policy_path)
        recomputed = analysis.analytic_report(group_stats, stored_policy)
        _check_close(f"entry {gi} analytic eod", entry.analytic.eod, recomputed.eod)
        _check_close(f"entry {gi} analytic avg_acc", entry.analytic.avg_acc, recomputed.avg_acc)
        _check_close(
            f"entry {gi} analytic accuracy_disparity",
            entry.analytic.accuracy_disparity, recomputed.accuracy_disparity,
        )
        _check_close(
            f"entry {gi} analytic max_error_deviation",
            entry.analytic.max_error_deviation, recomputed.max_error_deviation,
        )
        dense = lp.read_lp(lp_path)
        solution = solver.LpSolution.from_json_dict(_read_json(solution_path)["solution"])
        est = float(dense.objective @ solution.z - dense.objective.sum())
        _check_close(f"entry {gi} estimated loss", entry.estimated_loss, est)

    tables = "\n\n".join([
        "== Summary (empirical on held-out test split) ==",
        report_mod.summary_table(baseline, entries),
        "== Analytic view (exact expectations from training statistics) ==",
        report_mod.analytic_table(entries),
        "== Training trace ==",
        report_mod.trace_table(trace),
    ]) + "\n"
    (out / "tables.txt").write_text(tables)
    (out / "trace.tsv").write_text("\n".join(report_mod.trace_tsv_lines(trace, stamp)) + "\n")
    (out / "grid.tsv").write_text("\n".join(report_mod.grid_tsv_lines(entries, stamp)) + "\n")
    figures = out / "figures"
    figures.mkdir(exist_ok=True)
    report_mod.save_training_figure(trace, figures / "training_curve.png")
    report_mod.save_relaxation_figure(entries, figures / "relaxation_accuracy.png")
    report_mod.save_comparison_figure(baseline, entries, figures / "fairness_comparison.png")
    return out


# ---------------------------------------------------------------------------
# synthetic data + standalone solves
# ---------------------------------------------------------------------------

def _write_multiclass_csv(path, n: int, seed: int) -> None:
    records = data.generate_multiclass_records(n, seed)
    import csv as _csv

    n_features = len(records[0].features)
    with open(path, "w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow([f"f{i + 1}" for i in range(n_features)] + ["group", "site", "outcome"])
        for r in records:
            writer.writerow(
                [f"{v:.6f}" for v in r.features]
                + ["B" if r.sensitive else "A", str(r.community), str(r.label)]
            )


def default_census_config(csv_path: str, seed: int) -> Dict[str, object]:
    """Ready-to-run config for a generated census CSV."""
    return {
        "seed": seed,
        "output_dir": "results",
        "dataset": {"path": csv_path, "schema": data.census_schema().to_json_dict()},
        "partition": {
            "rules": [[p.to_json_dict() for p in rule] for rule in data.census_partition_rules()]
        },
        "fl": {
            "rounds": 30,
            "local_epochs": 1,
            "batch_fraction": 0.1,
            "learning_rate": 0.001,
            "optimizer": "adam",
        },
        "fairness": {
            "grid": [[e, d] for e in (0.0, 0.02, 0.04) for d in (0.0, 0.02, 0.04)]
        },
    }


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairpost",
        description="Federated training with LP-based fairness post-processing.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the full pipeline from a config file")
    p_run.add_argument("--config", required=True, help="JSON experiment config")

    p_report = sub.add_parser("report", help="render tables, plot data and figures from a bundle")
    p_report.add_argument("--bundle", required=True, help="bundle directory written by run")
    p_report.add_argument("--out", default=None, help="output directory (default: the bundle)")

    p_synth = sub.add_parser("synth-data", help="generate a synthetic dataset CSV")
    p_synth.add_argument("--kind", choices=["census", "multiclass"], default="census")
    p_synth.add_argument("--out", required=True, help="CSV path to write")
    p_synth.add_argument("--samples", type=int, default=30000)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--config-out", default=None,
                         help="also write a ready experiment config (census kind only)")

    p_solve = sub.add_parser("solve-lp", help="solve a serialized linear program")
    p_solve.add_argument("--lp", required=True, help="problem file in the documented text format")
    p_solve.add_argument("--solution", default=None, help="optional JSON path for the solution")

    p_bound = sub.add_parser("bound", help="print the fair-error lower bound for a statistics file")
    p_bound.add_argument("--stats", required=True, help="stats.json from a bundle (or bare statistics)")
    return parser


def _cmd_run(args) -> int:
    config = load_config(args.config)
    bundle = run_experiment(config)
    print(f"bundle written to {bundle}")
    return 0


def _cmd_report(args) -> int:
    out = render_bundle(args.bundle, args.out)
    print((out / "tables.txt").read_text())
    print(f"report written to {out}")
    return 0


def _cmd_synth(args) -> int:
    if args.samples <= 0:
        raise ConfigError("--samples must be positive")
    if args.seed < 0:
        raise ConfigError("--seed must be nonnegative")
    if args.kind == "census":
        data.generate_census_csv(args.out, args.samples, args.seed)
        if args.config_out:
            cfg = default_census_config(str(Path(args.out)), args.seed)
            Path(args.config_out).write_text(json.dumps(cfg, indent=1) + "\n")
            print(f"config written to {args.config_out}")
    else:
        if args.config_out:
            raise ConfigError("--config-out is only supported for the census kind")
        _write_multiclass_csv(args.out, args.samples, args.seed)
    print(f"dataset written to {args.out}")
    return 0


def _cmd_solve_lp(args) -> int:
    path = Path(args.lp)
    if not path.exists():
        raise MissingArtifact(path)
    dense = lp.read_lp(path)
    solution = solver.solve(dense)
    print(f"status: {solution.status.value}")
    print(f"objective: {solution.objective!r}")
    print(f"max constraint residual: {solution.max_constraint_residual:.3e}")
    print(f"iterations: {solution.iterations}")
    if args.solution:
        Path(args.solution).write_text(
            json.dumps({"solution": solution.to_json_dict()}, sort_keys=True, indent=1) + "\n"
        )
    return 0 if solution.status == solver.SolveStatus.OPTIMAL else 4


def _cmd_bound(args) -> int:
    doc = _read_json(Path(args.stats))
    payload = doc.get("stats", doc)
    group_stats = stats_mod.GroupStatistics.from_json_dict(payload)
    result = analysis.equalizability_bound(group_stats)
    print(f"error lower bound: {result.bound!r}")
    print(f"sigma_min: {result.sigma_min!r}")
    print(f"objective inf-norm: {result.c_inf_norm!r}")
    print(f"projection norm: {result.projection_norm!r}")
    print(f"base correct mass: {result.base_correct_mass!r}")
    print(f"vacuous: {result.vacuous}")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "report": _cmd_report,
        "synth-data": _cmd_synth,
        "solve-lp": _cmd_solve_lp,
        "bound": _cmd_bound,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
