"""Dataset ingestion, community partitioning and synthetic data generation.

CSV files are parsed against a declared schema, split 60/20/20 stratified by
community, one-hot/standardised using training-split statistics only, and
turned into Record lists that keep their raw column values so partition rules
and scenario resampling can still see them.  The module also ships two
generators: an income-census-shaped binary task with a planted difficulty gap
between communities and a rate gap between sexes, and a Gaussian multi-class
toy task.
"""

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import (
    EmptyDataset,
    InsufficientPool,
    MissingArtifact,
    OverlappingRules,
    ParseError,
    SchemaViolation,
    UncoveredRecord,
)
from .stats import Record

_SPLIT_STREAM = 301
_SCENARIO_STREAM = 401
_CENSUS_STREAM = 501
_TOY_STREAM = 601

OTHER_BUCKET = "__other__"


# ---------------------------------------------------------------------------
# schema
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str  # "numeric" | "categorical"

    def __post_init__(self):
        if self.kind not in ("numeric", "categorical"):
            raise SchemaViolation(f"column {self.name!r} has unknown kind {self.kind!r}")


@dataclass(frozen=True)
class DatasetSchema:
    """Declares how CSV columns become Record fields.

    ``sensitive_one`` is the raw value mapping to a=1 (anything else is 0).
    ``label_values`` orders the raw label strings; ``label_ids`` assigns each
    an integer label (defaults to the position, so binary tasks get {0, 1}).
    Communities come either from ``community_column`` (sparse values densely
    renumbered 1..K in sorted order) or from partition rules applied later.
    """

    features: Tuple[ColumnSpec, ...]
    sensitive_column: str
    sensitive_one: str
    label_column: str
    label_values: Tuple[str, ...]
    label_ids: Optional[Tuple[int, ...]] = None
    community_column: Optional[str] = None

    def __post_init__(self):
        names = [c.name for c in self.features] + [self.sensitive_column, self.label_column]
        if self.community_column:
            names.append(self.community_column)
        dupes = {n for n in names if names.count(n) > 1}
        if dupes:
            raise SchemaViolation(f"columns declared more than once: {sorted(dupes)}")
        if len(self.label_values) < 2:
            raise SchemaViolation("need at least two label values")
        if len(set(self.label_values)) != len(self.label_values):
            raise SchemaViolation("label values must be distinct")
        if self.label_ids is not None and len(self.label_ids) != len(self.label_values):
            raise SchemaViolation("label_ids must match label_values in length")

    def labels(self) -> Tuple[int, ...]:
        if self.label_ids is not None:
            return tuple(self.label_ids)
        return tuple(range(len(self.label_values)))

    def to_json_dict(self) -> Dict[str, object]:
        out: Dict[str, object] = {
            "features": [{"name": c.name, "kind": c.kind} for c in self.features],
            "sensitive": {"column": self.sensitive_column, "one": self.sensitive_one},
            "label": {"column": self.label_column, "values": list(self.label_values)},
        }
        if self.label_ids is not None:
            out["label"]["ids"] = list(self.label_ids)
        if self.community_column:
            out["community"] = {"column": self.community_column}
        return out

    @classmethod
    def from_json_dict(cls, d: Dict[str, object]) -> "DatasetSchema":
        try:
            features = tuple(ColumnSpec(f["name"], f["kind"]) for f in d["features"])
            label = d["label"]
            return cls(
                features=features,
                sensitive_column=d["sensitive"]["column"],
                sensitive_one=str(d["sensitive"]["one"]),
                label_column=label["column"],
                label_values=tuple(str(v) for v in label["values"]),
                label_ids=tuple(int(v) for v in label["ids"]) if "ids" in label else None,
                community_column=(d.get("community") or {}).get("column"),
            )
        except (KeyError, TypeError) as exc:
            raise SchemaViolation(f"malformed schema: {exc}") from None


# ---------------------------------------------------------------------------
# partition rules
# ---------------------------------------------------------------------------

_NUMERIC_OPS = ("lt", "le", "gt", "ge")


@dataclass(frozen=True)
class Predicate:
    column: str
    op: str  # eq | ne | in | not_in | lt | le | gt | ge
    value: object

    def matches(self, raw: Dict[str, object]) -> bool:
        if self.column not in raw:
            raise UncoveredRecord(f"record has no column {self.column!r}")
        cell = raw[self.column]
        if self.op == "eq":
            return str(cell) == str(self.value)
        if self.op == "ne":
            return str(cell) != str(self.value)
        if self.op == "in":
            return str(cell) in {str(v) for v in self.value}
        if self.op == "not_in":
            return str(cell) not in {str(v) for v in self.value}
        if self.op in _NUMERIC_OPS:
            try:
                lhs, rhs = float(cell), float(self.value)
            except (TypeError, ValueError):
                raise UncoveredRecord(
                    f"non-numeric comparison {self.column!r} {self.op} {self.value!r} on {cell!r}"
                ) from None
            return {"lt": lhs < rhs, "le": lhs <= rhs, "gt": lhs > rhs, "ge": lhs >= rhs}[self.op]
        raise SchemaViolation(f"unknown predicate op {self.op!r}")

    def to_json_dict(self) -> Dict[str, object]:
        return {"column": self.column, "op": self.op, "value": self.value}

    @classmethod
    def from_json_dict(cls, d: Dict[str, object]) -> "Predicate":
        try:
            return cls(column=d["column"], op=d["op"], value=d["value"])
        except KeyError as exc:
            raise SchemaViolation(f"malformed predicate: missing {exc}") from None


PartitionRule = Tuple[Predicate, ...]  # conjunction of predicates = one community


def _rule_matches(rule: PartitionRule, raw: Dict[str, object]) -> bool:
    return all(p.matches(raw) for p in rule)


def assign_community(raw: Dict[str, object], rules: Sequence[PartitionRule]) -> int:
    hits = [i for i, rule in enumerate(rules) if _rule_matches(rule, raw)]
    if not hits:
        raise UncoveredRecord(f"{raw}")
    if len(hits) > 1:
        raise OverlappingRules(hits[0] + 1, hits[1] + 1, f"{raw}")
    return hits[0] + 1


def partition_by_rule(records: Sequence[Record], rules: Sequence[PartitionRule]) -> List[List[Record]]:
    """Split records into K shards, one per rule, reassigning community ids.

    Every record must match exactly one rule (evaluated on raw column values).
    """
    if not rules:
        raise SchemaViolation("need at least one partition rule")
    shards: List[List[Record]] = [[] for _ in rules]
    for r in records:
        if r.raw is None:
            raise UncoveredRecord("record carries no raw column values")
        c = assign_community(r.raw, rules)
        shards[c - 1].append(replace(r, community=c))
    return shards


# ---------------------------------------------------------------------------
# csv ingestion
# ---------------------------------------------------------------------------

@dataclass
class FeatureEncoder:
    """Train-split feature statistics: per-numeric mean/sd and per-categorical
    level lists (plus a reserved bucket for unseen levels)."""

    columns: Tuple[ColumnSpec, ...]
    means: Dict[str, float]
    stds: Dict[str, float]
    levels: Dict[str, List[str]]

    def width(self) -> int:
        total = 0
        for col in self.columns:
            total += 1 if col.kind == "numeric" else len(self.levels[col.name]) + 1
        return total

    def encode(self, raw: Dict[str, object], numeric: Dict[str, float]) -> np.ndarray:
        parts: List[np.ndarray] = []
        for col in self.columns:
            if col.kind == "numeric":
                parts.append(np.array([(numeric[col.name] - self.means[col.name]) / self.stds[col.name]]))
            else:
                levels = self.levels[col.name]
                vec = np.zeros(len(levels) + 1)
                try:
                    vec[levels.index(str(raw[col.name]))] = 1.0
                except ValueError:
                    vec[-1] = 1.0  # unseen level -> reserved bucket
                parts.append(vec)
        return np.concatenate(parts)


@dataclass
class DatasetSplit:
    train: List[Record]
    val: List[Record]
    test: List[Record]
    k: int
    encoder: FeatureEncoder
    community_values: Optional[List[str]] = None  # dense id - 1 -> raw value

    def all_records(self) -> List[Record]:
        return self.train + self.val + self.test


def _parse_rows(path, schema: DatasetSchema):
    """Yield (line_number, raw_dict, numeric_dict, sensitive, label) tuples."""
    try:
        fh = open(path, newline="")
    except FileNotFoundError:
        raise MissingArtifact(path) from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDataset() from None
        header = [h.strip() for h in header]
        dupes = {h for h in header if header.count(h) > 1}
        if dupes:
            raise SchemaViolation(f"duplicate header columns: {sorted(dupes)}")
        needed = [c.name for c in schema.features] + [schema.sensitive_column, schema.label_column]
        if schema.community_column:
            needed.append(schema.community_column)
        missing = [c for c in needed if c not in header]
        if missing:
            raise SchemaViolation(f"missing columns: {missing}")
        label_map = dict(zip(schema.label_values, schema.labels()))
        rows = []
        for lineno, cells in enumerate(reader, start=2):
            if not cells or all(not c.strip() for c in cells):
                continue
            if len(cells) != len(header):
                raise ParseError(lineno, "<row>", f"expected {len(header)} cells, got {len(cells)}")
            raw = {h: cell.strip() for h, cell in zip(header, cells)}
            numeric: Dict[str, float] = {}
            for col in schema.features:
                if col.kind == "numeric":
                    try:
                        numeric[col.name] = float(raw[col.name])
                    except ValueError:
                        raise ParseError(lineno, col.name, f"not a number: {raw[col.name]!r}") from None
            raw_label = raw[schema.label_column]
            if raw_label not in label_map:
                raise ParseError(
                    lineno, schema.label_column,
                    f"label {raw_label!r} not among declared values {list(schema.label_values)}",
                )
            sensitive = 1 if raw[schema.sensitive_column] == schema.sensitive_one else 0
            rows.append((lineno, raw, numeric, sensitive, label_map[raw_label]))
    if not rows:
        raise EmptyDataset()
    return rows


def _split_counts(n: int, fractions: Tuple[float, float, float]) -> Tuple[int, int, int]:
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    n_train = min(n_train, n)
    n_val = min(n_val, n - n_train)
    return n_train, n_val, n - n_train - n_val


def split_records(
    records: Sequence[Record],
    seed: int,
    fractions: Tuple[float, float, float] = (0.6, 0.2, 0.2),
) -> Tuple[List[Record], List[Record], List[Record]]:
    """Stratified-by-community 60/20/20 split of already-featurised records,
    drawn from the same split stream as CSV ingestion."""
    if len(records) == 0:
        raise EmptyDataset()
    communities = sorted({r.community for r in records})
    train: List[Record] = []
    val: List[Record] = []
    test: List[Record] = []
    for c in communities:
        members = [r for r in records if r.community == c]
        rng = np.random.default_rng([seed, _SPLIT_STREAM, c])
        order = rng.permutation(len(members))
        n_train, n_val, _ = _split_counts(len(members), fractions)
        train.extend(members[i] for i in order[:n_train])
        val.extend(members[i] for i in order[n_train: n_train + n_val])
        test.extend(members[i] for i in order[n_train + n_val:])
    return train, val, test


def load_csv(
    path,
    schema: DatasetSchema,
    seed: int,
    rules: Optional[Sequence[PartitionRule]] = None,
    fractions: Tuple[float, float, float] = (0.6, 0.2, 0.2),
) -> DatasetSplit:
    """Parse, assign communities, split 60/20/20 stratified by community, and
    featurise with training-split statistics.

    Communities come from ``rules`` when given, else from the schema's
    community column (sparse values densely renumbered), else everything is
    community 1.  The split shuffle is drawn from (seed, community), so it is
    independent of file order within a community only through the shuffle.
    """
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise SchemaViolation(f"split fractions must sum to 1, got {fractions}")
    rows = _parse_rows(path, schema)

    community_values: Optional[List[str]] = None
    if rules is not None:
        communities = [assign_community(raw, rules) for _, raw, _, _, _ in rows]
        k = len(rules)
    elif schema.community_column:
        values = sorted({raw[schema.community_column] for _, raw, _, _, _ in rows})
        community_values = values
        dense = {v: i + 1 for i, v in enumerate(values)}
        communities = [dense[raw[schema.community_column]] for _, raw, _, _, _ in rows]
        k = len(values)
    else:
        communities = [1] * len(rows)
        k = 1

    # stratified split: shuffle each community's row indices separately
    split_of = np.empty(len(rows), dtype=np.int64)  # 0 train / 1 val / 2 test
    for c in range(1, k + 1):
        idx = np.array([i for i, comm in enumerate(communities) if comm == c], dtype=np.int64)
        rng = np.random.default_rng([seed, _SPLIT_STREAM, c])
        idx = idx[rng.permutation(idx.shape[0])]
        n_train, n_val, _ = _split_counts(idx.shape[0], fractions)
        split_of[idx[:n_train]] = 0
        split_of[idx[n_train: n_train + n_val]] = 1
        split_of[idx[n_train + n_val:]] = 2

    # fit the encoder on training rows only
    train_rows = [rows[i] for i in range(len(rows)) if split_of[i] == 0]
    means: Dict[str, float] = {}
    stds: Dict[str, float] = {}
    levels: Dict[str, List[str]] = {}
    for col in schema.features:
        if col.kind == "numeric":
            vals = np.array([numeric[col.name] for _, _, numeric, _, _ in train_rows])
            means[col.name] = float(vals.mean()) if vals.size else 0.0
            sd = float(vals.std()) if vals.size else 1.0
            stds[col.name] = sd if sd > 0 else 1.0
        else:
            levels[col.name] = sorted({str(raw[col.name]) for _, raw, _, _, _ in train_rows})
    encoder = FeatureEncoder(columns=schema.features, means=means, stds=stds, levels=levels)

    buckets: Tuple[List[Record], List[Record], List[Record]] = ([], [], [])
    for i, (lineno, raw, numeric, sensitive, label) in enumerate(rows):
        record = Record(
            features=encoder.encode(raw, numeric),
            sensitive=sensitive,
            community=communities[i],
            label=label,
            raw=raw,
        )
        buckets[split_of[i]].append(record)
    return DatasetSplit(
        train=buckets[0], val=buckets[1], test=buckets[2],
        k=k, encoder=encoder, community_values=community_values,
    )


# ---------------------------------------------------------------------------
# scenario synthesis
# ---------------------------------------------------------------------------

# four-cell order used throughout: (y=1,a=1), (y=1,a=0), (y=0,a=1), (y=0,a=0)
CELL_ORDER: Tuple[Tuple[int, int], ...] = ((1, 1), (1, 0), (0, 1), (0, 0))


@dataclass(frozen=True)
class ScenarioSpec:
    """Per-community target mix over the four (label, sensitive) cells."""

    k: int
    cell_mix: np.ndarray  # (K, 4) rows summing to 1, columns per CELL_ORDER
    samples_per_community: Union[int, Tuple[int, ...]]

    def __post_init__(self):
        mix = np.asarray(self.cell_mix, dtype=float)
        if mix.shape != (self.k, 4):
            raise SchemaViolation(f"cell mix has shape {mix.shape}, expected ({self.k}, 4)")
        if np.any(mix < 0) or np.max(np.abs(mix.sum(axis=1) - 1.0)) > 1e-9:
            raise SchemaViolation("each community's cell proportions must be nonnegative and sum to 1")

    def counts(self, community: int) -> int:
        if isinstance(self.samples_per_community, int):
            return self.samples_per_community
        return self.samples_per_community[community - 1]

    def to_json_dict(self) -> Dict[str, object]:
        return {
            "k": self.k,
            "cell_mix": np.asarray(self.cell_mix).tolist(),
            "samples_per_community": (
                self.samples_per_community
                if isinstance(self.samples_per_community, int)
                else list(self.samples_per_community)
            ),
        }

    @classmethod
    def from_json_dict(cls, d: Dict[str, object]) -> "ScenarioSpec":
        spc = d["samples_per_community"]
        return cls(
            k=int(d["k"]),
            cell_mix=np.asarray(d["cell_mix"], dtype=float),
            samples_per_community=int(spc) if isinstance(spc, int) else tuple(int(v) for v in spc),
        )


def _largest_remainder(targets: np.ndarray, total: int) -> np.ndarray:
    base = np.floor(targets).astype(np.int64)
    remainder = total - int(base.sum())
    fracs = targets - base
    for j in np.argsort(-fracs, kind="stable")[:remainder]:
        base[j] += 1
    return base


def synthesize_scenario(spec: ScenarioSpec, pool: Sequence[Record], seed: int) -> List[Record]:
    """Resample the pool with replacement into K communities hitting each
    community's four-cell mix within one sample."""
    if len(pool) == 0:
        raise EmptyDataset()
    cells: Dict[Tuple[int, int], List[Record]] = {cell: [] for cell in CELL_ORDER}
    for r in pool:
        key = (r.label, r.sensitive)
        if key in cells:
            cells[key].append(r)
    out: List[Record] = []
    for c in range(1, spec.k + 1):
        total = spec.counts(c)
        counts = _largest_remainder(np.asarray(spec.cell_mix[c - 1]) * total, total)
        rng = np.random.default_rng([seed, _SCENARIO_STREAM, c])
        for cell, count in zip(CELL_ORDER, counts):
            if count == 0:
                continue
            source = cells[cell]
            if not source:
                raise InsufficientPool(f"no pool samples with (label, sensitive) = {cell}")
            picks = rng.integers(0, len(source), size=int(count))
            out.extend(replace(source[i], community=c) for i in picks)
    return out


# ---------------------------------------------------------------------------
# synthetic generators
# ---------------------------------------------------------------------------

_EDU_NON_DOC = ["Assoc", "Bachelors", "HS-grad", "Masters", "Some-college"]
_EDU_BASE_NUM = {
    "HS-grad": 9, "Some-college": 10, "Assoc": 11, "Bachelors": 13, "Masters": 14, "Doctorate": 16,
}
_WORKCLASS = ["Federal-gov", "Private", "Self-emp", "State-gov"]
_MARITAL = ["Divorced", "Married", "Never-married"]
_OCCUPATION = ["Admin", "Craft", "Exec-managerial", "Prof-specialty", "Sales", "Service"]

# community 1 = broad population, community 2 = doctorate holders; the latter
# gets a noisier qualification signal (harder community) and a smaller share
CENSUS_PARAMS = {
    "doctorate_share": 0.25,
    "female_share": 0.40,
    "positive_rate": {1: 0.24, 2: 0.42},
    "signal_noise": {1: 0.52, 2: 1.1},
    "female_qualified_shift": 0.25,
    "female_unqualified_shift": 0.10,
}


def generate_census_csv(path, n: int, seed: int, params: Optional[Dict] = None) -> None:
    """Write an income-census-shaped CSV with a planted community difficulty
    gap and a sex rate gap.

    Qualification is a latent score; observed features are noisy views of it.
    Doctorate rows carry more feature noise (harder to classify) and qualified
    female rows are shifted toward the decision boundary, so a one-threshold
    classifier finds fewer of them.
    """
    p = dict(CENSUS_PARAMS)
    if params:
        p.update(params)
    rng = np.random.default_rng([seed, _CENSUS_STREAM])
    header = [
        "age", "workclass", "education", "education_num", "marital_status",
        "occupation", "hours_per_week", "capital_gain", "sex", "income",
    ]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for _ in range(n):
            is_doc = rng.random() < p["doctorate_share"]
            community = 2 if is_doc else 1
            education = "Doctorate" if is_doc else _EDU_NON_DOC[rng.integers(0, len(_EDU_NON_DOC))]
            female = rng.random() < p["female_share"]
            qualified = rng.random() < p["positive_rate"][community]
            # latent score observed through community-specific noise; qualified
            # women sit closer to the boundary than qualified men
            score = (1.0 if qualified else -1.0) + rng.normal(0.0, p["signal_noise"][community])
            if female and qualified:
                score -= p["female_qualified_shift"]
            if female and not qualified:
                score += p["female_unqualified_shift"]
            age = int(np.clip(rng.normal(40 + 4 * score, 11), 18, 85))
            education_num = _EDU_BASE_NUM[education] + float(np.round(0.8 * score + rng.normal(0, 0.6), 2))
            hours = int(np.clip(rng.normal(41 + 5.0 * score, 7), 5, 95))
            gain = float(np.round(max(0.0, 2200.0 * (score - 0.6) + rng.normal(0, 900)), 2))
            if score > 0.6:
                occ_pool = ["Exec-managerial", "Prof-specialty", "Sales"]
            elif score > -0.4:
                occ_pool = ["Admin", "Craft", "Exec-managerial", "Sales"]
            else:
                occ_pool = ["Admin", "Craft", "Service"]
            occupation = occ_pool[rng.integers(0, len(occ_pool))]
            marital = (
                "Married"
                if rng.random() < (0.72 if qualified else 0.38)
                else _MARITAL[rng.integers(0, len(_MARITAL))]
            )
            workclass = _WORKCLASS[rng.integers(0, len(_WORKCLASS))]
            writer.writerow([
                age, workclass, education, education_num, marital, occupation,
                hours, gain, "Female" if female else "Male", ">50K" if qualified else "<=50K",
            ])


def census_schema() -> DatasetSchema:
    return DatasetSchema(
        features=(
            ColumnSpec("age", "numeric"),
            ColumnSpec("workclass", "categorical"),
            ColumnSpec("education", "categorical"),
            ColumnSpec("education_num", "numeric"),
            ColumnSpec("marital_status", "categorical"),
            ColumnSpec("occupation", "categorical"),
            ColumnSpec("hours_per_week", "numeric"),
            ColumnSpec("capital_gain", "numeric"),
        ),
        sensitive_column="sex",
        sensitive_one="Female",
        label_column="income",
        label_values=("<=50K", ">50K"),
    )


def census_partition_rules() -> List[PartitionRule]:
    """Two communities: doctorate holders vs everyone else."""
    return [
        (Predicate("education", "ne", "Doctorate"),),
        (Predicate("education", "eq", "Doctorate"),),
    ]


def generate_multiclass_records(
    n: int,
    seed: int,
    k: int = 3,
    n_classes: int = 3,
    class_mix: Optional[np.ndarray] = None,
    sensitive_rate: Optional[np.ndarray] = None,
    separation: float = 2.2,
    noise: Optional[Sequence[float]] = None,
) -> List[Record]:
    """Gaussian toy data: class j lives around separation * e_j with
    community-specific noise; labels are 1..N; communities may differ in class
    mix and sensitive-attribute rates."""
    rng = np.random.default_rng([seed, _TOY_STREAM])
    if class_mix is None:
        class_mix = np.stack([
            np.roll(np.array([0.5] + [0.5 / (n_classes - 1)] * (n_classes - 1)), c)
            for c in range(k)
        ])
    class_mix = np.asarray(class_mix, dtype=float)
    if sensitive_rate is None:
        sensitive_rate = 0.3 + 0.4 * np.linspace(0, 1, k * n_classes).reshape(k, n_classes)
    noise = list(noise) if noise is not None else [1.0 + 0.25 * c for c in range(k)]
    records: List[Record] = []
    eye = np.eye(n_classes)
    per_comm = _largest_remainder(np.full(k, n / k), n)
    for c in range(1, k + 1):
        counts = _largest_remainder(class_mix[c - 1] * per_comm[c - 1], int(per_comm[c - 1]))
        for j, count in enumerate(counts):
            for _ in range(int(count)):
                a = 1 if rng.random() < sensitive_rate[c - 1, j] else 0
                x = separation * eye[j] + rng.normal(0.0, noise[c - 1], size=n_classes)
                records.append(Record(features=x, sensitive=a, community=c, label=j + 1))
    return records
