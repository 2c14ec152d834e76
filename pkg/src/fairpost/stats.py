"""Joint outcome statistics over (label, prediction, sensitive, community) cells.

All downstream machinery (the fairness program, the analytic reports, the
equalizability bound) consumes the empirical masses collected here.  Counts are
accumulated as integers and normalised exactly once, so two passes over the
same data always produce bit-identical statistics.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    CommunityOutOfRange,
    DegenerateGroup,
    EmptyCommunity,
    EmptyDataset,
    LengthMismatch,
)


@dataclass(frozen=True)
class Record:
    """One sample: feature vector, sensitive bit, community id (1-based), label.

    ``raw`` optionally keeps the pre-encoding column values so partition rules
    and scenario resampling can be evaluated after featurisation.
    """

    features: np.ndarray
    sensitive: int
    community: int
    label: int
    raw: Optional[Dict[str, object]] = None

    def __post_init__(self):
        if self.sensitive not in (0, 1):
            raise ValueError(f"sensitive attribute must be 0 or 1, got {self.sensitive!r}")
        if not isinstance(self.community, (int, np.integer)) or self.community < 1:
            raise ValueError(f"community id must be a positive integer, got {self.community!r}")


def _community_counts(records: Sequence[Record], k: Optional[int]) -> np.ndarray:
    if len(records) == 0:
        raise EmptyDataset()
    if k is None:
        k = max(r.community for r in records)
    counts = np.zeros(k, dtype=np.int64)
    for r in records:
        if r.community < 1 or r.community > k:
            raise CommunityOutOfRange(r.community, k)
        counts[r.community - 1] += 1
    for c in range(k):
        if counts[c] == 0:
            raise EmptyCommunity(c + 1)
    return counts


def estimate_community_weights(records: Sequence[Record], k: Optional[int] = None) -> np.ndarray:
    """Empirical community weights p_c = |community c| / n, every c in 1..K present."""
    counts = _community_counts(records, k)
    return counts / counts.sum()


@dataclass(frozen=True)
class GroupStatistics:
    """Binary-outcome masses per (sensitive, community) cell.

    Each of ``tp, fp, tn, fn`` has shape (2, K), indexed [sensitive, community-1],
    and holds a probability mass (all four sum to 1 over all cells).  ``alpha`` and
    ``beta`` are the masses of the qualified group (label 1) within sensitive
    value 0 and 1 respectively — the normalisers for true-positive rates.
    """

    k: int
    p: np.ndarray
    tp: np.ndarray
    fp: np.ndarray
    tn: np.ndarray
    fn: np.ndarray
    alpha: float
    beta: float

    def validate(self, tol: float = 1e-9) -> None:
        for name in ("tp", "fp", "tn", "fn"):
            arr = getattr(self, name)
            if arr.shape != (2, self.k):
                raise ValueError(f"{name} has shape {arr.shape}, expected (2, {self.k})")
            if np.any(arr < -tol):
                raise ValueError(f"{name} contains negative mass")
        total = float(self.tp.sum() + self.fp.sum() + self.tn.sum() + self.fn.sum())
        if abs(total - 1.0) > tol:
            raise ValueError(f"cell masses sum to {total}, expected 1")
        per_comm = (self.tp + self.fp + self.tn + self.fn).sum(axis=0)
        if np.max(np.abs(per_comm - self.p)) > tol:
            raise ValueError("community weights disagree with cell masses")
        if abs(self.alpha - float(self.tp[0].sum() + self.fn[0].sum())) > tol:
            raise ValueError("alpha disagrees with qualified mass at sensitive=0")
        if abs(self.beta - float(self.tp[1].sum() + self.fn[1].sum())) > tol:
            raise ValueError("beta disagrees with qualified mass at sensitive=1")

    def base_error(self) -> float:
        """Error mass of the base predictor: misclassified fraction overall."""
        return float(self.fp.sum() + self.fn.sum())

    def community_error(self, c: int) -> float:
        """Base predictor error within community c, conditional on membership."""
        i = c - 1
        return float((self.fp[:, i].sum() + self.fn[:, i].sum()) / self.p[i])

    def to_json_dict(self) -> Dict[str, object]:
        return {
            "k": self.k,
            "p": self.p.tolist(),
            "tp": self.tp.tolist(),
            "fp": self.fp.tolist(),
            "tn": self.tn.tolist(),
            "fn": self.fn.tolist(),
            "alpha": self.alpha,
            "beta": self.beta,
        }

    @classmethod
    def from_json_dict(cls, d: Dict[str, object]) -> "GroupStatistics":
        return cls(
            k=int(d["k"]),
            p=np.asarray(d["p"], dtype=float),
            tp=np.asarray(d["tp"], dtype=float),
            fp=np.asarray(d["fp"], dtype=float),
            tn=np.asarray(d["tn"], dtype=float),
            fn=np.asarray(d["fn"], dtype=float),
            alpha=float(d["alpha"]),
            beta=float(d["beta"]),
        )


def estimate_joint_statistics(
    predictions: Sequence[int],
    records: Sequence[Record],
    k: Optional[int] = None,
) -> GroupStatistics:
    """Tally binary predictions against records into GroupStatistics.

    Labels and predictions must both be in {0, 1}.  Raises DegenerateGroup when
    either sensitive group has no qualified (label 1) samples, since rate
    constraints are undefined there.
    """
    if len(predictions) != len(records):
        raise LengthMismatch(len(predictions), len(records))
    counts = _community_counts(records, k)
    k = counts.shape[0]
    # cells[label, prediction, sensitive, community]
    cells = np.zeros((2, 2, 2, k), dtype=np.int64)
    for pred, r in zip(predictions, records):
        pred = int(pred)
        if pred not in (0, 1) or r.label not in (0, 1):
            raise ValueError(f"binary statistics need labels/predictions in {{0,1}}, got y={r.label} yhat={pred}")
        cells[r.label, pred, r.sensitive, r.community - 1] += 1
    n = len(records)
    mass = cells / n
    alpha = float(mass[1, :, 0, :].sum())
    beta = float(mass[1, :, 1, :].sum())
    if alpha <= 0.0 or beta <= 0.0:
        raise DegenerateGroup(
            f"qualified mass alpha={alpha} beta={beta}; both sensitive groups need label-1 samples"
        )
    stats = GroupStatistics(
        k=k,
        p=counts / n,
        tp=mass[1, 1],
        fp=mass[0, 1],
        tn=mass[0, 0],
        fn=mass[1, 0],
        alpha=alpha,
        beta=beta,
    )
    stats.validate()
    return stats


@dataclass(frozen=True)
class MulticlassStats:
    """N-class analogue of GroupStatistics.

    ``joint`` has shape (N, N, 2, K) indexed [true, predicted, sensitive,
    community-1] using label *positions* in ``labels``.  ``eo_label`` names the
    outcome whose true-positive rate is equalised across sensitive groups;
    alpha/beta are the masses of that outcome within each sensitive group.
    """

    k: int
    n: int
    labels: Tuple[int, ...]
    p: np.ndarray
    joint: np.ndarray
    alpha: float
    beta: float
    eo_label: int

    def validate(self, tol: float = 1e-9) -> None:
        if self.joint.shape != (self.n, self.n, 2, self.k):
            raise ValueError(f"joint has shape {self.joint.shape}, expected {(self.n, self.n, 2, self.k)}")
        if len(self.labels) != self.n or len(set(self.labels)) != self.n:
            raise ValueError("labels must be n distinct values")
        if abs(float(self.joint.sum()) - 1.0) > tol:
            raise ValueError("joint masses must sum to 1")
        per_comm = self.joint.sum(axis=(0, 1, 2))
        if np.max(np.abs(per_comm - self.p)) > tol:
            raise ValueError("community weights disagree with joint masses")

    def eo_index(self) -> int:
        return self.labels.index(self.eo_label)

    def accuracy(self) -> float:
        return float(np.trace(self.joint.sum(axis=(2, 3))))


def estimate_multiclass_statistics(
    predictions: Sequence[int],
    records: Sequence[Record],
    labels: Optional[Sequence[int]] = None,
    eo_label: Optional[int] = None,
    k: Optional[int] = None,
) -> MulticlassStats:
    """Tally N-class predictions into MulticlassStats.

    ``labels`` fixes the class ordering (defaults to the sorted union of
    observed labels and predictions); the first label is the protected outcome
    unless ``eo_label`` overrides it.
    """
    if len(predictions) != len(records):
        raise LengthMismatch(len(predictions), len(records))
    counts = _community_counts(records, k)
    k = counts.shape[0]
    if labels is None:
        labels = sorted({r.label for r in records} | {int(p) for p in predictions})
    labels = tuple(int(v) for v in labels)
    index = {v: i for i, v in enumerate(labels)}
    n_classes = len(labels)
    cells = np.zeros((n_classes, n_classes, 2, k), dtype=np.int64)
    for pred, r in zip(predictions, records):
        try:
            ti, pi = index[r.label], index[int(pred)]
        except KeyError as exc:
            raise ValueError(f"value {exc.args[0]!r} not in declared labels {labels}") from None
        cells[ti, pi, r.sensitive, r.community - 1] += 1
    joint = cells / len(records)
    if eo_label is None:
        eo_label = labels[0]
    if eo_label not in index:
        raise ValueError(f"eo_label {eo_label!r} not in labels {labels}")
    ei = index[eo_label]
    alpha = float(joint[ei, :, 0, :].sum())
    beta = float(joint[ei, :, 1, :].sum())
    if alpha <= 0.0 or beta <= 0.0:
        raise DegenerateGroup(
            f"protected-outcome mass alpha={alpha} beta={beta}; both sensitive groups need label {eo_label}"
        )
    ms = MulticlassStats(
        k=k,
        n=n_classes,
        labels=labels,
        p=counts / len(records),
        joint=joint,
        alpha=alpha,
        beta=beta,
        eo_label=eo_label,
    )
    ms.validate()
    return ms


def to_group_statistics(ms: MulticlassStats) -> GroupStatistics:
    """Collapse a two-class MulticlassStats into GroupStatistics.

    The second label plays the positive role, so it must be the protected
    outcome: joint[1,1] maps to TP, joint[1,0] to FN, joint[0,1] to FP and
    joint[0,0] to TN per (sensitive, community) cell.
    """
    if ms.n != 2:
        raise ValueError(f"binary collapse needs exactly 2 classes, got {ms.n}")
    if ms.eo_label != ms.labels[1]:
        raise ValueError("binary collapse expects the positive (second) label to be the protected outcome")
    gs = GroupStatistics(
        k=ms.k,
        p=ms.p.copy(),
        tp=ms.joint[1, 1].copy(),
        fn=ms.joint[1, 0].copy(),
        fp=ms.joint[0, 1].copy(),
        tn=ms.joint[0, 0].copy(),
        alpha=ms.alpha,
        beta=ms.beta,
    )
    gs.validate()
    return gs


def from_group_statistics(gs: GroupStatistics, labels: Tuple[int, int] = (0, 1)) -> MulticlassStats:
    """Lift GroupStatistics into the two-class MulticlassStats layout."""
    joint = np.zeros((2, 2, 2, gs.k))
    joint[1, 1] = gs.tp
    joint[1, 0] = gs.fn
    joint[0, 1] = gs.fp
    joint[0, 0] = gs.tn
    ms = MulticlassStats(
        k=gs.k,
        n=2,
        labels=tuple(labels),
        p=gs.p.copy(),
        joint=joint,
        alpha=gs.alpha,
        beta=gs.beta,
        eo_label=labels[1],
    )
    ms.validate()
    return ms
