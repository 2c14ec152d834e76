"""Fairness metrics and exact policy evaluation.

Two evaluation paths share one report type: the empirical path counts outcomes
of realised predictions on a finite sample, the analytic path computes exact
expectations of a randomized policy from joint statistics.  On the same data
with an identity policy the two agree to floating-point accuracy, which the
test-suite exercises heavily.  The module also hosts the accuracy-loss
identity, the smallest-singular-value routine and the error lower bound for
strictly fair predictors.
"""

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DegenerateGroup, NumericalFailure, SingularityFailure
from .lp import LpProblem, StandardLp, build_strict_lp, to_standard_form
from .policy import FairPolicy, MulticlassPolicy
from .solver import LpSolution, SolveStatus
from .stats import GroupStatistics, MulticlassStats, Record


@dataclass(frozen=True)
class FairnessReport:
    """Headline fairness metrics of one predictor.

    ``avg_acc`` is the community-weighted accuracy (equal to plain accuracy),
    ``accuracy_disparity`` the max-minus-min per-community accuracy,
    ``max_error_deviation`` the largest distance of a community's error from
    the across-community mean (the quantity a relaxed program constrains).
    Undefined per-community rate gaps are NaN, never zero.  Loss fields are
    None for baseline reports.
    """

    avg_acc: float
    eod: float
    per_community_acc: np.ndarray
    accuracy_disparity: float
    per_community_eod: np.ndarray
    tpr_a0: float
    tpr_a1: float
    max_error_deviation: float
    estimated_accuracy_loss: Optional[float] = None
    empirical_accuracy_loss: Optional[float] = None

    def to_json_dict(self) -> Dict[str, object]:
        def opt(x):
            return None if x is None or (isinstance(x, float) and math.isnan(x)) else x

        return {
            "avg_acc": self.avg_acc,
            "eod": self.eod,
            "per_community_acc": self.per_community_acc.tolist(),
            "accuracy_disparity": self.accuracy_disparity,
            "per_community_eod": [opt(float(v)) for v in self.per_community_eod],
            "tpr_a0": self.tpr_a0,
            "tpr_a1": self.tpr_a1,
            "max_error_deviation": self.max_error_deviation,
            "estimated_accuracy_loss": opt(self.estimated_accuracy_loss),
            "empirical_accuracy_loss": opt(self.empirical_accuracy_loss),
        }

    @classmethod
    def from_json_dict(cls, d: Dict[str, object]) -> "FairnessReport":
        eod_vec = np.array(
            [np.nan if v is None else float(v) for v in d["per_community_eod"]]
        )
        return cls(
            avg_acc=float(d["avg_acc"]),
            eod=float(d["eod"]),
            per_community_acc=np.asarray(d["per_community_acc"], dtype=float),
            accuracy_disparity=float(d["accuracy_disparity"]),
            per_community_eod=eod_vec,
            tpr_a0=float(d["tpr_a0"]),
            tpr_a1=float(d["tpr_a1"]),
            max_error_deviation=float(d["max_error_deviation"]),
            estimated_accuracy_loss=(
                None if d.get("estimated_accuracy_loss") is None else float(d["estimated_accuracy_loss"])
            ),
            empirical_accuracy_loss=(
                None if d.get("empirical_accuracy_loss") is None else float(d["empirical_accuracy_loss"])
            ),
        )


@dataclass(frozen=True)
class EqualizabilityBound:
    """Error lower bound for any predictor equalising opportunity and
    per-community error exactly.  ``vacuous`` marks bounds that cannot
    constrain anything (≤ 0 or -inf); the value is still reported verbatim."""

    bound: float
    sigma_min: float
    c_inf_norm: float
    projection_norm: float
    base_correct_mass: float
    vacuous: bool

    def to_json_dict(self) -> Dict[str, object]:
        return {
            "bound": self.bound,
            "sigma_min": self.sigma_min,
            "c_inf_norm": self.c_inf_norm,
            "projection_norm": self.projection_norm,
            "base_correct_mass": self.base_correct_mass,
            "vacuous": self.vacuous,
        }


@dataclass(frozen=True)
class LocalFairnessGap:
    per_community: np.ndarray  # NaN where a conditional rate is undefined
    overall: float


def _finalise_report(per_acc, weights, eod, per_eod, tpr0, tpr1, est=None, emp=None) -> FairnessReport:
    per_acc = np.asarray(per_acc, dtype=float)
    errors = 1.0 - per_acc
    deviation = float(np.max(np.abs(errors - errors.mean()))) if errors.size else 0.0
    return FairnessReport(
        avg_acc=float(weights @ per_acc),
        eod=float(eod),
        per_community_acc=per_acc,
        accuracy_disparity=float(per_acc.max() - per_acc.min()),
        per_community_eod=np.asarray(per_eod, dtype=float),
        tpr_a0=float(tpr0),
        tpr_a1=float(tpr1),
        max_error_deviation=deviation,
        estimated_accuracy_loss=est,
        empirical_accuracy_loss=emp,
    )


def empirical_report(
    predictions: Sequence[int],
    records: Sequence[Record],
    k: Optional[int] = None,
    positive_label: int = 1,
) -> FairnessReport:
    """Count realised outcomes into a FairnessReport.

    Works for binary and multi-class labels alike; the rate gap is computed on
    ``positive_label`` true-positive rates.  Raises DegenerateGroup when a
    sensitive group has no positive-label samples at all.
    """
    from .stats import _community_counts  # shared community validation

    if len(predictions) != len(records):
        from .errors import LengthMismatch

        raise LengthMismatch(len(predictions), len(records))
    counts = _community_counts(records, k)
    k = counts.shape[0]
    correct = np.zeros(k)
    qualified = np.zeros((2, k))
    qualified_hit = np.zeros((2, k))
    for pred, r in zip(predictions, records):
        c = r.community - 1
        if int(pred) == r.label:
            correct[c] += 1
        if r.label == positive_label:
            qualified[r.sensitive, c] += 1
            if int(pred) == positive_label:
                qualified_hit[r.sensitive, c] += 1
    per_acc = correct / counts
    q_tot = qualified.sum(axis=1)
    if q_tot[0] == 0 or q_tot[1] == 0:
        raise DegenerateGroup(
            f"no label-{positive_label} samples for sensitive value {0 if q_tot[0] == 0 else 1}"
        )
    tpr0, tpr1 = qualified_hit.sum(axis=1) / q_tot
    with np.errstate(invalid="ignore", divide="ignore"):
        per_rate = np.where(qualified > 0, qualified_hit / np.where(qualified > 0, qualified, 1), np.nan)
    per_eod = per_rate[0] - per_rate[1]
    return _finalise_report(per_acc, counts / counts.sum(), tpr0 - tpr1, per_eod, tpr0, tpr1)


def _post_cell_masses(stats: GroupStatistics, policy: FairPolicy):
    """Exact joint masses after randomized post-processing, per (a, c) cell."""
    k0, k1 = policy.keep0, policy.keep1
    tp = stats.tp * k1 + stats.fn * (1.0 - k0)
    fn = stats.fn * k0 + stats.tp * (1.0 - k1)
    fp = stats.fp * k1 + stats.tn * (1.0 - k0)
    tn = stats.tn * k0 + stats.fp * (1.0 - k1)
    return tp, fn, fp, tn


def analytic_report(stats: GroupStatistics, policy: FairPolicy) -> FairnessReport:
    """Exact expected metrics of ``policy`` applied on top of the base
    predictor summarised by ``stats``."""
    stats.validate()
    if policy.k != stats.k:
        raise ValueError(f"policy has {policy.k} communities, statistics {stats.k}")
    tp, fn, fp, tn = _post_cell_masses(stats, policy)
    per_acc = (tp + tn).sum(axis=0) / stats.p
    tpr0 = float(tp[0].sum() / stats.alpha)
    tpr1 = float(tp[1].sum() / stats.beta)
    qualified = stats.tp + stats.fn
    with np.errstate(invalid="ignore", divide="ignore"):
        per_rate = np.where(qualified > 0, tp / np.where(qualified > 0, qualified, 1), np.nan)
    per_eod = per_rate[0] - per_rate[1]
    return _finalise_report(per_acc, stats.p, tpr0 - tpr1, per_eod, tpr0, tpr1)


def evaluate(predictions_or_policy, dataset_or_stats, **kwargs) -> FairnessReport:
    """Single entry point over both evaluation paths: (predictions, records)
    counts empirically, (policy, statistics) evaluates analytically."""
    if isinstance(predictions_or_policy, FairPolicy):
        if not isinstance(dataset_or_stats, GroupStatistics):
            raise TypeError("a policy must be evaluated against GroupStatistics")
        if kwargs:
            raise TypeError(f"analytic path takes no extra options, got {sorted(kwargs)}")
        return analytic_report(dataset_or_stats, predictions_or_policy)
    return empirical_report(predictions_or_policy, dataset_or_stats, **kwargs)


def accuracy_loss(lp: LpProblem, solution: LpSolution) -> float:
    """Predicted accuracy drop of the solved policy relative to the base
    predictor: objective at z minus objective at the all-ones vector.  Exact at
    population level, so it doubles as the estimator reported next to the
    empirically measured loss."""
    if solution.status != SolveStatus.OPTIMAL:
        raise NumericalFailure(f"accuracy loss needs an optimal solution, got {solution.status.value}")
    if solution.z.shape[0] != lp.objective.shape[0]:
        raise ValueError("solution does not match problem dimensions")
    return float(lp.objective @ solution.z - lp.objective.sum())


def local_fairness_gap(
    predictions: Sequence[int],
    records: Sequence[Record],
    k: Optional[int] = None,
    positive_label: int = 1,
) -> LocalFairnessGap:
    """Per-community rate gaps next to the global one, so locally-fair but
    globally-unfair splits are visible.  Communities missing qualified samples
    of either sensitive value get NaN, never a fake zero."""
    report = empirical_report(predictions, records, k=k, positive_label=positive_label)
    return LocalFairnessGap(per_community=report.per_community_eod, overall=report.eod)


# ---------------------------------------------------------------------------
# multiclass evaluation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MulticlassReport:
    accuracy: float
    per_community_acc: np.ndarray
    rate_gap: float
    max_error_deviation: float


def multiclass_post_joint(ms: MulticlassStats, policy: MulticlassPolicy) -> np.ndarray:
    """Joint (true, emitted, a, c) masses after applying a column-stochastic
    policy to the base predictor's joint masses."""
    if (policy.k, policy.n) != (ms.k, ms.n):
        raise ValueError("policy and statistics dimensions differ")
    # out[y, k, a, c] = sum_j joint[y, j, a, c] * M[c, a, k, j]
    return np.einsum("yjac,cakj->ykac", ms.joint, policy.matrices)


def evaluate_multiclass(policy: MulticlassPolicy, ms: MulticlassStats) -> MulticlassReport:
    post = multiclass_post_joint(ms, policy)
    n = ms.n
    correct = np.einsum("yyac->ac", post)
    per_acc = correct.sum(axis=0) / ms.p
    eo = ms.eo_index()
    rate0 = float(post[eo, eo, 0, :].sum() / ms.alpha)
    rate1 = float(post[eo, eo, 1, :].sum() / ms.beta)
    errors = 1.0 - per_acc
    return MulticlassReport(
        accuracy=float(correct.sum()),
        per_community_acc=per_acc,
        rate_gap=rate0 - rate1,
        max_error_deviation=float(np.max(np.abs(errors - errors.mean()))),
    )


# ---------------------------------------------------------------------------
# smallest singular value / error lower bound
# ---------------------------------------------------------------------------

def smallest_singular_value(matrix: np.ndarray, max_sweeps: int = 100) -> float:
    """Smallest singular value of a dense matrix with height <= width, via
    cyclic Jacobi rotations on the symmetric product M Mᵀ.

    Sweeps continue until the off-diagonal Frobenius norm drops below 1e-12
    (relative floor for badly scaled inputs); the smallest eigenvalue is
    clamped at zero before the square root.
    """
    M = np.asarray(matrix, dtype=float)
    if M.ndim != 2:
        raise ValueError("expected a 2-d matrix")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix entries must be finite")
    h, w = M.shape
    if h > w:
        raise ValueError(f"expected height <= width, got {h}x{w}")
    A = M @ M.T
    if h == 1:
        return math.sqrt(max(float(A[0, 0]), 0.0))
    tol = max(1e-12, 1e-14 * float(np.linalg.norm(A, "fro")))
    off = math.inf
    for _ in range(max_sweeps):
        # norm of the off-diagonal part, summed directly; the difference of
        # total and diagonal sums of squares cancels catastrophically once
        # the iteration is nearly converged
        strict = A - np.diag(np.diag(A))
        off = float(np.linalg.norm(strict, "fro"))
        if off <= tol:
            break
        for p in range(h - 1):
            for q in range(p + 1, h):
                apq = A[p, q]
                if abs(apq) <= 1e-30:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if theta == 0.0:
                    t = 1.0
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                cos = 1.0 / math.sqrt(t * t + 1.0)
                sin = t * cos
                row_p, row_q = A[p, :].copy(), A[q, :].copy()
                A[p, :] = cos * row_p - sin * row_q
                A[q, :] = sin * row_p + cos * row_q
                col_p, col_q = A[:, p].copy(), A[:, q].copy()
                A[:, p] = cos * col_p - sin * col_q
                A[:, q] = sin * col_p + cos * col_q
                A[p, q] = A[q, p] = 0.0
    else:
        raise SingularityFailure(f"off-diagonal norm {off:.3e} after {max_sweeps} sweeps")
    return math.sqrt(max(float(np.min(np.diag(A))), 0.0))


def equalizability_bound(stats: GroupStatistics) -> EqualizabilityBound:
    """Assemble the error lower bound that every exactly fair post-processed
    predictor must respect.

    The community rows of the constraint matrix are linearly dependent (they
    sum to zero), so the slack-augmented matrix always has a zero singular
    value and the bound typically evaluates to -inf.  It is returned verbatim
    with ``vacuous=True`` rather than clipped or raised on.
    """
    lp = build_strict_lp(stats)
    std = to_standard_form(lp)
    sigma = smallest_singular_value(std.matrix)
    c_inf = float(np.max(np.abs(std.objective)))
    projection = float(np.linalg.norm(std.matrix.T @ std.rhs))
    mass = float(stats.tn.sum() + stats.tp.sum())
    numerator = c_inf * projection
    sigma_sq = sigma * sigma
    if sigma_sq == 0.0:
        bound = mass if numerator == 0.0 else -math.inf
    else:
        with np.errstate(over="ignore"):
            bound = mass - numerator / sigma_sq
    return EqualizabilityBound(
        bound=float(bound),
        sigma_min=sigma,
        c_inf_norm=c_inf,
        projection_norm=projection,
        base_correct_mass=mass,
        vacuous=bool(not math.isfinite(bound) or bound <= 0.0),
    )
