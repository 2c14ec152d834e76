"""Dense two-phase primal simplex for small box-constrained linear programs.

The implementation keeps every variable inside [lower, upper] (bounds may be
+inf above), realises ranged rows  rhs - r <= A x <= rhs + r  as equalities
A x - s = rhs with slack bounds [-r, r], and uses Bland's smallest-index rule
for both the entering and the leaving choice, so termination is guaranteed.
Basic values and reduced costs are recomputed from a fresh factorisation every
iteration; problem sizes here are tiny, so clarity wins over speed.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional, Tuple

import numpy as np

from .errors import NumericalFailure
from .lp import DenseLp

PIVOT_TOL = 1e-11
FEAS_TOL = 1e-7
OPT_TOL = 1e-9


class SolveStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass(frozen=True)
class LpSolution:
    """Solver output: the structural variable vector (clamped into its box),
    the objective in the problem's native sense, and diagnostics."""

    z: np.ndarray
    objective: float
    status: SolveStatus
    max_constraint_residual: float
    iterations: int
    phase1_objective: float

    def to_json_dict(self) -> Dict[str, object]:
        return {
            "z": self.z.tolist(),
            "objective": self.objective,
            "status": self.status.value,
            "max_constraint_residual": self.max_constraint_residual,
            "iterations": self.iterations,
            "phase1_objective": self.phase1_objective,
        }

    @classmethod
    def from_json_dict(cls, d: Dict[str, object]) -> "LpSolution":
        return cls(
            z=np.asarray(d["z"], dtype=float),
            objective=float(d["objective"]),
            status=SolveStatus(d["status"]),
            max_constraint_residual=float(d["max_constraint_residual"]),
            iterations=int(d["iterations"]),
            phase1_objective=float(d["phase1_objective"]),
        )


@dataclass(frozen=True)
class FeasibilityResult:
    feasible: bool
    phase1_objective: float


class _Unbounded(Exception):
    pass


class _IterationLimit(Exception):
    pass


class _SingularBasis(Exception):
    pass


def _nonbasic_values(lower, upper, at_upper, in_basis):
    vals = np.where(at_upper, upper, lower)
    vals = np.where(in_basis, 0.0, vals)
    return vals


def _simplex(M, rhs, cost, lower, upper, basis, at_upper, fixed, max_iter):
    """Run the bounded simplex to optimality on one phase.

    Mutates ``basis`` and ``at_upper`` in place; returns (x, iterations).
    ``fixed`` marks columns that may never enter (lower == upper).
    """
    m, n_total = M.shape
    in_basis = np.zeros(n_total, dtype=bool)
    in_basis[basis] = True
    iters = 0
    while True:
        if iters > max_iter:
            raise _IterationLimit()
        B = M[:, basis]
        x = _nonbasic_values(lower, upper, at_upper, in_basis)
        try:
            x_b = np.linalg.solve(B, rhs - M @ x)
            y = np.linalg.solve(B.T, cost[basis])
        except np.linalg.LinAlgError:
            raise _SingularBasis()
        x[basis] = x_b
        reduced = cost - M.T @ y
        eligible = ~in_basis & ~fixed & (
            (~at_upper & (reduced < -OPT_TOL)) | (at_upper & (reduced > OPT_TOL))
        )
        candidates = np.nonzero(eligible)[0]
        if candidates.size == 0:
            return x, iters
        q = int(candidates[0])  # Bland: smallest eligible index
        from_lower = not at_upper[q]
        try:
            w = np.linalg.solve(B, M[:, q])
        except np.linalg.LinAlgError:
            raise _SingularBasis()
        # entering from lower moves x_q up (basics move by -w); from upper, down (+w)
        delta = -w if from_lower else w
        t_best = upper[q] - lower[q]
        leave_pos = -1
        hit_upper = False
        for i in range(m):
            d = delta[i]
            bi = basis[i]
            if d < -PIVOT_TOL:
                t = (x_b[i] - lower[bi]) / (-d)
                hits_up = False
            elif d > PIVOT_TOL:
                t = (upper[bi] - x_b[i]) / d
                if not np.isfinite(t):
                    continue
                hits_up = True
            else:
                continue
            t = max(t, 0.0)
            if t < t_best - PIVOT_TOL or (
                t < t_best + PIVOT_TOL
                and leave_pos >= 0
                and bi < basis[leave_pos]
            ):
                t_best = t
                leave_pos = i
                hit_upper = hits_up
        if not np.isfinite(t_best):
            raise _Unbounded()
        iters += 1
        if leave_pos < 0:
            # bound flip: q runs all the way to its other bound
            at_upper[q] = not at_upper[q]
            continue
        leaving = basis[leave_pos]
        basis[leave_pos] = q
        in_basis[q] = True
        in_basis[leaving] = False
        at_upper[leaving] = hit_upper
        at_upper[q] = False


def _drive_out_artificials(M, basis, n_real):
    """Pivot zero-valued basic artificials onto real columns where possible."""
    m = M.shape[0]
    for pos in range(m):
        if basis[pos] < n_real:
            continue
        B = M[:, basis]
        try:
            binv_row = np.linalg.solve(B.T, np.eye(m)[pos])
        except np.linalg.LinAlgError:
            continue
        row_coeffs = binv_row @ M[:, :n_real]
        in_basis = set(basis.tolist())
        for j in range(n_real):
            if j in in_basis:
                continue
            if abs(row_coeffs[j]) > 1e-8:
                basis[pos] = j
                break
        # if no pivot exists the row is linearly dependent; the artificial
        # stays basic at value zero with its bounds pinned to [0, 0]


def _prepare(problem) -> DenseLp:
    dense = problem if isinstance(problem, DenseLp) else problem.to_dense()
    dense.validate()
    if not np.all(np.isfinite(dense.lower)):
        raise NumericalFailure("variables with infinite lower bounds are not supported")
    return dense


def _phase1(dense: DenseLp):
    """Build the extended system and minimise total artificial mass.

    Returns (M, rhs, lower, upper, basis, at_upper, n_struct, n_real,
    phase1_objective, iterations, x).
    """
    A = dense.matrix
    m, n = A.shape
    # append one ranged slack per row:  A z - s = rhs,  s in [-range, range]
    M = np.hstack([A, -np.eye(m)]) if m else A.reshape(0, n)
    lower = np.concatenate([dense.lower, -dense.row_range])
    upper = np.concatenate([dense.upper, dense.row_range])
    n_real = n + m
    at_upper = np.zeros(n_real, dtype=bool)
    x0 = lower.copy()
    resid = dense.rhs - M @ x0
    D = np.diag(np.where(resid >= 0, 1.0, -1.0))
    M1 = np.hstack([M, D])
    lower1 = np.concatenate([lower, np.zeros(m)])
    upper1 = np.concatenate([upper, np.full(m, np.inf)])
    cost1 = np.concatenate([np.zeros(n_real), np.ones(m)])
    basis = np.arange(n_real, n_real + m)
    at_upper1 = np.concatenate([at_upper, np.zeros(m, dtype=bool)])
    fixed1 = upper1 - lower1 <= PIVOT_TOL
    max_iter = 100 * (m + n_real) + 1000
    x, iters = _simplex(M1, dense.rhs, cost1, lower1, upper1, basis, at_upper1, fixed1, max_iter)
    phase1_obj = float(x[n_real:].sum())
    return M1, lower1, upper1, basis, at_upper1, n_real, phase1_obj, iters, x


def feasibility_check(problem) -> FeasibilityResult:
    """Phase-1 only: report whether the constraints admit any point."""
    dense = _prepare(problem)
    try:
        *_rest, phase1_obj, _iters, _x = _phase1(dense)
    except (_Unbounded, _IterationLimit, _SingularBasis) as exc:
        raise NumericalFailure(f"phase 1 failed: {type(exc).__name__}") from None
    return FeasibilityResult(feasible=phase1_obj <= FEAS_TOL, phase1_objective=phase1_obj)


def _residual(dense: DenseLp, z: np.ndarray) -> float:
    if dense.matrix.shape[0] == 0:
        return 0.0
    gap = np.abs(dense.matrix @ z - dense.rhs) - dense.row_range
    return float(np.max(np.clip(gap, 0.0, None)))


def solve(problem, max_iter: Optional[int] = None) -> LpSolution:
    """Solve a problem (LpProblem, StandardLp, MulticlassLp or DenseLp).

    Deterministic: identical inputs produce bit-identical solutions.  Status
    OPTIMAL guarantees the returned point sits inside its bounds and violates
    no row by more than the feasibility tolerance.
    """
    dense = _prepare(problem)
    m, n = dense.matrix.shape
    sign = -1.0 if dense.maximize else 1.0
    if m == 0:
        # pure box problem: each coordinate independently at its best bound
        z = np.where(sign * dense.objective > 0, dense.lower, dense.upper)
        z = np.where(sign * dense.objective == 0, dense.lower, z)
        if not np.all(np.isfinite(z)):
            return LpSolution(
                z=np.clip(np.zeros(n), dense.lower, dense.upper),
                objective=float("nan"),
                status=SolveStatus.NUMERICAL_FAILURE,
                max_constraint_residual=0.0,
                iterations=0,
                phase1_objective=0.0,
            )
        obj = float(dense.objective @ z)
        return LpSolution(z, obj, SolveStatus.OPTIMAL, 0.0, 0, 0.0)

    try:
        M1, lower1, upper1, basis, at_upper1, n_real, phase1_obj, iters1, x = _phase1(dense)
    except (_Unbounded, _IterationLimit, _SingularBasis) as exc:
        raise NumericalFailure(f"phase 1 failed: {type(exc).__name__}") from None

    if phase1_obj > FEAS_TOL:
        z = np.clip(x[:n], dense.lower, dense.upper)
        return LpSolution(
            z=z,
            objective=float("nan"),
            status=SolveStatus.INFEASIBLE,
            max_constraint_residual=_residual(dense, z),
            iterations=iters1,
            phase1_objective=phase1_obj,
        )

    _drive_out_artificials(M1, basis, n_real)
    # artificials stay in the system but are pinned to zero for phase 2
    upper1[n_real:] = 0.0
    lower1[n_real:] = 0.0
    cost2 = np.concatenate([sign * dense.objective, np.zeros(M1.shape[1] - n)])
    fixed2 = upper1 - lower1 <= PIVOT_TOL
    if max_iter is None:
        max_iter = 100 * M1.shape[1] + 1000
    try:
        x, iters2 = _simplex(
            M1, dense.rhs, cost2, lower1, upper1, basis, at_upper1, fixed2, max_iter
        )
    except _Unbounded:
        return LpSolution(
            z=np.clip(x[:n], dense.lower, dense.upper),
            objective=float("nan"),
            status=SolveStatus.NUMERICAL_FAILURE,
            max_constraint_residual=float("nan"),
            iterations=iters1,
            phase1_objective=phase1_obj,
        )
    except (_IterationLimit, _SingularBasis) as exc:
        raise NumericalFailure(f"phase 2 failed: {type(exc).__name__}") from None

    z = np.clip(x[:n], dense.lower, dense.upper)
    residual = _residual(dense, z)
    status = SolveStatus.OPTIMAL if residual <= FEAS_TOL else SolveStatus.NUMERICAL_FAILURE
    return LpSolution(
        z=z,
        objective=float(dense.objective @ z),
        status=status,
        max_constraint_residual=residual,
        iterations=iters1 + iters2,
        phase1_objective=phase1_obj,
    )
