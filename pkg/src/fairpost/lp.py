"""Linear programs whose optima are randomized fair post-processing policies.

A binary problem has one variable per (base prediction, sensitive value,
community) cell: z_j^{ac} is the probability that the post-processed predictor
keeps base prediction j in cell (a, c).  Variables are laid out per community
in blocks of four,

    [keep-0 | a=0,  keep-1 | a=0,  keep-0 | a=1,  keep-1 | a=1]

with communities ascending, so the full vector has length 4K.  The first
constraint row pins the true-positive-rate gap between the sensitive groups;
each remaining row pins one community's error against the across-community
mean.  Minimising the objective then minimises the post-processed error, up to
a constant equal to the base predictor's correct mass.
"""

from dataclasses import dataclass, field
from typing import IO, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import (
    DegenerateGroup,
    NegativeRelaxation,
    ParseError,
    RelaxedInputUnsupported,
    ZeroCommunityWeight,
)
from .stats import GroupStatistics, MulticlassStats


# ---------------------------------------------------------------------------
# containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DenseLp:
    """Solver-facing form: minimise/maximise objective . x subject to

        rhs - row_range <= matrix @ x <= rhs + row_range,   lower <= x <= upper.

    Rows with row_range 0 are equalities.  ``upper`` may contain +inf.
    """

    objective: np.ndarray
    matrix: np.ndarray
    rhs: np.ndarray
    row_range: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    maximize: bool = False

    def validate(self) -> None:
        m, n = self.matrix.shape
        if self.objective.shape != (n,) or self.rhs.shape != (m,) or self.row_range.shape != (m,):
            raise ValueError("inconsistent problem dimensions")
        if self.lower.shape != (n,) or self.upper.shape != (n,):
            raise ValueError("inconsistent bound dimensions")
        if np.any(self.row_range < 0):
            raise ValueError("row ranges must be nonnegative")
        if np.any(self.lower > self.upper):
            raise ValueError("crossed variable bounds")


@dataclass(frozen=True)
class LpProblem:
    """Binary fairness program over K communities (4K variables in [0, 1]).

    ``row_range[0]`` relaxes the rate-gap row, the remaining entries relax the
    per-community error rows; zeros mean exact equality.  ``objective_offset``
    is the constant making objective . z + offset the post-processed error.
    """

    k: int
    objective: np.ndarray
    matrix: np.ndarray
    rhs: np.ndarray
    row_range: np.ndarray
    objective_offset: float

    @property
    def n_vars(self) -> int:
        return 4 * self.k

    def is_relaxed(self) -> bool:
        return bool(np.any(self.row_range > 0))

    def to_dense(self) -> DenseLp:
        n = self.n_vars
        return DenseLp(
            objective=self.objective.copy(),
            matrix=self.matrix.copy(),
            rhs=self.rhs.copy(),
            row_range=self.row_range.copy(),
            lower=np.zeros(n),
            upper=np.ones(n),
            maximize=False,
        )


@dataclass(frozen=True)
class StandardLp:
    """Equality form over nonnegative variables: the 4K box variables plus 4K
    slacks, equality rows [original rows; z + s = 1]."""

    k: int
    objective: np.ndarray
    matrix: np.ndarray
    rhs: np.ndarray

    def to_dense(self) -> DenseLp:
        n = self.matrix.shape[1]
        return DenseLp(
            objective=self.objective.copy(),
            matrix=self.matrix.copy(),
            rhs=self.rhs.copy(),
            row_range=np.zeros(self.matrix.shape[0]),
            lower=np.zeros(n),
            upper=np.full(n, np.inf),
            maximize=False,
        )


@dataclass(frozen=True)
class MulticlassLp:
    """N-class fairness program.  Variable (c, a, j, k) — community, sensitive
    value, base prediction, emitted class, all ascending with the emitted class
    fastest — holds Pr(output k | base j, a, c).  Maximised objective is the
    post-processed accuracy; rows pin the protected-outcome rate gap, the
    per-community accuracy deviations, and one distribution row per column
    group (c, a, j)."""

    k: int
    n: int
    labels: Tuple[int, ...]
    objective: np.ndarray
    matrix: np.ndarray
    rhs: np.ndarray

    @staticmethod
    def var_index(n: int, c: int, a: int, j: int, out: int) -> int:
        """Flat index for community c (1-based), sensitive a, base class j and
        emitted class ``out`` (both 0-based positions in ``labels``)."""
        return (((c - 1) * 2 + a) * n + j) * n + out

    @property
    def n_vars(self) -> int:
        return 2 * self.k * self.n * self.n

    def to_dense(self) -> DenseLp:
        n = self.n_vars
        return DenseLp(
            objective=self.objective.copy(),
            matrix=self.matrix.copy(),
            rhs=self.rhs.copy(),
            row_range=np.zeros(self.matrix.shape[0]),
            lower=np.zeros(n),
            upper=np.ones(n),
            maximize=True,
        )


# ---------------------------------------------------------------------------
# binary construction
# ---------------------------------------------------------------------------

def _coefficient_blocks(stats: GroupStatistics):
    """Per-community pieces of the program.

    Returns (c, m, n_blocks, b) where c is the 4K objective, m the 4K rate-gap
    row, n_blocks[i] the error row block for community i+1 (c block over p_i)
    and b[i] the constant making n_blocks[i] . z_i + b[i] that community's
    post-processed error.
    """
    k = stats.k
    alpha, beta = stats.alpha, stats.beta
    if alpha <= 0.0 or beta <= 0.0:
        raise DegenerateGroup(f"rate rows undefined for alpha={alpha} beta={beta}")
    c = np.empty(4 * k)
    m = np.empty(4 * k)
    n_blocks = np.empty((k, 4))
    b = np.empty(k)
    for i in range(k):
        if stats.p[i] <= 0.0:
            raise ZeroCommunityWeight(i + 1)
        fn0, tn0, fp0, tp0 = stats.fn[0, i], stats.tn[0, i], stats.fp[0, i], stats.tp[0, i]
        fn1, tn1, fp1, tp1 = stats.fn[1, i], stats.tn[1, i], stats.fp[1, i], stats.tp[1, i]
        block = np.array([fn0 - tn0, fp0 - tp0, fn1 - tn1, fp1 - tp1])
        c[4 * i: 4 * i + 4] = block
        n_blocks[i] = block / stats.p[i]
        m[4 * i: 4 * i + 4] = [-fn0 / alpha, tp0 / alpha, fn1 / beta, -tp1 / beta]
        b[i] = (tn0 + tp0 + tn1 + tp1) / stats.p[i]
    return c, m, n_blocks, b


def build_strict_lp(stats: GroupStatistics) -> LpProblem:
    """Program whose feasible points satisfy the rate gap and all community
    error deviations exactly (all row ranges zero)."""
    return build_relaxed_lp(stats, 0.0, 0.0)


def build_relaxed_lp(stats: GroupStatistics, eps: float, delta: float) -> LpProblem:
    """Program allowing |rate gap| <= eps and per-community |error deviation|
    <= delta.  eps = delta = 0 recovers the strict program."""
    if eps < 0 or delta < 0:
        raise NegativeRelaxation(eps, delta)
    stats.validate()
    k = stats.k
    c, m, n_blocks, b = _coefficient_blocks(stats)
    matrix = np.zeros((k + 1, 4 * k))
    matrix[0] = m
    for row in range(k):
        for i in range(k):
            coef = -(k - 1) / k if i == row else 1.0 / k
            matrix[row + 1, 4 * i: 4 * i + 4] = coef * n_blocks[i]
    rhs = np.empty(k + 1)
    rhs[0] = float(np.sum(stats.fn[1] / stats.beta - stats.fn[0] / stats.alpha))
    rhs[1:] = b - b.mean()
    row_range = np.concatenate(([eps], np.full(k, delta)))
    offset = float(stats.tn.sum() + stats.tp.sum())
    return LpProblem(
        k=k,
        objective=c,
        matrix=matrix,
        rhs=rhs,
        row_range=row_range,
        objective_offset=offset,
    )


def to_standard_form(lp: LpProblem) -> StandardLp:
    """Rewrite a strict program into equality form over nonnegative variables
    by adjoining one slack per box variable (z + s = 1)."""
    if lp.is_relaxed():
        raise RelaxedInputUnsupported()
    k = lp.k
    n = 4 * k
    matrix = np.zeros((k + 1 + n, 2 * n))
    matrix[: k + 1, :n] = lp.matrix
    matrix[k + 1:, :n] = np.eye(n)
    matrix[k + 1:, n:] = np.eye(n)
    rhs = np.concatenate([lp.rhs, np.ones(n)])
    objective = np.concatenate([lp.objective, np.zeros(n)])
    return StandardLp(k=k, objective=objective, matrix=matrix, rhs=rhs)


# ---------------------------------------------------------------------------
# multiclass construction
# ---------------------------------------------------------------------------

def build_multiclass_lp(ms: MulticlassStats) -> MulticlassLp:
    """N-class program: maximise post-processed accuracy subject to an equal
    protected-outcome rate across sensitive groups, equal per-community
    accuracy, and each (c, a, j) column forming a distribution."""
    ms.validate()
    if ms.alpha <= 0.0 or ms.beta <= 0.0:
        raise DegenerateGroup(f"rate row undefined for alpha={ms.alpha} beta={ms.beta}")
    k, n = ms.k, ms.n
    n_vars = 2 * k * n * n
    eo = ms.eo_index()
    idx = lambda c, a, j, out: MulticlassLp.var_index(n, c, a, j, out)

    objective = np.zeros(n_vars)
    for c in range(1, k + 1):
        for a in (0, 1):
            for j in range(n):
                for out in range(n):
                    # mass that becomes correct when class `out` is emitted off base j
                    objective[idx(c, a, j, out)] = ms.joint[out, j, a, c - 1]

    n_rows = 1 + k + 2 * k * n
    matrix = np.zeros((n_rows, n_vars))
    rhs = np.zeros(n_rows)

    for c in range(1, k + 1):
        for j in range(n):
            matrix[0, idx(c, 0, j, eo)] = float(ms.joint[eo, j, 0, c - 1]) / ms.alpha
            matrix[0, idx(c, 1, j, eo)] = -float(ms.joint[eo, j, 1, c - 1]) / ms.beta

    for q in range(1, k + 1):
        row = q
        for c in range(1, k + 1):
            if ms.p[c - 1] <= 0.0:
                raise ZeroCommunityWeight(c)
            weight = (1.0 if c == q else 0.0) - 1.0 / k
            for a in (0, 1):
                for j in range(n):
                    for out in range(n):
                        matrix[row, idx(c, a, j, out)] = (
                            weight * ms.joint[out, j, a, c - 1] / ms.p[c - 1]
                        )

    row = 1 + k
    for c in range(1, k + 1):
        for a in (0, 1):
            for j in range(n):
                for out in range(n):
                    matrix[row, idx(c, a, j, out)] = 1.0
                rhs[row] = 1.0
                row += 1

    return MulticlassLp(
        k=k, n=n, labels=ms.labels, objective=objective, matrix=matrix, rhs=rhs
    )


# ---------------------------------------------------------------------------
# plain-text serialization
# ---------------------------------------------------------------------------

_FORMAT_TAG = "fairpost-lp 1"


def _fmt(x: float) -> str:
    if np.isposinf(x):
        return "inf"
    if np.isneginf(x):
        return "-inf"
    return f"{x:.17g}"


def write_lp(problem, path, comments: Optional[Sequence[str]] = None) -> None:
    """Write a problem (anything with to_dense, or a DenseLp) to ``path``.

    The format is line-oriented: a tag line, the optimisation sense, the
    dimensions, then dense sections ``objective``, ``matrix`` (one row per
    line), ``rhs``, ``range``, ``lower`` and ``upper``, each section preceded
    by its name.  Lines starting with '#' are comments and ignored on read.
    """
    dense = problem if isinstance(problem, DenseLp) else problem.to_dense()
    dense.validate()
    m, n = dense.matrix.shape
    lines: List[str] = []
    for text in comments or []:
        lines.append(f"# {text}")
    lines.append(_FORMAT_TAG)
    lines.append("sense " + ("maximize" if dense.maximize else "minimize"))
    lines.append(f"rows {m} cols {n}")
    lines.append("objective")
    lines.append(" ".join(_fmt(v) for v in dense.objective))
    lines.append("matrix")
    for i in range(m):
        lines.append(" ".join(_fmt(v) for v in dense.matrix[i]))
    for name, vec in (
        ("rhs", dense.rhs),
        ("range", dense.row_range),
        ("lower", dense.lower),
        ("upper", dense.upper),
    ):
        lines.append(name)
        lines.append(" ".join(_fmt(v) for v in vec))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_lp(path) -> DenseLp:
    """Parse a file produced by write_lp back into a DenseLp."""
    with open(path) as fh:
        raw = fh.readlines()
    lines: List[Tuple[int, str]] = []
    for i, line in enumerate(raw, start=1):
        stripped = line.strip()
        if stripped and not stripped.startswith("#"):
            lines.append((i, stripped))
    pos = 0

    def take(section: str) -> Tuple[int, str]:
        nonlocal pos
        if pos >= len(lines):
            raise ParseError(len(raw), section, "unexpected end of file")
        entry = lines[pos]
        pos += 1
        return entry

    def parse_vector(section: str, expact: int) -> np.ndarray:
        lineno, text = take(section)
        parts = text.split()
        if len(parts) != expact:
            raise ParseError(lineno, section, f"expected {expact} values, got {len(parts)}")
        try:
            return np.array([float(p) for p in parts])
        except ValueError as exc:
            raise ParseError(lineno, section, str(exc)) from None

    lineno, tag = take("header")
    if tag != _FORMAT_TAG:
        raise ParseError(lineno, "header", f"unrecognised format tag {tag!r}")
    lineno, sense = take("sense")
    if sense not in ("sense minimize", "sense maximize"):
        raise ParseError(lineno, "sense", f"bad sense line {sense!r}")
    maximize = sense.endswith("maximize")
    lineno, dims = take("dimensions")
    parts = dims.split()
    if len(parts) != 4 or parts[0] != "rows" or parts[2] != "cols":
        raise ParseError(lineno, "dimensions", f"bad dimension line {dims!r}")
    try:
        m, n = int(parts[1]), int(parts[3])
    except ValueError:
        raise ParseError(lineno, "dimensions", f"bad dimension line {dims!r}") from None
    if m < 0 or n <= 0:
        raise ParseError(lineno, "dimensions", f"nonpositive dimensions {m}x{n}")

    def expect_name(section: str) -> None:
        lineno, text = take(section)
        if text != section:
            raise ParseError(lineno, section, f"expected section {section!r}, got {text!r}")

    expect_name("objective")
    objective = parse_vector("objective", n)
    expect_name("matrix")
    matrix = np.empty((m, n))
    for i in range(m):
        matrix[i] = parse_vector("matrix", n)
    expect_name("rhs")
    rhs = parse_vector("rhs", m)
    expect_name("range")
    row_range = parse_vector("range", m)
    expect_name("lower")
    lower = parse_vector("lower", n)
    expect_name("upper")
    upper = parse_vector("upper", n)
    dense = DenseLp(
        objective=objective,
        matrix=matrix,
        rhs=rhs,
        row_range=row_range,
        lower=lower,
        upper=upper,
        maximize=maximize,
    )
    try:
        dense.validate()
    except ValueError as exc:
        raise ParseError(0, "problem", str(exc)) from None
    return dense
