"""Randomized post-processing policies and the streams that drive them.

A binary policy keeps or flips the base prediction per (sensitive, community)
cell; a multiclass policy redraws the emitted class from a per-cell column
distribution over the base prediction.  All randomness flows through
``RngStream``, a counter-based generator addressed by (seed, stream, draw
index), so decision i is the same whether it is drawn alone, in a batch, or
after a restart.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import NonStochasticColumn, ParseError, UnpackDimensionMismatch
from .solver import LpSolution

_COLUMN_TOL = 1e-6


@dataclass
class RngStream:
    """Counter-based uniform stream keyed by (seed, stream).

    ``uniform(i)`` returns draw i directly; ``next_uniform`` walks a cursor.
    The underlying generator emits four 64-bit words per counter step, so
    random access advances the counter by i // 4 and discards i % 4 draws.
    """

    seed: int
    stream: int
    cursor: int = 0

    def __post_init__(self):
        if self.seed < 0 or self.stream < 0:
            raise ValueError("seed and stream id must be nonnegative")

    def _generator(self, skip_blocks: int) -> np.random.Generator:
        bitgen = np.random.Philox(key=[self.seed, self.stream])
        if skip_blocks:
            bitgen = bitgen.advance(skip_blocks)
        return np.random.Generator(bitgen)

    def uniform(self, index: int) -> float:
        if index < 0:
            raise ValueError("draw index must be nonnegative")
        gen = self._generator(index // 4)
        return float(gen.random(index % 4 + 1)[-1])

    def uniforms(self, count: int, start: int = 0) -> np.ndarray:
        """Draws start .. start+count-1 as one array."""
        if count < 0 or start < 0:
            raise ValueError("count and start must be nonnegative")
        if count == 0:
            return np.empty(0)
        gen = self._generator(start // 4)
        head = start % 4
        return gen.random(head + count)[head:]

    def next_uniform(self) -> float:
        value = self.uniform(self.cursor)
        self.cursor += 1
        return value


@dataclass(frozen=True)
class FairPolicy:
    """Binary keep/flip policy.  ``keep0[a, c-1]`` is the probability of
    keeping a base prediction of 0 in cell (a, c); ``keep1`` likewise for 1."""

    k: int
    keep0: np.ndarray
    keep1: np.ndarray

    def __post_init__(self):
        for name in ("keep0", "keep1"):
            arr = getattr(self, name)
            if arr.shape != (2, self.k):
                raise ValueError(f"{name} has shape {arr.shape}, expected (2, {self.k})")
            if np.any(arr < 0) or np.any(arr > 1):
                raise ValueError(f"{name} entries must lie in [0, 1]")

    def keep_probability(self, base: int, sensitive: int, community: int) -> float:
        table = self.keep0 if base == 0 else self.keep1
        return float(table[sensitive, community - 1])

    @classmethod
    def identity(cls, k: int) -> "FairPolicy":
        """Policy that always keeps the base prediction."""
        return cls(k=k, keep0=np.ones((2, k)), keep1=np.ones((2, k)))


@dataclass(frozen=True)
class MulticlassPolicy:
    """Per-cell column-stochastic policy: ``matrices[c-1, a, out, j]`` is the
    probability of emitting class position ``out`` off base class position
    ``j`` in cell (a, c).  ``labels`` maps positions to label values."""

    k: int
    n: int
    labels: Tuple[int, ...]
    matrices: np.ndarray

    def __post_init__(self):
        if self.matrices.shape != (self.k, 2, self.n, self.n):
            raise ValueError(
                f"matrices have shape {self.matrices.shape}, expected {(self.k, 2, self.n, self.n)}"
            )
        sums = self.matrices.sum(axis=2)
        if np.max(np.abs(sums - 1.0)) > 1e-9 or np.any(self.matrices < 0):
            raise ValueError("policy columns must be probability distributions")

    def column(self, base_label: int, sensitive: int, community: int) -> np.ndarray:
        j = self.labels.index(base_label)
        return self.matrices[community - 1, sensitive, :, j]


def _unpack_binary(z: np.ndarray, k: int) -> FairPolicy:
    z = np.clip(z, 0.0, 1.0)
    blocks = z.reshape(k, 2, 2)  # [community, sensitive, base]
    return FairPolicy(k=k, keep0=blocks[:, :, 0].T.copy(), keep1=blocks[:, :, 1].T.copy())


def _unpack_multiclass(z: np.ndarray, k: int, n: int, labels: Sequence[int]) -> MulticlassPolicy:
    cols = np.clip(z, 0.0, 1.0).reshape(k, 2, n, n)  # [c, a, base j, out]
    matrices = np.transpose(cols, (0, 1, 3, 2)).copy()  # -> [c, a, out, j]
    sums = matrices.sum(axis=2)
    worst = float(np.max(np.abs(sums - 1.0)))
    if worst > _COLUMN_TOL:
        bad = np.unravel_index(int(np.argmax(np.abs(sums - 1.0))), sums.shape)
        raise NonStochasticColumn(
            f"cell (a={bad[1]}, c={bad[0] + 1}) base column {bad[2]} sums to {sums[bad]:.9f}"
        )
    matrices = matrices / sums[:, :, None, :]
    return MulticlassPolicy(k=k, n=n, labels=tuple(labels), matrices=matrices)


def policy_from_solution(
    solution: LpSolution,
    k: int,
    n: int = 2,
    labels: Optional[Sequence[int]] = None,
) -> Union[FairPolicy, MulticlassPolicy]:
    """Unpack a solved variable vector into a policy.

    A 4K-vector becomes a binary FairPolicy; a 2KN^2-vector becomes a
    MulticlassPolicy (labels default to 1..N).  Entries are clamped into
    [0, 1]; multiclass columns drifting from unit mass by more than 1e-6 are
    rejected, smaller drift is renormalised away.
    """
    n_vars = solution.z.shape[0]
    if n_vars == 4 * k and n == 2:
        return _unpack_binary(solution.z, k)
    if n_vars == 2 * k * n * n:
        if labels is None:
            labels = tuple(range(1, n + 1))
        if len(labels) != n:
            raise ValueError(f"need {n} labels, got {len(labels)}")
        return _unpack_multiclass(solution.z, k, n, labels)
    raise UnpackDimensionMismatch(n_vars, f"4K={4 * k} or 2KN^2={2 * k * n * n}")


def fair_decide(
    base_prediction: int,
    sensitive: int,
    community: int,
    policy: FairPolicy,
    rng: RngStream,
    index: Optional[int] = None,
) -> int:
    """One randomized decision: keep the base prediction with its cell's keep
    probability, flip otherwise.  ``index`` addresses a specific draw; omitted,
    the stream's cursor advances."""
    u = rng.next_uniform() if index is None else rng.uniform(index)
    # strict comparison so an entry of 0 never keeps even on a draw of exactly 0.0,
    # while an entry of 1 always keeps (draws live in [0, 1))
    if base_prediction == 0:
        return 0 if u < policy.keep_probability(0, sensitive, community) else 1
    return 1 if u < policy.keep_probability(1, sensitive, community) else 0


def fair_decide_multiclass(
    base_label: int,
    sensitive: int,
    community: int,
    policy: MulticlassPolicy,
    rng: RngStream,
    index: Optional[int] = None,
) -> int:
    """Redraw the emitted class from the base prediction's column via the
    inverse CDF in ascending class order."""
    u = rng.next_uniform() if index is None else rng.uniform(index)
    cdf = np.cumsum(policy.column(base_label, sensitive, community))
    # side="right" finds the first class with cdf strictly above u, so
    # zero-probability classes are never emitted even on a draw of exactly 0.0
    out = int(np.searchsorted(cdf, u, side="right"))
    out = min(out, policy.n - 1)  # guard u landing above a short final cum sum
    return policy.labels[out]


def apply_policy(
    predictions: np.ndarray,
    sensitives: np.ndarray,
    communities: np.ndarray,
    policy: FairPolicy,
    rng: RngStream,
) -> np.ndarray:
    """Vectorised batch decisions; sample i consumes draw i of the stream, so
    results agree bit-for-bit with per-sample fair_decide(..., index=i)."""
    predictions = np.asarray(predictions, dtype=np.int64)
    sensitives = np.asarray(sensitives, dtype=np.int64)
    communities = np.asarray(communities, dtype=np.int64)
    u = rng.uniforms(predictions.shape[0])
    keep_p = np.where(
        predictions == 0,
        policy.keep0[sensitives, communities - 1],
        policy.keep1[sensitives, communities - 1],
    )
    return np.where(u < keep_p, predictions, 1 - predictions)


def apply_policy_multiclass(
    predictions: Sequence[int],
    sensitives: Sequence[int],
    communities: Sequence[int],
    policy: MulticlassPolicy,
    rng: RngStream,
) -> np.ndarray:
    u = rng.uniforms(len(predictions))
    out = np.empty(len(predictions), dtype=np.int64)
    for i, (pred, a, c) in enumerate(zip(predictions, sensitives, communities)):
        cdf = np.cumsum(policy.column(int(pred), int(a), int(c)))
        pos = min(int(np.searchsorted(cdf, u[i], side="right")), policy.n - 1)
        out[i] = policy.labels[pos]
    return out


# ---------------------------------------------------------------------------
# plain-text serialization
# ---------------------------------------------------------------------------

_POLICY_TAG = "fairpost-policy 1"


def write_policy(policy: Union[FairPolicy, MulticlassPolicy], path, comments=None) -> None:
    lines: List[str] = [f"# {c}" for c in (comments or [])]
    lines.append(_POLICY_TAG)
    if isinstance(policy, FairPolicy):
        lines.append("kind binary")
        lines.append(f"k {policy.k}")
        for a in (0, 1):
            for c in range(1, policy.k + 1):
                lines.append(
                    f"a {a} c {c} keep0 {policy.keep0[a, c - 1]:.17g} "
                    f"keep1 {policy.keep1[a, c - 1]:.17g}"
                )
    else:
        lines.append("kind multiclass")
        lines.append(f"k {policy.k}")
        lines.append(f"n {policy.n}")
        lines.append("labels " + " ".join(str(v) for v in policy.labels))
        for c in range(1, policy.k + 1):
            for a in (0, 1):
                lines.append(f"block a {a} c {c}")
                for out in range(policy.n):
                    lines.append(
                        " ".join(f"{policy.matrices[c - 1, a, out, j]:.17g}" for j in range(policy.n))
                    )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_policy(path) -> Union[FairPolicy, MulticlassPolicy]:
    with open(path) as fh:
        raw = fh.readlines()
    lines = [
        (i, line.strip())
        for i, line in enumerate(raw, start=1)
        if line.strip() and not line.strip().startswith("#")
    ]
    pos = 0

    def take(section: str) -> Tuple[int, str]:
        nonlocal pos
        if pos >= len(lines):
            raise ParseError(len(raw), section, "unexpected end of file")
        entry = lines[pos]
        pos += 1
        return entry

    lineno, tag = take("header")
    if tag != _POLICY_TAG:
        raise ParseError(lineno, "header", f"unrecognised format tag {tag!r}")
    lineno, kind = take("kind")
    if kind == "kind binary":
        lineno, ktext = take("k")
        try:
            k = int(ktext.split()[1])
        except (IndexError, ValueError):
            raise ParseError(lineno, "k", f"bad line {ktext!r}") from None
        keep0 = np.full((2, k), np.nan)
        keep1 = np.full((2, k), np.nan)
        for _ in range(2 * k):
            lineno, text = take("cell")
            parts = text.split()
            try:
                assert parts[0] == "a" and parts[2] == "c" and parts[4] == "keep0" and parts[6] == "keep1"
                a, c = int(parts[1]), int(parts[3])
                keep0[a, c - 1] = float(parts[5])
                keep1[a, c - 1] = float(parts[7])
            except (AssertionError, IndexError, ValueError):
                raise ParseError(lineno, "cell", f"bad line {text!r}") from None
        if np.any(np.isnan(keep0)) or np.any(np.isnan(keep1)):
            raise ParseError(lineno, "cell", "missing cells")
        return FairPolicy(k=k, keep0=keep0, keep1=keep1)
    if kind == "kind multiclass":
        lineno, ktext = take("k")
        lineno2, ntext = take("n")
        lineno3, ltext = take("labels")
        try:
            k = int(ktext.split()[1])
            n = int(ntext.split()[1])
            labels = tuple(int(v) for v in ltext.split()[1:])
        except (IndexError, ValueError):
            raise ParseError(lineno, "header", "bad multiclass dimensions") from None
        if len(labels) != n:
            raise ParseError(lineno3, "labels", f"expected {n} labels, got {len(labels)}")
        matrices = np.full((k, 2, n, n), np.nan)
        for _ in range(2 * k):
            lineno, text = take("block")
            parts = text.split()
            try:
                assert parts[0] == "block" and parts[1] == "a" and parts[3] == "c"
                a, c = int(parts[2]), int(parts[4])
            except (AssertionError, IndexError, ValueError):
                raise ParseError(lineno, "block", f"bad line {text!r}") from None
            for out in range(n):
                lineno, row = take("block")
                vals = row.split()
                if len(vals) != n:
                    raise ParseError(lineno, "block", f"expected {n} values, got {len(vals)}")
                try:
                    matrices[c - 1, a, out] = [float(v) for v in vals]
                except ValueError as exc:
                    raise ParseError(lineno, "block", str(exc)) from None
        if np.any(np.isnan(matrices)):
            raise ParseError(lineno, "block", "missing blocks")
        return MulticlassPolicy(k=k, n=n, labels=labels, matrices=matrices)
    raise ParseError(lineno, "kind", f"unrecognised policy kind {kind!r}")
