"""Exception types shared across the package."""


class FairpostError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(FairpostError):
    """Invalid experiment configuration or CLI usage."""


class DataError(FairpostError):
    """Base class for ingestion / dataset construction failures."""


class EmptyDataset(DataError):
    def __init__(self):
        super().__init__("dataset contains no records")


class EmptyCommunity(DataError):
    def __init__(self, community: int):
        self.community = community
        super().__init__(f"community {community} has no records")


class LengthMismatch(DataError):
    def __init__(self, n_predictions: int, n_records: int):
        super().__init__(
            f"got {n_predictions} predictions for {n_records} records"
        )


class DegenerateGroup(DataError):
    """A sensitive/label cell needed for rate normalisation has zero mass."""


class ZeroCommunityWeight(DataError):
    def __init__(self, community: int):
        self.community = community
        super().__init__(f"community {community} has zero weight")


class CommunityOutOfRange(DataError):
    def __init__(self, community, k: int):
        super().__init__(f"community id {community!r} outside 1..{k}")


class NegativeRelaxation(ConfigError):
    def __init__(self, eps: float, delta: float):
        super().__init__(f"relaxation bounds must be >= 0, got eps={eps} delta={delta}")


class RelaxedInputUnsupported(FairpostError):
    def __init__(self):
        super().__init__("standard-form conversion accepts only unrelaxed problems")


class SolverError(FairpostError):
    """Base class for optimisation failures."""


class NumericalFailure(SolverError):
    """The solver could not certify an optimum (cycling guard, residual blow-up,
    or an unbounded ray on a malformed input)."""


class NonStochasticColumn(FairpostError):
    def __init__(self, detail: str):
        super().__init__(f"policy column is not a probability distribution: {detail}")


class UnpackDimensionMismatch(FairpostError):
    def __init__(self, n_vars: int, expected: str):
        super().__init__(f"solution has {n_vars} variables, expected {expected}")


class SingularityFailure(SolverError):
    def __init__(self, detail: str):
        super().__init__(f"eigenvalue iteration failed to converge: {detail}")


class ParseError(DataError):
    def __init__(self, line: int, column: str, detail: str):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column!r}: {detail}")


class SchemaViolation(DataError):
    pass


class UncoveredRecord(DataError):
    def __init__(self, detail: str):
        super().__init__(f"record matches no partition rule: {detail}")


class OverlappingRules(DataError):
    def __init__(self, first: int, second: int, detail: str):
        super().__init__(
            f"partition rules {first} and {second} both match a record: {detail}"
        )


class InsufficientPool(DataError):
    def __init__(self, detail: str):
        super().__init__(f"base pool cannot supply a requested cell: {detail}")


class ArchitectureMismatch(FairpostError):
    def __init__(self, detail: str):
        super().__init__(f"model architectures differ: {detail}")


class DimensionMismatch(FairpostError):
    def __init__(self, got, expected):
        super().__init__(f"input dimension {got} does not match model ({expected})")


class EmptyShard(DataError):
    def __init__(self, community: int):
        super().__init__(f"client shard for community {community} is empty")


class MissingArtifact(DataError):
    def __init__(self, path):
        super().__init__(f"expected artifact not found: {path}")


class BundleMismatch(DataError):
    def __init__(self, detail: str):
        super().__init__(f"stored results do not match recomputation: {detail}")
