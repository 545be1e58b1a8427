"""
Exceptions Module

Error hierarchy shared by ingestion, geometry, models, training and evaluation.
Library code raises these; only the command line turns them into exit codes.
"""

from typing import Any, Optional, Tuple


class SphereKGEError(Exception):
    """Base class for every error raised by the toolkit."""


class DatasetFileError(SphereKGEError):
    """A split file is missing or unreadable."""

    def __init__(self, path: Any, reason: str = "file not found"):
        self.path = str(path)
        self.reason = reason
        super().__init__(f"Cannot read dataset file {self.path}: {reason}")


class MalformedTripleError(SphereKGEError, ValueError):
    """A line of a triple file does not hold exactly three tab-separated labels."""

    def __init__(self, path: Any, line: int, n_fields: int, detail: Optional[str] = None):
        self.path = str(path)
        self.line = line
        self.n_fields = n_fields
        message = f"{self.path}: line {line} has {n_fields} tab-separated field(s), expected 3"
        if detail:
            message = f"{message} ({detail})"
        super().__init__(message)


class EmptyDatasetError(SphereKGEError, ValueError):
    """No triples were supplied where at least one is required."""


class UnknownLabelError(SphereKGEError, KeyError):
    """A label is not part of the vocabulary."""

    def __init__(self, label: str, position: Optional[int] = None):
        self.label = label
        self.position = position
        where = f" at position {position}" if position is not None else ""
        super().__init__(f"Unknown label '{label}'{where}")

    def __str__(self) -> str:
        return self.args[0]


class DuplicateTripleError(SphereKGEError, ValueError):
    """The same triple occurs twice inside one split."""

    def __init__(self, triple: Tuple, first_position: int, second_position: int):
        self.triple = triple
        self.first_position = first_position
        self.second_position = second_position
        super().__init__(
            f"Duplicate triple {triple} at positions {first_position} and {second_position}"
        )


class NonFiniteInputError(SphereKGEError, ValueError):
    """An input vector contains NaN or infinity."""


class DimensionMismatchError(SphereKGEError, ValueError):
    """Two arrays that must agree in shape do not."""

    def __init__(self, expected: Any, actual: Any, what: str = "array"):
        self.expected = expected
        self.actual = actual
        super().__init__(f"Dimension mismatch for {what}: expected {expected}, got {actual}")


class DegenerateProjectionError(SphereKGEError, ValueError):
    """The projection gradient is undefined because the translated point is zero."""


class ModelKindError(SphereKGEError, ValueError):
    """An operation was called on a model of the wrong kind."""

    def __init__(self, expected: Any, actual: Any):
        self.expected = expected
        self.actual = actual
        super().__init__(f"Operation requires model kind {expected}, got {actual}")


class EntityIndexError(SphereKGEError, IndexError):
    """An entity or relation index falls outside the parameter table."""

    def __init__(self, index: int, limit: int, what: str = "entity"):
        self.index = index
        self.limit = limit
        super().__init__(f"{what} index {index} out of range [0, {limit})")


class NonFiniteGradientError(SphereKGEError, ArithmeticError):
    """An optimizer step received NaN or infinite gradients."""

    def __init__(self, parameter: str):
        self.parameter = parameter
        super().__init__(f"Non-finite gradient for parameter '{parameter}'")


class NonFiniteLossError(SphereKGEError, ArithmeticError):
    """The margin loss became NaN or infinite during training."""

    def __init__(self, epoch: int, batch: int):
        self.epoch = epoch
        self.batch = batch
        super().__init__(f"Non-finite loss at epoch {epoch}, batch {batch}")


class CheckpointVersionError(SphereKGEError):
    """A checkpoint was written with an unsupported format version."""

    def __init__(self, expected: int, found: Any):
        self.expected = expected
        self.found = found
        super().__init__(f"Checkpoint format version {found} is not supported (expected {expected})")


class CheckpointSizeError(SphereKGEError):
    """The checkpoint payload does not match the size its header implies."""

    def __init__(self, expected_bytes: int, actual_bytes: int):
        self.expected_bytes = expected_bytes
        self.actual_bytes = actual_bytes
        super().__init__(
            f"Checkpoint payload holds {actual_bytes} bytes, header implies {expected_bytes}"
        )


class CheckpointMismatchError(SphereKGEError):
    """A checkpoint does not fit the dataset it is evaluated on."""

    def __init__(self, what: str, expected: Any, actual: Any):
        self.what = what
        self.expected = expected
        self.actual = actual
        super().__init__(f"Checkpoint {what} mismatch: dataset expects {expected}, checkpoint has {actual}")


class MissingCategoryError(SphereKGEError, KeyError):
    """A relation in the evaluated split has no category assigned."""

    def __init__(self, relation: int):
        self.relation = relation
        super().__init__(f"No relation category for relation id {relation}")

    def __str__(self) -> str:
        return self.args[0]


class QueryMismatchError(SphereKGEError, ValueError):
    """Two rank lists were not produced from the same query sequence."""

    def __init__(self, fingerprint_a: str, fingerprint_b: str):
        self.fingerprint_a = fingerprint_a
        self.fingerprint_b = fingerprint_b
        super().__init__(
            f"Rank lists cover different queries (fingerprints {fingerprint_a[:12]} vs {fingerprint_b[:12]})"
        )


class ConfigError(SphereKGEError, ValueError):
    """A configuration key is unknown or its value has the wrong type."""

    def __init__(self, key: str, value: Any, reason: str = "invalid value"):
        self.key = key
        self.value = value
        super().__init__(f"Config key '{key}'={value!r}: {reason}")
