"""Exception hierarchy shared by every anchorparse module."""

from __future__ import annotations


class AnchorParseError(Exception):
    """Base class for all errors raised by the package."""

    category = "internal"
    exit_code = 1


class ConfigError(AnchorParseError):
    """A configuration value is missing, malformed, or infeasible."""

    category = "config-invalid"
    exit_code = 4


class ShapeError(AnchorParseError):
    """Tensor operands have incompatible shapes."""


class ContractError(AnchorParseError):
    """A caller violated an operation's precondition."""


class SchemaError(AnchorParseError):
    """A knowledge base, relational schema, or schema document is invalid."""

    category = "data-invalid"
    exit_code = 5


class CorpusError(AnchorParseError):
    """A corpus directory or record does not validate."""

    category = "data-invalid"
    exit_code = 5


class IngestError(AnchorParseError):
    """Too many malformed records in an external dataset."""

    category = "data-invalid"
    exit_code = 5


class CheckpointError(AnchorParseError):
    """A checkpoint file cannot be read or has an unsupported version."""

    category = "data-invalid"
    exit_code = 5


class TrainingDivergedError(AnchorParseError):
    """The training loss became NaN or infinite."""

    category = "diverged"
    exit_code = 6

    def __init__(self, message: str, dump_path: str | None = None):
        super().__init__(message)
        self.dump_path = dump_path


class QueryError(AnchorParseError):
    """Text could not be read as a logical form."""

    def __init__(self, message: str, offset: int):
        super().__init__(message)
        self.offset = offset


class LexicalError(QueryError):
    """A character sequence matches no token of the lexicon."""

    def __init__(self, offset: int, text: str):
        super().__init__(f"unknown token {text!r} at offset {offset}", offset)
        self.text = text


class QuerySyntaxError(QueryError):
    """The token stream does not follow the grammar."""

    def __init__(self, expected: str, found: str, offset: int, token_number: int):
        super().__init__(
            f"syntax error at token {token_number} (offset {offset}): "
            f"expected {expected}, found {found}",
            offset,
        )
        self.expected = expected
        self.found = found
        self.token_number = token_number


class SchemaReferenceError(AnchorParseError):
    """A logical form names a table, column, label, or property absent from the schema."""

    def __init__(self, identifier: str, role: str):
        super().__init__(f"unknown {role} {identifier!r}")
        self.identifier = identifier
        self.role = role


class ExecutionError(AnchorParseError):
    """A logical form is well-formed but cannot be evaluated (for example SUM over text)."""
