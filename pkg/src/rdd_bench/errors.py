"""Exception types shared across the toolkit."""


class ToolkitError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(ToolkitError):
    """Input text could not be parsed (malformed XML, JSONL, or submission row)."""


class SchemaError(ToolkitError):
    """Input parsed, but a required element or field is missing or invalid."""


class InvariantError(ToolkitError):
    """A domain type invariant was violated."""


class DatasetError(ToolkitError):
    """Dataset-level failure, such as an unknown or duplicate image id."""


class EmptyDatasetError(DatasetError):
    """A scan produced no usable image records."""


class EncodingError(ToolkitError):
    """A damage class has no token under the requested label encoding."""
