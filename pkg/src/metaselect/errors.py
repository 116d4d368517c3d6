"""Exception hierarchy shared by all pipeline stages."""


class MetaselectError(Exception):
    """Base class for all toolkit errors."""


class ParseError(MetaselectError):
    """A ratings row could not be parsed; carries the 1-based line number."""

    def __init__(self, line_no, message):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class EmptyDatasetError(MetaselectError):
    """Input file or post-filter dataset contains no interactions."""


class SplitError(MetaselectError):
    """A user has too few interactions to split into train/val/test."""


class DivergenceError(MetaselectError):
    """Training produced a non-finite value."""


class ConfigError(MetaselectError):
    """Pipeline configuration is invalid (exit code 1)."""


class StageOrderError(MetaselectError):
    """A stage was run before its prerequisites (exit code 2)."""


class ArtifactIntegrityError(MetaselectError):
    """An artifact hash does not match the run manifest (exit code 3)."""
