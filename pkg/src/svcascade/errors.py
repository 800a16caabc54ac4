"""Exception hierarchy shared across the toolkit.

Exit-code mapping for the CLI: validation problems are 1, missing
prerequisite artifacts are 2, numeric failures are 3.
"""


class ToolError(Exception):
    exit_code = 1


class ValidationError(ToolError):
    """Bad arguments, malformed configs/files, or violated contracts."""

    exit_code = 1


class CapacityError(ValidationError):
    """A dataset cannot supply what was requested (names the shortfall)."""


class DependencyError(ToolError):
    """A required artifact is missing; message names the producing command."""

    exit_code = 2


class NumericError(ToolError):
    """Non-finite values encountered during computation."""

    exit_code = 3
