"""Exception types mapped to CLI exit codes."""


class TopicbenchError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(TopicbenchError):
    """Invalid configuration: unknown model name, bad flag combination, malformed config file."""

    exit_code = 2


class DataError(TopicbenchError):
    """Invalid input data: malformed corpus line, missing file, empty vocabulary after filtering."""

    exit_code = 3


class DegenerateModelError(TopicbenchError):
    """Training aborted because the model degenerated beyond what the caller allows."""

    exit_code = 4
