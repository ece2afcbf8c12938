"""Exception taxonomy shared across the package."""

from __future__ import annotations


class RecurseError(Exception):
    """Base class for all errors raised by this package."""


class InputError(RecurseError):
    """Malformed task input (bad digit-string, out-of-range element, empty array)."""


class ContractViolation(RecurseError):
    """An operation was invoked outside its precondition."""


class TemplateError(RecurseError):
    """A prompt template contained a placeholder that could not be resolved."""


class ExtractionError(RecurseError):
    """No answer could be extracted from a transcript."""


class DatasetError(RecurseError):
    """Dataset generation or persistence failure (carries context such as line numbers)."""


class BackendError(RecurseError):
    """A model backend failed: transport error, bad status, or unparseable context."""


class ExecutorError(RecurseError):
    """Recursive generation failed; ``trace`` holds the partial trace when available."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace


class DepthExceeded(ExecutorError):
    pass


class ContextBudgetExceeded(ExecutorError):
    pass


class GenerationBudgetExceeded(ExecutorError):
    pass


class MalformedOutput(ExecutorError):
    """The backend produced neither a call nor an answer, even after a retry."""
