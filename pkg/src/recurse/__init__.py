"""recurse: recursive self-calling inference for compositional tasks.

Subsystems: ``tasks`` (oracles and decomposition), ``formats`` (training-text
grammar), ``parser`` (call/return markers), ``datagen`` (dataset pipeline),
``executor`` (recursive generation), ``backends`` (oracle, fault injector,
HTTP client), ``evaluate`` (sweeps, error taxonomy, statistics), ``cli``.
"""

from . import backends, datagen, evaluate, executor, formats, parser, tasks
from .errors import (
    BackendError,
    ContextBudgetExceeded,
    ContractViolation,
    DatasetError,
    DepthExceeded,
    ExecutorError,
    ExtractionError,
    GenerationBudgetExceeded,
    InputError,
    MalformedOutput,
    RecurseError,
    TemplateError,
)

__version__ = "0.1.0"

__all__ = [
    "backends",
    "datagen",
    "evaluate",
    "executor",
    "formats",
    "parser",
    "tasks",
    "BackendError",
    "ContextBudgetExceeded",
    "ContractViolation",
    "DatasetError",
    "DepthExceeded",
    "ExecutorError",
    "ExtractionError",
    "GenerationBudgetExceeded",
    "InputError",
    "MalformedOutput",
    "RecurseError",
    "TemplateError",
    "__version__",
]
