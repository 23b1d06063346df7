"""
Testbed Exceptions

One class per failure mode. Everything derives from TestbedError so the CLI can
report any testbed failure uniformly; each class also derives from the closest
builtin so ordinary ``except ValueError`` handling keeps working.
"""

from typing import Any, Dict, Optional


class TestbedError(Exception):
    """Base class for all testbed errors."""

    __test__ = False  # keep pytest from collecting this as a test class


class ConfigurationError(TestbedError, ValueError):
    """A game or experiment configuration violates one of its invariants."""


class EmptySelectorError(ConfigurationError):
    """A novelty target selector matched no properties."""


class IllegalActionError(TestbedError, ValueError):
    """An action was submitted that is not legal in the current state."""


class TerminalStateError(TestbedError, RuntimeError):
    """An operation that needs a live game was called on a finished one."""


class VocabularyError(TestbedError, KeyError):
    """An entity or relation is not part of the registered vocabulary."""


class StaleChangeError(TestbedError, KeyError):
    """A tuple change tried to replace a triple that is not in the graph."""


class SchemaError(TestbedError, ValueError):
    """A value or flattened state does not conform to the state schema."""


class EncoderError(TestbedError, ValueError):
    """The graph encoder received an empty subgraph or mis-shaped input."""


class IngestionError(TestbedError, ValueError):
    """A replay or artifact file could not be read into the expected schema."""


class InvariantViolation(TestbedError, AssertionError):
    """A runtime invariant check failed."""


class TrainingError(TestbedError, RuntimeError):
    """A training step produced a non-finite loss."""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics: Dict[str, Any] = diagnostics or {}
