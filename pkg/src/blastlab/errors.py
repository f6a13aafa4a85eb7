"""Exception hierarchy shared across the package.

Everything raised on purpose derives from BlastLabError so the CLI can map
"bad data" to a clean exit code and let genuine bugs surface as tracebacks.
"""

from __future__ import annotations


class BlastLabError(Exception):
    """Base class for all expected failure modes."""


class InvalidAction(BlastLabError):
    """A move was applied to a cell that is not a legal tap."""


class Unresolvable(BlastLabError):
    """A dead board cannot be reshuffled into one with a legal tap."""


class ParseError(BlastLabError):
    """A level file could not be parsed."""

    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class ValidationError(BlastLabError):
    """A level (or other structure) violates one of its invariants."""

    def __init__(self, rule: str):
        super().__init__(rule)
        self.rule = rule


class GenerationFailure(BlastLabError):
    """The level generator exhausted its retry budget."""


class DimensionMismatch(BlastLabError):
    """Board and level (or tensor and network) dimensions disagree."""


class BadPermutation(BlastLabError):
    """A color permutation is not a bijection on the color channels."""


class ShapeError(BlastLabError):
    """Tensor shapes passed to a network op do not match."""


class NoValidAction(BlastLabError):
    """An agent was asked to act on a board with an all-false mask."""


class EnvFault(BlastLabError):
    """An engine error propagated out of an environment step."""


class NaNLoss(BlastLabError):
    """A non-finite loss or gradient appeared during an update."""


class NonFiniteValue(BlastLabError):
    """A NaN or infinity appeared in a network tensor."""


class InsufficientData(BlastLabError):
    """A statistic was requested on records that cannot support it."""


class DegenerateInput(BlastLabError):
    """A correlation was requested on constant or too-short series."""
