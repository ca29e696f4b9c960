"""Exception hierarchy shared by every pipeline stage."""

from __future__ import annotations


class KcagError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(KcagError):
    """Malformed input file. Carries 1-based line/column when known."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None,
                 source: str | None = None):
        self.line = line
        self.column = column
        self.source = source
        where = ""
        if source:
            where = source
        if line is not None:
            where += f":{line}" + (f":{column}" if column is not None else "")
        super().__init__(f"{where}: {message}" if where else message)


class SchemaError(KcagError):
    """Organization description violates the documented schema."""


class DanglingReference(KcagError):
    """A cross-reference in the organization description points nowhere."""


class RuleSyntaxError(ParseError):
    """Ruleset text does not follow the rule grammar."""


class RangeRestrictionError(ParseError):
    """A head variable does not occur in the clause body."""


class ArityError(KcagError):
    """A predicate is used with two different arities in one run."""


class ResourceLimit(KcagError):
    """Saturation derived more facts than the configured cap."""


class TransitionViolation(KcagError):
    """A technique firing connects asset categories that may not be chained."""


class UnannotatedRule(KcagError):
    """A rule without technique annotation or helper marker fired on a goal derivation."""


class PhaseConflict(KcagError):
    """No ordering-consistent phase choice exists for some technique."""

    def __init__(self, message: str, spine: tuple[int, ...] = ()):
        self.spine = spine
        super().__init__(message)


class Uncoverable(KcagError):
    """Some attack path contains no technique that a countermeasure can block."""

    def __init__(self, message: str, paths: tuple = ()):
        self.paths = paths
        super().__init__(message)
