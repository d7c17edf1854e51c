"""Exception types shared across the toolkit."""


class ScenForgeError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(ScenForgeError):
    """Bad or missing configuration (files, flags, schema)."""


class ParseError(ScenForgeError):
    """Malformed input text; carries a 1-based line/column where known."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        if line is not None:
            where = f"line {line}"
            if column is not None:
                where += f", column {column}"
            message = f"{message} ({where})"
        super().__init__(message)


class IpsParseError(ParseError):
    """Interaction-script text that does not follow the grammar."""


class DslParseError(ParseError):
    """Test-case text that does not follow the statement grammar."""


class ArityError(DslParseError):
    """A statement with the wrong parameter set for its kind."""


class OutOfRangeError(ScenForgeError):
    """A concrete value that falls outside its declared range."""


class UnknownEgoError(ScenForgeError):
    """Ego substitution asked for a vehicle with no constructor."""


class MissingDefaultError(ScenForgeError):
    """No default range registered for a statement parameter."""


class EmptyReportError(ScenForgeError):
    """An empty or whitespace-only accident report."""


class IllegalIpsError(ScenForgeError):
    """An interaction script that fails the legality rules."""


class TranscriptMissError(ScenForgeError):
    """Replay requested for a prompt absent from the transcript."""


class ExtractionFailed(ScenForgeError):
    """Every extraction attempt was rejected by the parser or legality check."""

    def __init__(self, attempts: int, problems: tuple[str, ...]):
        self.attempts = attempts
        self.problems = tuple(problems)
        detail = "; ".join(problems) if problems else "no diagnostics"
        super().__init__(f"extraction failed after {attempts} attempt(s): {detail}")


class ConversionFailed(ScenForgeError):
    """Every template-conversion attempt was rejected by the parser."""

    def __init__(self, attempts: int, problems: tuple[str, ...]):
        self.attempts = attempts
        self.problems = tuple(problems)
        detail = "; ".join(problems) if problems else "no diagnostics"
        super().__init__(f"conversion failed after {attempts} attempt(s): {detail}")


class InvalidTestCase(ScenForgeError):
    """A concrete test case rejected by the pre-simulation validator."""


class SamplingExhausted(ScenForgeError):
    """Uniform sampling could not produce a valid case within the retry budget."""


class MutationExhausted(ScenForgeError):
    """Mutation could not produce a valid case within the retry budget."""


class NoNpcError(ScenForgeError):
    """A trace with no scripted vehicles; headway distance is undefined."""


class TraceTooShortError(ScenForgeError):
    """A trace too short to analyse (fewer than three samples)."""


class DimensionMismatchError(ScenForgeError):
    """Parameter points of unequal dimension."""


class NotCriticalError(ScenForgeError):
    """Type classification asked for a case that never collided."""


class EmptyHistoryError(ScenForgeError):
    """Campaign metrics asked for an empty set of repetitions."""
