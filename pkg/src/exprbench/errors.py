"""Exception types shared across the package.

Every domain failure raises a named subclass so callers (and the CLI exit-code
mapping) can dispatch on type instead of parsing messages.
"""


class ExprBenchError(Exception):
    """Base class for all domain errors."""


class WrongArity(ExprBenchError):
    """An affect vector did not have exactly 12 entries."""

    def __init__(self, got: int):
        self.got = got
        super().__init__(f"affect vector needs 12 entries, got {got}")


class OutOfRange(ExprBenchError):
    """A scalar fell outside its documented range."""

    def __init__(self, what: str, value: float, index: int | None = None):
        self.what = what
        self.value = value
        self.index = index
        where = f" at index {index}" if index is not None else ""
        super().__init__(f"{what}{where} out of range: {value!r}")


class NeutralNotAllowed(ExprBenchError):
    """Neutral was passed where only the 12 target expressions are valid."""


class UnknownLabel(ExprBenchError):
    """An expression label string could not be resolved."""

    def __init__(self, label: str):
        self.label = label
        super().__init__(f"unknown expression label: {label!r}")


class EmptyInput(ExprBenchError):
    """An operation requiring a non-empty collection got an empty one."""


class EmptyRegistry(ExprBenchError):
    """mSCR requested with no registered confusing pairs."""


class NoSamplesForClass(ExprBenchError):
    """A confusion-rate denominator is zero for the given class."""

    def __init__(self, expr):
        self.expr = expr
        super().__init__(f"no samples target class {getattr(expr, 'label', expr)}")


class TargetOutsideSubset(ExprBenchError):
    """An accuracy record targets a class outside the requested subset."""


class LengthMismatch(ExprBenchError):
    """Two paired series have different lengths."""


class TooFewPoints(ExprBenchError):
    """A correlation was requested on fewer than two points."""


class NonUniformAlphaGrid(ExprBenchError):
    """An intensity series is not uniformly spaced in alpha."""


class NoValidSeries(ExprBenchError):
    """Every intensity series was degenerate; no linearity score exists."""

    def __init__(self, skipped: int):
        self.skipped = skipped
        super().__init__(f"all {skipped} series degenerate")


class DimMismatch(ExprBenchError):
    """Vectors of different dimensions were combined."""

    def __init__(self, a: int, b: int):
        super().__init__(f"dimension mismatch: {a} vs {b}")


class AlphaOutOfRange(ExprBenchError):
    """An intensity coefficient fell outside [0, alpha_max]."""

    def __init__(self, alpha: float, alpha_max: float):
        self.alpha = alpha
        self.alpha_max = alpha_max
        super().__init__(f"alpha {alpha!r} outside [0, {alpha_max}]")


class ZeroVector(ExprBenchError):
    """A zero vector reached an operation that needs a direction."""


class NonFinite(ExprBenchError):
    """A NaN or infinity reached a numeric operation."""


class UnknownLevel(ExprBenchError):
    """A MEAD intensity level was not one of low/medium/high."""

    def __init__(self, level: str):
        self.level = level
        super().__init__(f"unknown intensity level: {level!r}")


class Malformed(ExprBenchError):
    """A data file line could not be parsed at all."""

    def __init__(self, line_no: int, cause: str):
        self.line_no = line_no
        self.cause = cause
        super().__init__(f"line {line_no}: {cause}")


class ValidationFailed(ExprBenchError):
    """A parsed line violated the record schema."""

    def __init__(self, line_no: int, cause: Exception | str):
        self.line_no = line_no
        self.cause = cause
        super().__init__(f"line {line_no}: {cause}")


class RankDeficiency(ExprBenchError):
    """Could not draw a full-rank projection/prototype set within retries."""


class NonFiniteLoss(ExprBenchError):
    """Training produced a NaN/inf loss."""

    def __init__(self, step: int, breakdown):
        self.step = step
        self.breakdown = breakdown
        super().__init__(f"non-finite loss at step {step}: {breakdown}")


class ConfigError(ExprBenchError):
    """A run-config file had unknown keys or unparseable values."""
