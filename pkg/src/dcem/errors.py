"""Exception hierarchy.

Every error carries a short ``kind`` so the CLI can print one machine-parseable
line per failure. Input-validation errors also subclass ``ValueError`` so they
behave like scikit-learn's parameter checks.
"""


class DcemError(Exception):
    """Base class for all errors raised by dcem."""

    @property
    def kind(self):
        return type(self).__name__


class ValidationError(DcemError, ValueError):
    """Bad input data or parameters."""


class MissingFile(DcemError, FileNotFoundError):
    pass


class MalformedRow(ValidationError):
    def __init__(self, line, message="malformed row"):
        self.line = line
        super().__init__(f"line {line}: {message}")


class WrongLength(ValidationError):
    def __init__(self, actual):
        self.actual = actual
        super().__init__(f"weather series has {actual} rows; expected 8760 or 8784")


class OutOfRange(ValidationError):
    def __init__(self, field, line=None, value=None):
        self.field = field
        self.line = line
        where = f" at line {line}" if line is not None else ""
        super().__init__(f"{field}={value!r} out of range{where}")


class NonConvergence(DcemError, ArithmeticError):
    pass


class InfeasibleConfig(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class EmptyFrontier(ValidationError):
    pass


class ModelFailure(DcemError, RuntimeError):
    def __init__(self, index, cause=None):
        self.index = index
        super().__init__(f"model failed at draw {index}: {cause!r}")


class ZeroReported(ValidationError, ZeroDivisionError):
    pass


class UtilizationOutOfRange(ValidationError):
    pass


class UnknownClass(ValidationError, KeyError):
    def __init__(self, class_id):
        self.class_id = class_id
        ValidationError.__init__(self, f"unknown class_id {class_id!r}")

    def __str__(self):
        return self.args[0]


class MissingYear(ValidationError, KeyError):
    def __init__(self, year):
        self.year = year
        ValidationError.__init__(self, f"year {year} not present")

    def __str__(self):
        return self.args[0]


class MissingPue(ValidationError, KeyError):
    def __init__(self, region, space_type):
        self.region = region
        self.space_type = space_type
        ValidationError.__init__(self, f"no PUE entry for ({region}, {space_type})")

    def __str__(self):
        return self.args[0]


class HorizonGap(ValidationError):
    pass


class InvalidShares(ValidationError):
    pass


class PerturbedModelFailure(DcemError, RuntimeError):
    def __init__(self, param, cause=None):
        self.param = param
        super().__init__(f"model failed when perturbing {param!r}: {cause!r}")


class FactorMismatch(ValidationError):
    pass


class ZeroAfterSubstitution(ValidationError):
    pass


class NonPositiveInput(ValidationError):
    pass


class SimulatorFailure(DcemError, RuntimeError):
    def __init__(self, x, cause=None):
        self.x = x
        super().__init__(f"simulator failed at x={x!r}: {cause!r}")


class AllRejected(DcemError, RuntimeError):
    pass


class ConstantChain(ValidationError):
    pass


class UnwritableOutput(DcemError, OSError):
    pass
