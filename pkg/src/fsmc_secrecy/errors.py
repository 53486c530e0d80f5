"""Exception hierarchy.

Two families matter to callers: `ModelError` means the inputs or the model
assumptions are wrong (the answer is "no"), `NumericalError` means a solver
could not reach a decision.
"""


class FsmcSecrecyError(Exception):
    """Base class for every error raised by this package."""


class ModelError(FsmcSecrecyError, ValueError):
    pass


class NumericalError(FsmcSecrecyError, ArithmeticError):
    pass


class ValidationError(ModelError):
    """Invalid input, tagged with the key path of the offending value."""

    def __init__(self, path, message):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}" if path else message)

    def prefixed(self, prefix):
        if not prefix:
            return self
        if not self.path:
            path = prefix
        elif self.path.startswith("["):
            path = prefix + self.path
        else:
            path = f"{prefix}.{self.path}"
        return type(self)(path, self.message)


class ParseError(ModelError):
    pass


class DimensionMismatch(ValidationError):
    pass


class OutOfRange(ValidationError):
    pass


class NonErgodic(ValidationError):
    pass


class NonPositiveAlpha(ValidationError):
    pass


class ZeroModeProbability(ValidationError):
    pass


class DegenerateGeometry(ValidationError):
    pass


class NotUnstable(ModelError):
    pass


class NotBoundedAtOne(ModelError):
    pass


class NoConvergence(NumericalError):
    pass


class Inconclusive(NumericalError):
    """The Riccati iteration hit its cap without converging or diverging."""

    def __init__(self, message, iterations=None, final_trace=None):
        super().__init__(message)
        self.iterations = iterations
        self.final_trace = final_trace


class InconclusiveBisection(NumericalError):
    pass


class SingularSystem(NumericalError):
    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition
