class ConnscopeError(Exception):
    """Base class of every error the analyzer reports to its caller."""
    exit_code = 1


# Validation failures (exit code 2)

class ValidationError(ConnscopeError):
    exit_code = 2

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__('; '.join(self.errors))


class ParseError(ValidationError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ''
        if line is not None:
            where = f'line {line}, column {column}: ' if column is not None else f'line {line}: '
        super().__init__(where + message)


class PoleOnComponent(ValidationError):
    pass


class UnsupportedComponent(ValidationError):
    pass


class NotBranched(ValidationError):
    pass


class DegenerateTransversal(ValidationError):
    pass


# Numeric failures (exit code 3)

class NumericError(ConnscopeError):
    exit_code = 3


class NearPoleEvaluation(NumericError):
    def __init__(self, message, point=None, modulus=None):
        self.point = point
        self.modulus = modulus
        super().__init__(message)


class PoleApproach(NumericError):
    """Integration stopped next to the divisor; `last_state` is the last safe state."""

    def __init__(self, message, last_state=None, trajectory=None):
        self.last_state = last_state
        self.trajectory = trajectory
        super().__init__(message)


class StepUnderflow(NumericError):
    pass


class QuotientIllDefined(NumericError):
    pass


class NotInvariant(NumericError):
    pass


class StabilizationFailure(NumericError):
    pass


class ExpectationMismatch(ConnscopeError):
    exit_code = 4

    def __init__(self, mismatches):
        self.mismatches = list(mismatches)
        super().__init__('; '.join(self.mismatches))
