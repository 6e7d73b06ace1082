"""Exception types raised across the package."""


class WtromError(Exception):
    """Base class for all package errors."""


class DivisionDegenerate(WtromError):
    pass


class UnsupportedKind(WtromError):
    pass


class SingularNetwork(WtromError):
    pass


class NoConvergence(WtromError):
    def __init__(self, max_iter, residual=None):
        self.max_iter = max_iter
        self.residual = residual
        msg = f"no convergence after {max_iter} iterations"
        if residual is not None:
            msg += f" (last residual {residual:.3e})"
        super().__init__(msg)


class SingularInertia(WtromError):
    pass


class BracketInvalid(WtromError):
    pass


class ParseError(WtromError):
    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class ValidationError(WtromError):
    def __init__(self, invariant, message=None):
        self.invariant = invariant
        super().__init__(f"{invariant}: {message}" if message else invariant)


class UnknownParameter(WtromError):
    pass
