"""Exception types shared by the library and the command line front end."""


class HeckeVirtError(Exception):
    """Base class for all library errors."""


class SingularMatrix(HeckeVirtError):
    pass


class BadDenominator(HeckeVirtError):
    pass


class NotInGroup(HeckeVirtError):
    """Determinant is not a unit of Z[1/p] (up to squares of scalars)."""


class NegativeDeterminant(HeckeVirtError):
    """No representative with positive determinant exists."""


class NonConvergence(HeckeVirtError):
    pass


class BudgetExceeded(HeckeVirtError):
    pass


class QuadratureFailure(HeckeVirtError):
    pass


class NonHyperbolic(HeckeVirtError):
    pass


class NontrivialStabilizer(HeckeVirtError):
    pass


class IllConditioned(HeckeVirtError):
    pass
