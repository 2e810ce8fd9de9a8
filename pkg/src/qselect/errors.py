"""Exception hierarchy shared by all qselect modules."""


class QSelectError(Exception):
    """Base class for library errors."""


class ValidationError(QSelectError, ValueError):
    """Input failed a structural or schema check."""


class NotSemipositive(ValidationError):
    pass


class KernelNotIsotropic(ValidationError):
    pass


class CutoffTooSmall(ValidationError):
    pass


class DegreeTooLarge(ValidationError):
    pass


class DimensionCap(ValidationError):
    pass


class GridTooLarge(ValidationError):
    pass


class GridTooCoarse(ValidationError):
    pass


class ParamOutOfRange(ValidationError):
    pass


class ResolutionTooCoarse(ValidationError):
    pass


class NotAtMinimum(ValidationError):
    pass


class UnreliableWindow(ValidationError):
    pass


class WindowEmpty(QSelectError):
    pass


class MissingGolden(QSelectError):
    pass


class NumericalError(QSelectError, ArithmeticError):
    """A numerical procedure failed to reach its stated accuracy."""


class NonConvergence(NumericalError):
    pass


# spelling used by the optimisation routines
NoConvergence = NonConvergence


class QuadratureFail(NumericalError):
    pass
