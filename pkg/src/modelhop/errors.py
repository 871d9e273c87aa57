"""Exception types raised across the package."""


class ModelhopError(Exception):
    """Base class for all package errors."""


class DataError(ModelhopError, ValueError):
    pass


class ConstantColumn(DataError):
    def __init__(self, column):
        super().__init__(f"column {column} has zero variance")
        self.column = column


class NonFinite(DataError):
    pass


class NumericalError(ModelhopError, ArithmeticError):
    pass


class SingularGram(NumericalError):
    pass


class ModelTooLarge(NumericalError):
    pass


class InadmissibleMove(ModelhopError, ValueError):
    pass


class EmptyNeighborhood(ModelhopError, ValueError):
    pass


class AllInadmissible(ModelhopError, ValueError):
    pass


class TooManyPredictors(ModelhopError, ValueError):
    pass


class SupportOutOfRange(ModelhopError, ValueError):
    pass


class NoPostBurninRecords(ModelhopError, ValueError):
    pass


class TruncatedChain(ModelhopError, ValueError):
    pass
