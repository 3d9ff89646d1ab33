class XQCError(Exception):
    """Base class for all errors raised by xqc."""


class ConfigurationError(XQCError, ValueError):
    """Raised when a configuration or parameter layout is inconsistent."""


class PreconditionError(XQCError):
    """Raised when an operation is called outside its precondition."""


class NumericOverflowError(XQCError, ArithmeticError):
    """Raised when a computation produces non-finite values.

    Attributes:
        node (int or None): Index of the first tape node holding a non-finite
            value, if it could be localized.
        op (str or None): Primitive op-id of that node.
    """

    def __init__(self, message, node=None, op=None):
        super().__init__(message)
        self.node = node
        self.op = op


class DegenerateWeightError(XQCError):
    """Raised when a weight matrix with zero norm is projected."""


class DegenerateSpectrumError(XQCError):
    """Raised when every Ritz value is numerically zero."""


class CapacityError(XQCError):
    """Raised when a request would exceed a hard memory cap."""


class TrainingAborted(XQCError):
    """Raised when training hits a non-finite loss or observation.

    Attributes:
        snapshot (dict): Diagnostic snapshot taken at the failing step.
    """

    def __init__(self, message, snapshot=None):
        super().__init__(message)
        self.snapshot = snapshot or {}
