"""Exception types shared across the calibration toolkit."""


class CalibrationError(Exception):
    """Base class for all toolkit errors."""


class EmptyWindow(CalibrationError):
    """No IMU samples fall inside the requested integration window."""


class NonMonotonicTime(CalibrationError):
    """Timestamps are not strictly increasing."""


class SingularSystem(CalibrationError):
    """A (sub)system of normal equations is numerically rank-deficient."""


class DegenerateGeometry(CalibrationError):
    """Point sets are collinear; alignment is not uniquely determined."""


class AmbiguousAttitude(CalibrationError):
    """The two largest eigenvalues coincide; rotation not uniquely determined."""


class DegenerateMotion(CalibrationError):
    """Relative motions do not excite enough rotation axes for hand-eye."""


class NotConverged(CalibrationError):
    """Iterative refinement exhausted its iteration budget."""


class InsufficientExcitation(CalibrationError):
    """Angular-rate data carries no information about the sought rotation."""


class NotStatic(CalibrationError):
    """Accelerometer samples vary too much to be a static gravity capture."""


class InsufficientData(CalibrationError):
    """Fewer associated pose pairs than one full batch."""


class ParseError(CalibrationError):
    """A data or config file could not be parsed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NonUnitQuaternion(ParseError):
    """A quaternion read from disk is too far from unit norm."""
