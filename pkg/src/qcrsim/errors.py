class QcrError(Exception):
    """Base class for all errors raised by qcrsim."""


class IntegrationError(QcrError):
    def __init__(self, message, estimate=None, error=None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class CalibrationError(QcrError):
    pass


class DegenerateError(QcrError):
    """Input carries no information for the requested quantity."""


class DatasetError(QcrError, ValueError):
    pass


class ParseError(DatasetError):
    def __init__(self, message, path=None, line=None):
        loc = f"{path}:{line}: " if path is not None and line is not None else ""
        super().__init__(loc + message)
        self.path = path
        self.line = line


class SolverError(QcrError):
    def __init__(self, message, t_fail=None):
        super().__init__(message if t_fail is None else f"{message} (t = {t_fail:.6e} s)")
        self.t_fail = t_fail
