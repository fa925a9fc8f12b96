class MemsflowError(Exception):
    """Base class for all errors raised by memsflow."""


class ParseError(MemsflowError):
    """Malformed input text; carries the 1-based line and the offending token."""

    def __init__(self, message, line=None, token=None):
        self.line = line
        self.token = token
        where = f"line {line}: " if line is not None else ""
        what = f" (at {token!r})" if token is not None else ""
        super().__init__(f"{where}{message}{what}")


class GeometryError(MemsflowError):
    pass


class FlowError(MemsflowError):
    """A design flow could not be carried out on otherwise well-formed input."""


class NumericalError(MemsflowError):
    pass
