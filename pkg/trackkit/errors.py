"""Exceptions raised by :mod:`trackkit`.

All of them derive from :class:`TrackkitError` which is a :class:`ValueError`
so that callers which only care about bad input can catch that.

"""


class TrackkitError(ValueError):
    pass


class InvalidBox(TrackkitError):
    pass


class DegenerateBox(TrackkitError):
    pass


class InvalidFrameDims(TrackkitError):
    pass


class InvalidQuant(TrackkitError):
    pass


class SingularCovariance(TrackkitError):
    pass


class TooShort(TrackkitError):
    pass


class MissingAnnotation(TrackkitError):
    pass


class EmptyTrajectory(TrackkitError):
    pass


class MissingAnchorFrame(TrackkitError):
    pass


class FrameMismatch(TrackkitError):
    pass


class ShapeError(TrackkitError):
    pass


class NonFiniteInput(TrackkitError):
    pass


class InvalidK(TrackkitError):
    pass


class EmptyCorpus(TrackkitError):
    pass


class MalformedLine(TrackkitError):
    """A line of a JSON Lines file could not be decoded into a record.

    Args:
        path: The file being read
        line_number: 1-based line number
        message: What went wrong

    """
    def __init__(self, path, line_number: int, message: str):
        self.path = path
        self.line_number = line_number
        super().__init__(f"{path}:{line_number}: {message}")


class ClientError(TrackkitError):
    pass
