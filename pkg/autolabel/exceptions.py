class AutolabelError(Exception):
    """Base class for conditions signalled by the label pipeline."""


class InvalidBox(AutolabelError, ValueError):
    pass


class DegenerateHull(AutolabelError):
    """Fewer than three distinct, non-collinear points."""


class OutOfExtent(AutolabelError):
    pass


class EmptySet(AutolabelError):
    """A contrastive term needs at least one positive and one negative."""


class PlacementError(AutolabelError):
    pass


class FormatError(AutolabelError):
    def __init__(self, message, path=None, line=None):
        super().__init__(message)
        self.message = message
        self.path = path
        self.line = line

    def __str__(self):
        where = str(self.path) if self.path is not None else '<input>'
        if self.line is not None:
            where = f"{where}:{self.line}"
        return f"{where}: {self.message}"
