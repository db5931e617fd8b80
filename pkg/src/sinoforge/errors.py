"""Exception types and the CLI exit codes they map to."""


class SinoforgeError(Exception):
    """Base class for toolkit errors."""

    exit_code = 1


class ValidationError(SinoforgeError, ValueError):
    """Invalid argument, value, or invariant violation."""

    exit_code = 2


class FormatError(ValidationError):
    """Malformed RAWF header or sidecar."""


class CorruptionError(ValidationError):
    """Payload length, dimensions, or checksum disagree with the sidecar."""


class GeometryError(ValidationError):
    """Projection geometry is inconsistent with the data it is applied to."""


class UnsupportedError(ValidationError):
    """Operation is not defined for the requested variant."""


class UndefinedInputError(ValidationError):
    """Input makes the requested quantity undefined (e.g. an empty mask)."""


class EmptySegmentationError(UndefinedInputError):
    """Thresholding left no connected component."""


class NumericalError(SinoforgeError, ArithmeticError):
    """A non-finite value appeared during an iterative computation."""

    exit_code = 4

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class DatasetError(SinoforgeError):
    """A dataset item failed; carries the item id and, if any, a list of problems."""

    exit_code = 3

    def __init__(self, message, item_id=None, problems=()):
        super().__init__(message)
        self.item_id = item_id
        self.problems = list(problems)


EXIT_IO = 3
