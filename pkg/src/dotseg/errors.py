"""Exception types shared across the package."""


class DotsegError(Exception):
    """Base class for all package errors."""


class ShapeError(DotsegError):
    """Tensor dimensions are inconsistent with a layer's expectation."""


class InputSizeError(ShapeError):
    """Network input height/width not divisible by 2**depth."""


class FormatError(DotsegError):
    """Bad magic, version or structure in a tensor/model file."""


class MissingWeightError(FormatError):
    """Topology references a weight array absent from the blob."""


class WeightShapeError(FormatError):
    """Stored weight dims disagree with the topology."""


class DataError(DotsegError):
    """Dataset or configuration content is unusable."""
