"""Exception hierarchy shared across the toolkit."""


class QuantcalError(Exception):
    """Base class for all toolkit errors."""

    code = "runtime"


class ManifestError(QuantcalError):
    """Malformed or inconsistent model manifest / weight blob."""

    code = "manifest"


class ShapeError(QuantcalError):
    """Tensor shapes incompatible with the requested operation."""

    code = "shape"


class GraphError(QuantcalError):
    """Invalid model graph structure (dangling edges, bad kinds, ...)."""

    code = "graph"


class DataError(QuantcalError):
    """Invalid calibration / evaluation data."""

    code = "data"


class QuantizationError(QuantcalError):
    """Quantization flow cannot proceed (e.g. nothing to quantize)."""

    code = "quantization"
