"""Exception types shared across the toolkit."""


class AmrError(Exception):
    """Base class for all toolkit errors."""


# --- annotation / dataset -------------------------------------------------

class MalformedLine(AmrError):
    """Annotation line has an unknown key or the wrong number of values."""


class CountMismatch(AmrError):
    """Annotation does not carry exactly five digit boxes."""


class InvalidReading(AmrError):
    """Reading string is not exactly five decimal digits."""


class GeometryError(AmrError):
    """Box geometry violates an invariant (non-positive side, digit outside counter, ...)."""


class InvalidPair(AmrError):
    """Transition-digit pair is not adjacent on the dial."""


class EmptyDataset(AmrError):
    """Operation needs a non-empty (or large enough) dataset."""


# --- tensor container -----------------------------------------------------

class TensorFormatError(AmrError):
    """Byte stream is not a well-formed tensor file."""


class BadMagic(TensorFormatError):
    """Stream does not start with the tensor magic."""


class UnsupportedVersion(TensorFormatError):
    """Tensor file version is not supported."""


class UnsupportedDtype(TensorFormatError):
    """Tensor file dtype code is not supported."""


class TruncatedPayload(TensorFormatError):
    """Stream ended before the declared payload was complete."""


class NonFiniteValue(TensorFormatError):
    """Tensor payload contains NaN or infinity."""


# --- detection / recognition ----------------------------------------------

class ShapeMismatch(AmrError):
    """Tensor shape does not match the declared grid or head layout."""


class InsufficientBoxes(AmrError):
    """Fewer boxes than requested clusters."""


class NonDistribution(AmrError):
    """Frame rows are not probability distributions."""


# --- augmentation ----------------------------------------------------------

class EmptyRange(AmrError):
    """Jitter interval has lo > hi."""


# --- evaluation -------------------------------------------------------------

class DuplicateGt(AmrError):
    """More than one ground-truth entry for the same image."""


class MissingGroundTruth(AmrError):
    """A result refers to an image with no ground truth."""
