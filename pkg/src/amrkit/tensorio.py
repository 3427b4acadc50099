"""Binary tensor container and the inference-provider abstraction.

The ``.amrt`` format carries raw network outputs between processes:

    bytes 0..3    magic "AMRT"
    bytes 4..7    u32 version (= 1), little-endian
    byte  8       u8 dtype code (0 = float32)
    byte  9       u8 ndim (1..4)
    bytes 10..15  zero padding (header is a fixed 16 bytes)
    next          ndim x u32 dims, little-endian
    rest          row-major float32 payload, little-endian
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Protocol, runtime_checkable

import numpy as np

from .dataset import Box
from .errors import (
    BadMagic,
    NonFiniteValue,
    ShapeMismatch,
    TensorFormatError,
    TruncatedPayload,
    UnsupportedDtype,
    UnsupportedVersion,
)

MAGIC = b"AMRT"
VERSION = 1
DTYPE_F32 = 0
HEADER_SIZE = 16
MAX_NDIM = 4

ROLE_DETECTOR = "detector"
ROLE_CRNET = "recognizer-crnet"
ROLE_MULTITASK = "recognizer-multitask"
ROLE_CRNN = "recognizer-crnn"
ROLES = (ROLE_DETECTOR, ROLE_CRNET, ROLE_MULTITASK, ROLE_CRNN)


@dataclass(frozen=True, eq=False)
class PredictionTensor:
    """Dense row-major float32 array with shape metadata."""

    dims: tuple[int, ...]
    data: np.ndarray

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if not (1 <= len(dims) <= MAX_NDIM) or any(d < 1 for d in dims):
            raise ValueError(f"dims must be 1..{MAX_NDIM} positive sizes, got {dims}")
        data = np.ascontiguousarray(self.data, dtype=np.float32).reshape(-1)
        if data.size != int(np.prod(dims)):
            raise ValueError(f"payload size {data.size} != product of dims {dims}")
        if not np.all(np.isfinite(data)):
            raise NonFiniteValue("tensor payload contains non-finite values")
        data.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "PredictionTensor":
        arr = np.asarray(arr)
        return cls(dims=arr.shape, data=arr.reshape(-1))

    def as_array(self) -> np.ndarray:
        return self.data.reshape(self.dims)


def write_tensor(t: PredictionTensor) -> bytes:
    """Canonical ``.amrt`` encoding; equal tensors produce identical bytes."""
    ndim = len(t.dims)
    header = struct.pack("<4sIBB6x", MAGIC, VERSION, DTYPE_F32, ndim)
    dims = struct.pack(f"<{ndim}I", *t.dims)
    return header + dims + t.data.astype("<f4").tobytes()


def read_tensor(source: bytes | BinaryIO) -> PredictionTensor:
    """Parse an ``.amrt`` byte stream back into a tensor."""
    buf = source if isinstance(source, (bytes, bytearray)) else source.read()
    buf = bytes(buf)
    if len(buf) < 4:
        raise TruncatedPayload(f"stream is {len(buf)} bytes, shorter than the magic")
    if buf[:4] != MAGIC:
        raise BadMagic(f"expected magic {MAGIC!r}, got {buf[:4]!r}")
    if len(buf) < HEADER_SIZE:
        raise TruncatedPayload(f"stream is {len(buf)} bytes, shorter than the {HEADER_SIZE}-byte header")
    version, dtype, ndim = struct.unpack_from("<IBB", buf, 4)
    if version != VERSION:
        raise UnsupportedVersion(f"version {version} not supported")
    if dtype != DTYPE_F32:
        raise UnsupportedDtype(f"dtype code {dtype} not supported")
    if not (1 <= ndim <= MAX_NDIM):
        raise TensorFormatError(f"ndim must be 1..{MAX_NDIM}, got {ndim}")
    dims_end = HEADER_SIZE + 4 * ndim
    if len(buf) < dims_end:
        raise TruncatedPayload("stream ended inside the dims table")
    dims = struct.unpack_from(f"<{ndim}I", buf, HEADER_SIZE)
    if any(d < 1 for d in dims):
        raise TensorFormatError(f"dims must be positive, got {dims}")
    count = int(np.prod(dims))
    payload_end = dims_end + 4 * count
    if len(buf) < payload_end:
        raise TruncatedPayload(f"payload needs {4 * count} bytes, found {len(buf) - dims_end}")
    if len(buf) > payload_end:
        raise TensorFormatError(f"{len(buf) - payload_end} trailing bytes after payload")
    data = np.frombuffer(buf, dtype="<f4", count=count, offset=dims_end)
    return PredictionTensor(dims=dims, data=data)


def write_tensor_file(t: PredictionTensor, path: str | Path) -> None:
    Path(path).write_bytes(write_tensor(t))


def read_tensor_file(path: str | Path) -> PredictionTensor:
    return read_tensor(Path(path).read_bytes())


@dataclass(frozen=True, eq=False)
class InferenceRequest:
    """One forward-pass request: which image region, resized to which input.

    ``crop`` is in source-image pixel coordinates (None = whole image); the
    region is presented to the network resized to ``target_w x target_h``.
    ``pixels`` is optional: file- and oracle-backed providers work from
    geometry alone.
    """

    image_id: str
    role: str
    image_w: int
    image_h: int
    target_w: int
    target_h: int
    crop: Box | None = None
    pixels: np.ndarray | None = field(default=None, repr=False)


@runtime_checkable
class InferenceProvider(Protocol):
    """Source of network-output tensors; the output shape is constant per role."""

    def output_shape(self, role: str) -> tuple[int, ...]:
        ...

    def infer(self, request: InferenceRequest) -> PredictionTensor:
        ...


class DirectoryProvider:
    """Serves pre-dumped tensors from ``<root>/<image_id>.<role>.amrt`` files.

    Intended for offline runs over real network dumps; shapes must be declared
    up front and every served tensor is checked against them.
    """

    def __init__(self, root: str | Path, shapes: dict[str, tuple[int, ...]]):
        self.root = Path(root)
        if not self.root.is_dir():
            raise FileNotFoundError(f"tensor directory {self.root} is not a directory")
        self._shapes = {role: tuple(int(d) for d in dims) for role, dims in shapes.items()}

    def output_shape(self, role: str) -> tuple[int, ...]:
        try:
            return self._shapes[role]
        except KeyError:
            raise ShapeMismatch(f"no declared shape for role {role!r}") from None

    def infer(self, request: InferenceRequest) -> PredictionTensor:
        expected = self.output_shape(request.role)
        path = self.root / f"{request.image_id}.{request.role}.amrt"
        tensor = read_tensor_file(path)
        if tensor.dims != expected:
            raise ShapeMismatch(
                f"{path.name}: dims {tensor.dims} != declared {expected} for role {request.role!r}"
            )
        return tensor
