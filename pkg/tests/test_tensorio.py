import struct

import numpy as np
import pytest

from amrkit.errors import (
    BadMagic,
    NonFiniteValue,
    ShapeMismatch,
    TensorFormatError,
    TruncatedPayload,
    UnsupportedDtype,
    UnsupportedVersion,
)
from amrkit.tensorio import (
    HEADER_SIZE,
    ROLE_DETECTOR,
    DirectoryProvider,
    InferenceRequest,
    PredictionTensor,
    read_tensor,
    read_tensor_file,
    write_tensor,
    write_tensor_file,
)


def test_basic_round_trip():
    t = PredictionTensor(dims=(2, 2), data=np.array([0, 1, 2, 3], dtype=np.float32))
    again = read_tensor(write_tensor(t))
    assert again.dims == (2, 2)
    assert np.array_equal(again.data, t.data)


def test_bad_magic():
    blob = b"XXXX" + write_tensor(PredictionTensor.from_array(np.zeros(3)))[4:]
    with pytest.raises(BadMagic):
        read_tensor(blob)


def test_round_trip_byte_exact_property():
    rng = np.random.default_rng(123)
    for _ in range(300):
        ndim = int(rng.integers(1, 5))
        dims = tuple(int(d) for d in rng.integers(1, 6, size=ndim))
        data = rng.normal(size=int(np.prod(dims))).astype(np.float32)
        t = PredictionTensor(dims=dims, data=data)
        blob = write_tensor(t)
        again = read_tensor(blob)
        assert again.dims == t.dims
        assert np.array_equal(again.data, t.data)
        # byte-exact both ways
        assert write_tensor(again) == blob


def test_stream_length_formula():
    rng = np.random.default_rng(5)
    for dims in [(1,), (3, 4), (2, 3, 5), (2, 2, 2, 2)]:
        t = PredictionTensor.from_array(rng.normal(size=dims).astype(np.float32))
        blob = write_tensor(t)
        assert len(blob) == HEADER_SIZE + 4 * len(dims) + 4 * int(np.prod(dims))


def test_single_value_layout():
    blob = write_tensor(PredictionTensor(dims=(1,), data=np.array([0.5], dtype=np.float32)))
    assert blob[:4] == b"AMRT"
    assert len(blob) == HEADER_SIZE + 4 + 4
    assert struct.unpack("<f", blob[-4:])[0] == 0.5


def test_equal_tensors_identical_bytes():
    a = PredictionTensor.from_array(np.arange(6, dtype=np.float32).reshape(2, 3))
    b = PredictionTensor.from_array(np.arange(6, dtype=np.float32).reshape(2, 3))
    assert write_tensor(a) == write_tensor(b)


def _valid_blob():
    return write_tensor(PredictionTensor.from_array(np.ones((2, 3), dtype=np.float32)))


def test_truncations():
    blob = _valid_blob()
    for cut in (2, 10, HEADER_SIZE + 2, len(blob) - 3):
        with pytest.raises(TruncatedPayload):
            read_tensor(blob[:cut])


def test_trailing_bytes_rejected():
    with pytest.raises(TensorFormatError):
        read_tensor(_valid_blob() + b"\x00")


def test_unsupported_version_and_dtype():
    blob = bytearray(_valid_blob())
    blob[4] = 9
    with pytest.raises(UnsupportedVersion):
        read_tensor(bytes(blob))
    blob = bytearray(_valid_blob())
    blob[8] = 1
    with pytest.raises(UnsupportedDtype):
        read_tensor(bytes(blob))


def test_invalid_ndim():
    blob = bytearray(_valid_blob())
    blob[9] = 0
    with pytest.raises(TensorFormatError):
        read_tensor(bytes(blob))
    blob[9] = 5
    with pytest.raises(TensorFormatError):
        read_tensor(bytes(blob))


def test_non_finite_payload():
    blob = bytearray(_valid_blob())
    blob[-4:] = struct.pack("<f", float("nan"))
    with pytest.raises(NonFiniteValue):
        read_tensor(bytes(blob))


def test_tensor_invariants():
    with pytest.raises(ValueError):
        PredictionTensor(dims=(2, 2), data=np.zeros(3, dtype=np.float32))
    with pytest.raises(ValueError):
        PredictionTensor(dims=(), data=np.zeros(0, dtype=np.float32))
    with pytest.raises(NonFiniteValue):
        PredictionTensor(dims=(1,), data=np.array([np.inf], dtype=np.float32))
    t = PredictionTensor.from_array(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        t.data[0] = 1.0  # payload is frozen


def test_file_round_trip(tmp_path):
    t = PredictionTensor.from_array(np.linspace(0, 1, 12, dtype=np.float32).reshape(3, 4))
    path = tmp_path / "x.amrt"
    write_tensor_file(t, path)
    again = read_tensor_file(path)
    assert again.dims == t.dims and np.array_equal(again.data, t.data)


def test_directory_provider(tmp_path):
    t = PredictionTensor.from_array(np.zeros((13, 13, 30), dtype=np.float32))
    write_tensor_file(t, tmp_path / "img1.detector.amrt")
    provider = DirectoryProvider(tmp_path, {ROLE_DETECTOR: (13, 13, 30)})
    request = InferenceRequest(
        image_id="img1", role=ROLE_DETECTOR, image_w=100, image_h=100, target_w=416, target_h=416
    )
    assert provider.infer(request).dims == (13, 13, 30)
    assert provider.output_shape(ROLE_DETECTOR) == (13, 13, 30)

    with pytest.raises(FileNotFoundError):
        provider.infer(
            InferenceRequest(
                image_id="nope", role=ROLE_DETECTOR, image_w=1, image_h=1, target_w=416, target_h=416
            )
        )
    with pytest.raises(ShapeMismatch):
        provider.output_shape("recognizer-crnet")

    bad = DirectoryProvider(tmp_path, {ROLE_DETECTOR: (13, 13, 35)})
    with pytest.raises(ShapeMismatch):
        bad.infer(request)
