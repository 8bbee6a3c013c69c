import numpy as np
import pytest

from noir.errors import ArgumentError, FormatError, Oversize, Truncated
from noir.protocol.frames import (
    EmptyPayload,
    ErrorCode,
    ErrorPayload,
    Frame,
    FrameType,
    HEADER,
    HelloPayload,
    MAX_PAYLOAD,
    Mode,
    PAYLOAD_SCHEMA,
    TensorPayload,
    decode_frame,
    encode_frame,
)


def _sample_frames():
    rng = np.random.Generator(np.random.PCG64(1))
    return [
        Frame(FrameType.HELLO, 7, HelloPayload(1, Mode.INFERENCE, 3, 8, 6, False)),
        Frame(FrameType.HELLO_ACK, 7, HelloPayload(1, Mode.TUNING, 3, 8, 6, True)),
        Frame(FrameType.EMB, 7, TensorPayload(rng.normal(size=(3, 4)).astype(np.float32))),
        Frame(FrameType.ENRICHED, 7, TensorPayload(rng.normal(size=(3, 4)).astype(np.float32))),
        Frame(FrameType.GRAD_DOWN, 7, TensorPayload(rng.normal(size=(2, 2)).astype(np.float32))),
        Frame(FrameType.GRAD_UP, 7, TensorPayload(rng.normal(size=(2, 2)).astype(np.float32))),
        Frame(FrameType.PARAM_ACK, 7, EmptyPayload()),
        Frame(FrameType.ERROR, 7, ErrorPayload(ErrorCode.DIMS, "probe")),
        Frame(FrameType.BYE, 7, EmptyPayload()),
    ]


def test_every_frame_type_roundtrips_bitwise():
    for frame in _sample_frames():
        data = encode_frame(frame)
        decoded = decode_frame(data)
        assert encode_frame(decoded) == data
        assert decoded.frame_type == frame.frame_type
        assert decoded.session_id == frame.session_id


def test_tensor_roundtrip_preserves_values():
    arr = np.array([[1.5, -2.25, 3e-8, 0.0]], dtype=np.float32)
    frame = Frame(FrameType.EMB, 1, TensorPayload(arr))
    decoded = decode_frame(encode_frame(frame))
    assert np.array_equal(decoded.payload.array.view(np.int32), arr.view(np.int32))


def test_bad_magic_rejected():
    data = encode_frame(_sample_frames()[0])
    with pytest.raises(FormatError):
        decode_frame(b"XXXX" + data[4:])


def test_truncated_payload_rejected():
    data = encode_frame(_sample_frames()[2])
    with pytest.raises(Truncated):
        decode_frame(data[:-3])


def test_truncated_header_rejected():
    with pytest.raises(Truncated):
        decode_frame(b"NOIR")


def test_trailing_bytes_rejected():
    data = encode_frame(_sample_frames()[0])
    with pytest.raises(FormatError):
        decode_frame(data + b"\x00")


def test_oversize_declared_payload_rejected():
    frame = _sample_frames()[2]
    data = bytearray(encode_frame(frame))
    huge = (MAX_PAYLOAD + 1).to_bytes(4, "little")
    data[HEADER.size - 4:HEADER.size] = huge
    with pytest.raises(Oversize):
        decode_frame(bytes(data))


def test_tensor_payload_size_is_linear_in_elements():
    for n, d in ((1, 4), (16, 8), (128, 32)):
        payload = TensorPayload(np.zeros((n, d), dtype=np.float32)).encode()
        assert len(payload) == 8 + 4 * n * d


def test_schema_covers_every_type_and_nothing_else():
    assert set(PAYLOAD_SCHEMA) == set(FrameType)
    assert set(PAYLOAD_SCHEMA.values()) <= {HelloPayload, TensorPayload,
                                            ErrorPayload, EmptyPayload}


def test_no_frame_can_carry_tokenizer_secrets():
    """No payload schema accepts strings, index tables, or permutations."""
    perm_like = np.argsort(np.random.default_rng(0).random(8))
    for bad in (perm_like.reshape(2, 4),                 # integer permutation
                np.array([["function"]], dtype=object),  # token strings
                np.zeros(3, dtype=np.float32)):          # wrong rank
        with pytest.raises(ArgumentError):
            TensorPayload(bad)
    for ftype in FrameType:
        wrong = (TensorPayload(np.zeros((1, 1), dtype=np.float32))
                 if PAYLOAD_SCHEMA[ftype] is not TensorPayload else EmptyPayload())
        with pytest.raises(ArgumentError):
            Frame(ftype, 0, wrong)


def test_error_payload_unicode_and_cap():
    payload = ErrorPayload(ErrorCode.FORMAT, "bad byte ☃ " + "x" * 5000)
    decoded = ErrorPayload.decode(payload.encode())
    assert decoded.code == ErrorCode.FORMAT
    assert len(decoded.message.encode("utf-8")) <= 1024
