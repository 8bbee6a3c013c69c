"""Length-prefixed binary frames for the split-inference wire protocol.

Layout (all integers little-endian):

    magic "NOIR" | version u16 | frame_type u8 | session_id u64 | payload_len u32
    payload bytes

Tensor payloads carry their own (n, d) u32 header followed by exactly
n*d float32 values, so an activation frame's payload is always
8 + 4*n*d bytes. Each frame type admits exactly one payload schema; there
is deliberately no schema that can carry token strings, integer index
tables, or any other representation of the client's tokenizer secrets.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

import numpy as np

from ..errors import ArgumentError, FormatError, Oversize, Truncated

WIRE_MAGIC = b"NOIR"
WIRE_VERSION = 1
HEADER = struct.Struct("<4sHBQI")
MAX_PAYLOAD = 64 * 1024 * 1024
MAX_ERROR_MESSAGE = 1024


class FrameType(enum.IntEnum):
    HELLO = 1
    HELLO_ACK = 2
    EMB = 3
    ENRICHED = 4
    GRAD_DOWN = 5
    GRAD_UP = 6
    PARAM_ACK = 7
    ERROR = 8
    BYE = 9


class ErrorCode(enum.IntEnum):
    VERSION = 1
    DIMS = 2
    SEQ = 3
    FORMAT = 4
    INTERNAL = 5


class Mode(enum.IntEnum):
    INFERENCE = 0
    TUNING = 1


@dataclass(frozen=True)
class HelloPayload:
    """Version and dimension negotiation."""

    version: int
    mode: Mode
    m: int
    d: int
    vocab_size: int
    lora_enabled: bool

    _STRUCT = struct.Struct("<HBIIIB")

    def encode(self) -> bytes:
        return self._STRUCT.pack(self.version, int(self.mode), self.m, self.d,
                                 self.vocab_size, int(self.lora_enabled))

    @classmethod
    def decode(cls, data: bytes) -> "HelloPayload":
        if len(data) != cls._STRUCT.size:
            raise FormatError(f"hello payload must be {cls._STRUCT.size} bytes")
        version, mode, m, d, v, lora = cls._STRUCT.unpack(data)
        try:
            mode = Mode(mode)
        except ValueError:
            raise FormatError(f"unknown session mode {mode}") from None
        return cls(version, mode, m, d, v, bool(lora))


@dataclass(frozen=True)
class TensorPayload:
    """A 2-D float32 activation or gradient block."""

    array: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.array)
        if arr.ndim != 2:
            raise ArgumentError("tensor payloads are 2-D")
        if not np.issubdtype(arr.dtype, np.floating):
            raise ArgumentError("tensor payloads carry real values only")
        arr = np.ascontiguousarray(arr, dtype="<f4")
        arr.setflags(write=False)
        object.__setattr__(self, "array", arr)

    def encode(self) -> bytes:
        n, d = self.array.shape
        return struct.pack("<II", n, d) + self.array.tobytes()

    @classmethod
    def decode(cls, data: bytes) -> "TensorPayload":
        if len(data) < 8:
            raise FormatError("tensor payload shorter than its (n, d) header")
        n, d = struct.unpack_from("<II", data)
        expected = 8 + 4 * n * d
        if len(data) != expected:
            raise FormatError(
                f"tensor payload is {len(data)} bytes, (n={n}, d={d}) implies {expected}")
        arr = np.frombuffer(data, dtype="<f4", count=n * d, offset=8).reshape(n, d)
        return cls(arr.copy())


@dataclass(frozen=True)
class ErrorPayload:
    code: ErrorCode
    message: str = ""

    def encode(self) -> bytes:
        raw = self.message.encode("utf-8")[:MAX_ERROR_MESSAGE]
        return struct.pack("<BH", int(self.code), len(raw)) + raw

    @classmethod
    def decode(cls, data: bytes) -> "ErrorPayload":
        if len(data) < 3:
            raise FormatError("error payload shorter than its header")
        code, mlen = struct.unpack_from("<BH", data)
        if len(data) != 3 + mlen:
            raise FormatError("error payload length mismatch")
        try:
            code = ErrorCode(code)
        except ValueError:
            raise FormatError(f"unknown error code {code}") from None
        return cls(code, data[3:3 + mlen].decode("utf-8", errors="replace"))


@dataclass(frozen=True)
class EmptyPayload:
    def encode(self) -> bytes:
        return b""

    @classmethod
    def decode(cls, data: bytes) -> "EmptyPayload":
        if data:
            raise FormatError("payload must be empty for this frame type")
        return cls()


PAYLOAD_SCHEMA: dict[FrameType, type] = {
    FrameType.HELLO: HelloPayload,
    FrameType.HELLO_ACK: HelloPayload,
    FrameType.EMB: TensorPayload,
    FrameType.ENRICHED: TensorPayload,
    FrameType.GRAD_DOWN: TensorPayload,
    FrameType.GRAD_UP: TensorPayload,
    FrameType.PARAM_ACK: EmptyPayload,
    FrameType.ERROR: ErrorPayload,
    FrameType.BYE: EmptyPayload,
}


@dataclass(frozen=True)
class Frame:
    frame_type: FrameType
    session_id: int
    payload: HelloPayload | TensorPayload | ErrorPayload | EmptyPayload

    def __post_init__(self):
        schema = PAYLOAD_SCHEMA[FrameType(self.frame_type)]
        if not isinstance(self.payload, schema):
            raise ArgumentError(
                f"{FrameType(self.frame_type).name} frames carry "
                f"{schema.__name__}, got {type(self.payload).__name__}")


def encode_frame(frame: Frame) -> bytes:
    payload = frame.payload.encode()
    if len(payload) > MAX_PAYLOAD:
        raise Oversize(f"payload of {len(payload)} bytes exceeds {MAX_PAYLOAD}")
    header = HEADER.pack(WIRE_MAGIC, WIRE_VERSION, int(frame.frame_type),
                         frame.session_id, len(payload))
    return header + payload


def decode_frame(data: bytes) -> Frame:
    """Decode exactly one frame; trailing bytes are a format error."""
    if len(data) < HEADER.size:
        raise Truncated(f"{len(data)} bytes is shorter than the frame header")
    magic, version, ftype, session_id, plen = HEADER.unpack_from(data)
    if magic != WIRE_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {WIRE_MAGIC!r}")
    if version != WIRE_VERSION:
        raise FormatError(f"unsupported wire version {version}")
    if plen > MAX_PAYLOAD:
        raise Oversize(f"declared payload of {plen} bytes exceeds {MAX_PAYLOAD}")
    try:
        ftype = FrameType(ftype)
    except ValueError:
        raise FormatError(f"unknown frame type {ftype}") from None
    if len(data) < HEADER.size + plen:
        raise Truncated(
            f"payload declares {plen} bytes, only {len(data) - HEADER.size} present")
    if len(data) > HEADER.size + plen:
        raise FormatError("trailing bytes after frame")
    payload = PAYLOAD_SCHEMA[ftype].decode(data[HEADER.size:HEADER.size + plen])
    return Frame(ftype, session_id, payload)
