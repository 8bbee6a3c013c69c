"""Framed client/cloud split-inference protocol and its toy model stack."""

from .frames import (
    Frame,
    FrameType,
    ErrorCode,
    HelloPayload,
    TensorPayload,
    ErrorPayload,
    EmptyPayload,
    encode_frame,
    decode_frame,
    MAX_PAYLOAD,
    WIRE_VERSION,
)
from .stack import (
    ToyStack,
    GenerationConfig,
    monolithic_oracle,
    monolithic_logits,
    finite_difference_check,
)
from .transport import LoopbackTransport, SocketTransport, loopback_pair, read_frame, write_frame
from .server import MiddleServer, LoopbackListener, serve_middle
from .client import ClientSession, client_generate, stuning_round

__all__ = [
    "Frame", "FrameType", "ErrorCode", "HelloPayload", "TensorPayload",
    "ErrorPayload", "EmptyPayload", "encode_frame", "decode_frame",
    "MAX_PAYLOAD", "WIRE_VERSION", "ToyStack", "GenerationConfig",
    "monolithic_oracle", "monolithic_logits", "finite_difference_check",
    "LoopbackTransport", "SocketTransport", "loopback_pair", "read_frame",
    "write_frame", "MiddleServer", "LoopbackListener", "serve_middle",
    "ClientSession", "client_generate", "stuning_round",
]
