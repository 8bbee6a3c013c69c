"""The cloud side: serves enriched embeddings and backward gradients.

One session per connection, strictly serial request/response. Inference
sessions share the read-only middle weights; tuning sessions get an
isolated deep copy so concurrent clients cannot observe each other's
low-rank updates. Any out-of-order or malformed frame yields an ERROR
frame and closes the connection without a partial response.
"""

from __future__ import annotations

import copy
import socket
import threading

import numpy as np

from ..errors import NoirError
from .frames import (
    EmptyPayload,
    ErrorCode,
    ErrorPayload,
    Frame,
    FrameType,
    HelloPayload,
    Mode,
    TensorPayload,
    WIRE_VERSION,
)
from .transport import LoopbackTransport, SocketTransport, loopback_pair, read_frame, write_frame


class MiddleServer:
    """Session handler around one middle model."""

    def __init__(self, middle, m: int, d: int, vocab_size: int,
                 lora_lr: float = 0.0):
        self.middle = middle
        self.m = m
        self.d = d
        self.vocab_size = vocab_size
        self.lora_lr = lora_lr

    def handle_connection(self, transport) -> None:
        try:
            self._session(transport)
        finally:
            transport.close()

    def _fail(self, transport, session_id: int, code: ErrorCode, message: str) -> None:
        write_frame(transport, Frame(FrameType.ERROR, session_id,
                                     ErrorPayload(code, message)))

    def _session(self, transport) -> None:
        try:
            first = read_frame(transport)
        except NoirError as exc:
            self._fail(transport, 0, ErrorCode.FORMAT, str(exc))
            return
        if first is None:
            return
        if first.frame_type != FrameType.HELLO:
            self._fail(transport, first.session_id, ErrorCode.SEQ,
                       f"expected HELLO, got {first.frame_type.name}")
            return
        hello: HelloPayload = first.payload
        session_id = first.session_id
        if hello.version != WIRE_VERSION:
            self._fail(transport, session_id, ErrorCode.VERSION,
                       f"peer version {hello.version}, server speaks {WIRE_VERSION}")
            return
        if (hello.m, hello.d, hello.vocab_size) != (self.m, self.d, self.vocab_size):
            self._fail(transport, session_id, ErrorCode.DIMS,
                       f"peer dims (m={hello.m}, d={hello.d}, |V|={hello.vocab_size}) "
                       f"vs server (m={self.m}, d={self.d}, |V|={self.vocab_size})")
            return
        tuning = hello.mode == Mode.TUNING
        lora_active = bool(hello.lora_enabled and getattr(self.middle, "lora_enabled", False))
        middle = copy.deepcopy(self.middle) if tuning else self.middle
        write_frame(transport, Frame(FrameType.HELLO_ACK, session_id, HelloPayload(
            WIRE_VERSION, hello.mode, self.m, self.d, self.vocab_size, lora_active)))

        last_e: np.ndarray | None = None
        lora_grads: dict[str, np.ndarray] = {}
        lora_count = 0
        while True:
            try:
                frame = read_frame(transport)
            except NoirError as exc:
                self._fail(transport, session_id, ErrorCode.FORMAT, str(exc))
                return
            if frame is None or frame.frame_type == FrameType.BYE:
                return
            if frame.frame_type == FrameType.EMB:
                e = frame.payload.array.astype(self.middle_dtype())
                if e.shape[1] != self.d:
                    self._fail(transport, session_id, ErrorCode.DIMS,
                               f"activation width {e.shape[1]}, expected {self.d}")
                    return
                enriched = middle.forward(e)
                last_e = e
                write_frame(transport, Frame(FrameType.ENRICHED, session_id,
                                             TensorPayload(enriched)))
            elif frame.frame_type == FrameType.GRAD_DOWN:
                if not tuning:
                    self._fail(transport, session_id, ErrorCode.SEQ,
                               "GRAD_DOWN outside a tuning session")
                    return
                if last_e is None:
                    self._fail(transport, session_id, ErrorCode.SEQ,
                               "GRAD_DOWN before any EMB")
                    return
                d_out = frame.payload.array.astype(self.middle_dtype())
                if d_out.shape != last_e.shape:
                    self._fail(transport, session_id, ErrorCode.DIMS,
                               f"gradient shape {d_out.shape} vs activation {last_e.shape}")
                    return
                d_e, grads = middle.backward(last_e, d_out)
                if lora_active:
                    for name in ("mid.lora_u", "mid.lora_v"):
                        if name in grads:
                            acc = lora_grads.get(name)
                            lora_grads[name] = grads[name] if acc is None else acc + grads[name]
                    lora_count += 1
                write_frame(transport, Frame(FrameType.GRAD_UP, session_id,
                                             TensorPayload(d_e)))
            elif frame.frame_type == FrameType.PARAM_ACK:
                if not tuning:
                    self._fail(transport, session_id, ErrorCode.SEQ,
                               "PARAM_ACK outside a tuning session")
                    return
                if lora_active and lora_count and self.lora_lr > 0:
                    middle.lora_u -= (self.lora_lr / lora_count
                                      * lora_grads["mid.lora_u"]).astype(middle.lora_u.dtype)
                    middle.lora_v -= (self.lora_lr / lora_count
                                      * lora_grads["mid.lora_v"]).astype(middle.lora_v.dtype)
                lora_grads, lora_count = {}, 0
                write_frame(transport, Frame(FrameType.PARAM_ACK, session_id, EmptyPayload()))
            else:
                self._fail(transport, session_id, ErrorCode.SEQ,
                           f"unexpected {frame.frame_type.name} frame")
                return

    def middle_dtype(self):
        for attr in ("weight", "wq"):
            w = getattr(self.middle, attr, None)
            if w is not None:
                return w.dtype
        return np.float32


class LoopbackListener:
    """In-process listener; connect() yields the client-side transport."""

    def __init__(self):
        self._pending: list[LoopbackTransport] = []
        self._lock = threading.Lock()
        self._ready = threading.Semaphore(0)
        self._closed = False

    def connect(self) -> LoopbackTransport:
        client_side, server_side = loopback_pair()
        with self._lock:
            self._pending.append(server_side)
        self._ready.release()
        return client_side

    def accept(self) -> LoopbackTransport | None:
        self._ready.acquire()
        with self._lock:
            if self._closed and not self._pending:
                return None
            return self._pending.pop(0)

    def close(self) -> None:
        self._closed = True
        self._ready.release()


class TcpListener:
    """Accept loop over a bound TCP socket."""

    def __init__(self, host: str, port: int):
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.listen()

    @property
    def address(self) -> tuple[str, int]:
        return self._sock.getsockname()

    def accept(self) -> SocketTransport | None:
        try:
            conn, _ = self._sock.accept()
        except OSError:
            return None
        return SocketTransport(conn)

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass


def serve_middle(listener, server: MiddleServer,
                 stop_event: threading.Event | None = None) -> None:
    """Accept connections until the listener closes; one thread per session."""
    threads = []
    while stop_event is None or not stop_event.is_set():
        transport = listener.accept()
        if transport is None:
            break
        t = threading.Thread(target=server.handle_connection, args=(transport,),
                             daemon=True)
        t.start()
        threads.append(t)
    for t in threads:
        t.join(timeout=5)
