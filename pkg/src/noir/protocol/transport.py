"""Reliable ordered byte-stream transports and frame I/O helpers.

The protocol runs over anything that delivers bytes in order: a TCP socket
for deployments, or the in-process loopback pair used by deterministic
tests.
"""

from __future__ import annotations

import queue
import socket

from ..errors import Truncated
from .frames import HEADER, MAX_PAYLOAD, Frame, decode_frame, encode_frame
from ..errors import Oversize


class LoopbackTransport:
    """One end of an in-process duplex byte stream."""

    def __init__(self, inbox: queue.Queue, outbox: queue.Queue):
        self._inbox = inbox
        self._outbox = outbox
        self._buffer = b""
        self._closed = False

    def send_bytes(self, data: bytes) -> None:
        if self._closed:
            raise ConnectionError("transport closed")
        self._outbox.put(bytes(data))

    def recv_exactly(self, n: int) -> bytes:
        while len(self._buffer) < n:
            chunk = self._inbox.get()
            if chunk is None:
                if self._buffer:
                    raise Truncated("stream ended mid-frame")
                return b""
            self._buffer += chunk
        out, self._buffer = self._buffer[:n], self._buffer[n:]
        return out

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            self._outbox.put(None)


def loopback_pair() -> tuple[LoopbackTransport, LoopbackTransport]:
    a_to_b: queue.Queue = queue.Queue()
    b_to_a: queue.Queue = queue.Queue()
    return (LoopbackTransport(b_to_a, a_to_b), LoopbackTransport(a_to_b, b_to_a))


class SocketTransport:
    """Frame transport over a connected socket."""

    def __init__(self, sock: socket.socket):
        self._sock = sock

    def send_bytes(self, data: bytes) -> None:
        self._sock.sendall(data)

    def recv_exactly(self, n: int) -> bytes:
        chunks = []
        got = 0
        while got < n:
            chunk = self._sock.recv(n - got)
            if not chunk:
                if got:
                    raise Truncated("stream ended mid-frame")
                return b""
            chunks.append(chunk)
            got += len(chunk)
        return b"".join(chunks)

    def close(self) -> None:
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()


def write_frame(transport, frame: Frame) -> None:
    transport.send_bytes(encode_frame(frame))


def read_frame(transport) -> Frame | None:
    """Read one frame; None on clean end of stream."""
    header = transport.recv_exactly(HEADER.size)
    if not header:
        return None
    _, _, _, _, plen = HEADER.unpack(header)
    if plen > MAX_PAYLOAD:
        raise Oversize(f"declared payload of {plen} bytes exceeds {MAX_PAYLOAD}")
    payload = transport.recv_exactly(plen) if plen else b""
    if plen and len(payload) < plen:
        raise Truncated("stream ended mid-payload")
    return decode_frame(header + payload)
