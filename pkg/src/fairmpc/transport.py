"""Frame exchange between the two parties.

Wire format of one frame (little-endian)::

    length:u32 | tag:u8 | step:u64 | payload: u64 * k

``length`` counts the bytes after itself. ``step`` is a per-session counter
incremented on every exchange; a mismatch means the parties disagree on
where they are in the protocol.

Every exchange is symmetric: send first, then block on the peer's frame. Two
transports are provided with identical byte streams: an in-process queue pair
(tests, single-machine runs) and TCP.
"""

from __future__ import annotations

import enum
import hashlib
import queue
import socket
import struct
import time
from dataclasses import dataclass

import numpy as np

from .errors import BadTag, PeerAborted, PeerDesync, TransportError

_LEN = struct.Struct("<I")
_HEAD = struct.Struct("<BQ")
DEFAULT_TIMEOUT = 120.0


class Tag(enum.IntEnum):
    OPEN = 1
    SYNC = 2
    SHARE_IN = 3
    RESULT = 4
    ABORT = 5


@dataclass
class Frame:
    tag: Tag
    step: int
    payload: np.ndarray

    def to_bytes(self) -> bytes:
        body = _HEAD.pack(int(self.tag), self.step) + np.asarray(self.payload, dtype="<u8").tobytes()
        return _LEN.pack(len(body)) + body

    @classmethod
    def from_body(cls, body: bytes) -> "Frame":
        if len(body) < _HEAD.size or (len(body) - _HEAD.size) % 8:
            raise BadTag(f"malformed frame of {len(body)} bytes")
        tag, step = _HEAD.unpack_from(body)
        try:
            tag = Tag(tag)
        except ValueError:
            raise BadTag(f"unknown frame tag {tag}") from None
        payload = np.frombuffer(body[_HEAD.size:], dtype="<u8").astype(np.uint64)
        return cls(tag, step, payload)


class Transport:
    """Base class; subclasses move raw bytes."""

    def __init__(self, record: bool = False):
        self.step = 0
        self.record = record
        self.sent: list[bytes] = []
        self.received: list[bytes] = []
        self._digest = hashlib.sha256()
        self.frames_sent = 0
        self.bytes_sent = 0

    # subclass hooks
    def _send_bytes(self, data: bytes) -> None:
        raise NotImplementedError

    def _recv_body(self) -> bytes:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def send(self, frame: Frame) -> None:
        data = frame.to_bytes()
        self._digest.update(b"S" + data)
        self.frames_sent += 1
        self.bytes_sent += len(data)
        if self.record:
            self.sent.append(data)
        self._send_bytes(data)

    def recv(self) -> Frame:
        body = self._recv_body()
        self._digest.update(b"R" + _LEN.pack(len(body)) + body)
        if self.record:
            self.received.append(_LEN.pack(len(body)) + body)
        return Frame.from_body(body)

    def exchange(self, tag: Tag, payload=(), expect: set[Tag] | None = None) -> Frame:
        """Send our frame for the current step and return the peer's frame for it."""
        step = self.step
        self.step += 1
        self.send(Frame(tag, step, np.asarray(payload, dtype=np.uint64).reshape(-1)))
        peer = self.recv()
        if peer.tag == Tag.ABORT:
            code = int(peer.payload[0]) if len(peer.payload) else 0
            raise PeerAborted(code)
        if peer.step != step:
            self.abort(PeerDesync.exit_code)
            raise PeerDesync(f"local step {step}, peer step {peer.step}")
        if peer.tag not in (expect or {tag}):
            self.abort(BadTag.exit_code)
            raise BadTag(f"expected {sorted(t.name for t in (expect or {tag}))}, got {peer.tag.name}")
        return peer

    def abort(self, code: int) -> None:
        """Best-effort notification so the peer stops waiting."""
        try:
            self._send_bytes(Frame(Tag.ABORT, self.step, np.array([code], np.uint64)).to_bytes())
        except Exception:
            pass

    def transcript_digest(self) -> str:
        return self._digest.hexdigest()


class LocalTransport(Transport):
    """In-process endpoint backed by a pair of queues carrying encoded frames."""

    def __init__(self, inbox: queue.Queue, outbox: queue.Queue, timeout: float = DEFAULT_TIMEOUT,
                 record: bool = False):
        super().__init__(record)
        self.inbox, self.outbox, self.timeout = inbox, outbox, timeout

    @classmethod
    def pair(cls, timeout: float = DEFAULT_TIMEOUT, record: bool = False):
        a, b = queue.SimpleQueue(), queue.SimpleQueue()
        return cls(a, b, timeout, record), cls(b, a, timeout, record)

    def _send_bytes(self, data: bytes) -> None:
        self.outbox.put(data)

    def _recv_body(self) -> bytes:
        try:
            data = self.inbox.get(timeout=self.timeout)
        except queue.Empty:
            raise TransportError("timed out waiting for peer") from None
        (length,) = _LEN.unpack_from(data)
        if length != len(data) - _LEN.size:
            raise BadTag("length prefix does not match frame size")
        return data[_LEN.size:]


class SocketTransport(Transport):
    def __init__(self, sock: socket.socket, record: bool = False):
        super().__init__(record)
        self.sock = sock
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

    @classmethod
    def listen(cls, host: str, port: int, timeout: float = DEFAULT_TIMEOUT, record: bool = False,
               ready=None):
        """Accept exactly one peer. ``ready`` (if given) is called with the bound port."""
        srv = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            srv.bind((host, port))
            srv.listen(1)
            srv.settimeout(timeout)
            if ready is not None:
                ready(srv.getsockname()[1])
            conn, _ = srv.accept()
        except OSError as exc:
            raise TransportError(f"listen on {host}:{port} failed: {exc}") from exc
        finally:
            srv.close()
        conn.settimeout(timeout)
        return cls(conn, record)

    @classmethod
    def connect(cls, host: str, port: int, timeout: float = DEFAULT_TIMEOUT, retries: int = 0,
                record: bool = False):
        last = None
        for attempt in range(retries + 1):
            try:
                sock = socket.create_connection((host, port), timeout=timeout)
                return cls(sock, record)
            except OSError as exc:
                last = exc
                if attempt < retries:
                    time.sleep(0.2)
        raise TransportError(f"cannot connect to {host}:{port}: {last}")

    def _send_bytes(self, data: bytes) -> None:
        try:
            self.sock.sendall(data)
        except OSError as exc:
            raise TransportError(f"send failed: {exc}") from exc

    def _recv_exact(self, n: int) -> bytes:
        buf = bytearray()
        while len(buf) < n:
            try:
                chunk = self.sock.recv(n - len(buf))
            except OSError as exc:
                raise TransportError(f"receive failed: {exc}") from exc
            if not chunk:
                raise TransportError("connection closed by peer")
            buf += chunk
        return bytes(buf)

    def _recv_body(self) -> bytes:
        (length,) = _LEN.unpack(self._recv_exact(_LEN.size))
        return self._recv_exact(length)

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


def parse_endpoint(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"expected host:port, got {text!r}")
    return host, int(port)
