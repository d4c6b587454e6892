"""Client for out-of-process restorers speaking a tiny binary protocol.

Every frame is `FIRE` + version byte + type byte + u32 LE payload
length + payload.  INIT/INIT_ACK carry UTF-8 JSON capabilities; RESTORE
and RESPONSE carry a raw tensor (u32 rank, u64 dims, f32 LE data);
ERROR carries a UTF-8 message.  One request in flight at a time.
"""

from __future__ import annotations

import json
import os
import select
import shlex
import socket
import struct
import subprocess
import time
from dataclasses import dataclass

import numpy as np

from .image import Image
from .restorers import Restorer

__all__ = [
    "MAGIC",
    "VERSION",
    "MSG_INIT",
    "MSG_INIT_ACK",
    "MSG_RESTORE",
    "MSG_RESPONSE",
    "MSG_ERROR",
    "RemoteError",
    "ProtocolError",
    "RemoteTimeout",
    "ServerError",
    "ShapeMismatch",
    "StateError",
    "Capabilities",
    "RemoteHandle",
    "RemoteRestorer",
    "encode_frame",
    "encode_tensor",
    "decode_tensor",
]

MAGIC = b"FIRE"
VERSION = 1

MSG_INIT = 1
MSG_INIT_ACK = 2
MSG_RESTORE = 3
MSG_RESPONSE = 4
MSG_ERROR = 5

MAX_PAYLOAD = 1 << 30


class RemoteError(RuntimeError):
    pass


class ProtocolError(RemoteError):
    pass


class RemoteTimeout(RemoteError):
    pass


class ServerError(RemoteError):
    """The peer answered with an ERROR frame; the message is its payload."""


class ShapeMismatch(RemoteError):
    pass


class StateError(RemoteError):
    """Handle used out of order (restore before init, double init, ...)."""


@dataclass(frozen=True)
class Capabilities:
    family: str
    shape_policy: str
    dims: tuple | None = None


def encode_frame(msg_type: int, payload: bytes) -> bytes:
    return MAGIC + struct.pack("<BBI", VERSION, msg_type, len(payload)) + payload


def encode_tensor(data: np.ndarray) -> bytes:
    # asarray, not ascontiguousarray: the latter promotes rank-0 to rank-1
    data = np.asarray(data, dtype="<f4", order="C")
    header = struct.pack("<I", data.ndim) + b"".join(
        struct.pack("<Q", d) for d in data.shape
    )
    return header + data.tobytes()


def decode_tensor(payload: bytes) -> np.ndarray:
    if len(payload) < 4:
        raise ProtocolError("tensor payload shorter than its rank field")
    (rank,) = struct.unpack_from("<I", payload, 0)
    if rank > 8:
        raise ProtocolError(f"implausible tensor rank {rank}")
    offset = 4 + 8 * rank
    if len(payload) < offset:
        raise ProtocolError("tensor payload shorter than its dim list")
    dims = struct.unpack_from(f"<{rank}Q", payload, 4)
    count = int(np.prod(dims)) if rank else 1
    expected = offset + 4 * count
    if len(payload) != expected:
        raise ProtocolError(
            f"tensor payload length {len(payload)} does not match dims {dims}"
        )
    flat = np.frombuffer(payload, dtype="<f4", count=count, offset=offset)
    return flat.reshape(dims).astype(np.float64)


class _SocketTransport:
    def __init__(self, sock: socket.socket):
        self._sock = sock

    def write(self, data: bytes):
        self._sock.sendall(data)

    def read(self, n: int, timeout_s: float) -> bytes:
        chunks = b""
        deadline = time.monotonic() + timeout_s
        while len(chunks) < n:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise RemoteTimeout(f"timed out waiting for {n} bytes")
            self._sock.settimeout(remaining)
            try:
                chunk = self._sock.recv(n - len(chunks))
            except socket.timeout:
                raise RemoteTimeout(f"timed out waiting for {n} bytes") from None
            if not chunk:
                raise ProtocolError("connection closed mid-frame")
            chunks += chunk
        return chunks

    def close(self):
        try:
            self._sock.close()
        except OSError:
            pass


class _PipeTransport:
    def __init__(self, proc: subprocess.Popen):
        self._proc = proc

    def write(self, data: bytes):
        self._proc.stdin.write(data)
        self._proc.stdin.flush()

    def read(self, n: int, timeout_s: float) -> bytes:
        fd = self._proc.stdout.fileno()
        chunks = b""
        deadline = time.monotonic() + timeout_s
        while len(chunks) < n:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise RemoteTimeout(f"timed out waiting for {n} bytes")
            ready, _, _ = select.select([fd], [], [], remaining)
            if not ready:
                continue
            chunk = os.read(fd, n - len(chunks))
            if not chunk:
                raise ProtocolError("server closed its pipe mid-frame")
            chunks += chunk
        return chunks

    def close(self):
        try:
            self._proc.stdin.close()
        except OSError:
            pass
        try:
            self._proc.wait(timeout=2)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            self._proc.wait()


class RemoteHandle:
    """One connection to a restoration server; strict request/response."""

    def __init__(self, transport, timeout_ms: int = 5000):
        self._transport = transport
        self.timeout_ms = int(timeout_ms)
        self.capabilities: Capabilities | None = None
        self._busy = False

    @staticmethod
    def from_tcp(host: str, port: int, timeout_ms: int = 5000) -> "RemoteHandle":
        sock = socket.create_connection((host, port), timeout=timeout_ms / 1000.0)
        return RemoteHandle(_SocketTransport(sock), timeout_ms)

    @staticmethod
    def from_command(argv, timeout_ms: int = 5000) -> "RemoteHandle":
        if isinstance(argv, str):
            argv = shlex.split(argv)
        proc = subprocess.Popen(argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE)
        return RemoteHandle(_PipeTransport(proc), timeout_ms)

    # -- framing ------------------------------------------------------------

    def _send(self, msg_type: int, payload: bytes):
        self._transport.write(encode_frame(msg_type, payload))

    def _recv(self) -> tuple[int, bytes]:
        timeout_s = self.timeout_ms / 1000.0
        header = self._transport.read(10, timeout_s)
        if header[:4] != MAGIC:
            raise ProtocolError(f"bad magic {header[:4]!r}")
        version, msg_type, length = struct.unpack("<BBI", header[4:])
        if version != VERSION:
            raise ProtocolError(f"unsupported protocol version {version}")
        if length > MAX_PAYLOAD:
            raise ProtocolError(f"payload length {length} exceeds limit")
        payload = self._transport.read(length, timeout_s) if length else b""
        return msg_type, payload

    def _round_trip(self, msg_type: int, payload: bytes) -> tuple[int, bytes]:
        if self._busy:
            raise StateError("a request is already in flight on this handle")
        self._busy = True
        try:
            self._send(msg_type, payload)
            return self._recv()
        finally:
            self._busy = False

    # -- protocol operations -------------------------------------------------

    def handshake(self) -> Capabilities:
        if self.capabilities is not None:
            raise StateError("handshake already completed on this handle")
        request = json.dumps({"family": "any", "shape_policy": "any"}).encode()
        msg_type, payload = self._round_trip(MSG_INIT, request)
        if msg_type == MSG_ERROR:
            raise ServerError(payload.decode("utf-8", "replace"))
        if msg_type != MSG_INIT_ACK:
            raise ProtocolError(f"expected INIT_ACK, got frame type {msg_type}")
        try:
            info = json.loads(payload.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ProtocolError(f"unparseable INIT_ACK payload: {exc}") from None
        caps = Capabilities(
            family=str(info.get("family", "unknown")),
            shape_policy=str(info.get("shape_policy", "any")),
            dims=tuple(info["dims"]) if info.get("dims") else None,
        )
        self.capabilities = caps
        return caps

    def restore_tensor(self, data: np.ndarray) -> np.ndarray:
        if self.capabilities is None:
            raise StateError("handshake must complete before restore")
        msg_type, payload = self._round_trip(MSG_RESTORE, encode_tensor(data))
        if msg_type == MSG_ERROR:
            raise ServerError(payload.decode("utf-8", "replace"))
        if msg_type != MSG_RESPONSE:
            raise ProtocolError(f"expected RESPONSE, got frame type {msg_type}")
        out = decode_tensor(payload)
        if out.shape != data.shape:
            raise ShapeMismatch(f"server returned {out.shape}, sent {data.shape}")
        return out

    def close(self):
        self._transport.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def remote_restore(handle: RemoteHandle, x: Image) -> Image:
    """Round-trip an image through the server, clamping on the way back."""
    out = handle.restore_tensor(x.data)
    return Image(np.clip(out, 0.0, 1.0))


class RemoteRestorer(Restorer):
    """Restorer facade over a RemoteHandle; connects and handshakes eagerly."""

    kind = "remote"
    compatible_kinds = ("identity", "convolution", "mask", "jpeg_surrogate")

    def __init__(self, handle: RemoteHandle):
        self.handle = handle
        if handle.capabilities is None:
            handle.handshake()

    @staticmethod
    def from_address(address: str, timeout_ms: int = 5000) -> "RemoteRestorer":
        """"host:port" dials TCP; "cmd:<command line>" spawns a child process."""
        if address.startswith("cmd:"):
            return RemoteRestorer(
                RemoteHandle.from_command(address[len("cmd:"):], timeout_ms)
            )
        host, sep, port = address.rpartition(":")
        if not sep or not port.isdigit():
            raise ValueError(f"malformed remote address: {address!r}")
        return RemoteRestorer(RemoteHandle.from_tcp(host, int(port), timeout_ms))

    def restore(self, y: Image, degradation=None) -> Image:
        return remote_restore(self.handle, y)
