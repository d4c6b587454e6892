"""Single-threaded request loop and command-line entry point.

The server answers INIT with its capabilities and then serves RESTORE
frames one at a time.  A malformed frame gets an ERROR reply and the
loop continues; a closed transport ends the connection cleanly.  It
keeps no state between requests, so running several processes side by
side is the way to scale.
"""

from __future__ import annotations

import argparse
import json
import logging
import socket
import sys
from dataclasses import dataclass

from . import modes
from .protocol import (
    HEADER,
    MAGIC,
    MAX_PAYLOAD,
    MSG_ERROR,
    MSG_INIT,
    MSG_INIT_ACK,
    MSG_RESPONSE,
    MSG_RESTORE,
    VERSION,
    FrameError,
    decode_tensor,
    encode_frame,
    encode_tensor,
)

log = logging.getLogger("prior_server")

_MODES = ("echo", "gaussian", "median", "custom")


@dataclass(frozen=True)
class ServerConfig:
    """One active mode plus the family tag announced at INIT."""

    mode: str
    sigma: float | None = None
    window: int | None = None
    entry: str | None = None
    family: str | None = None

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ValueError(f"unknown mode: {self.mode!r}")
        needed = {"gaussian": "sigma", "median": "window", "custom": "entry"}.get(self.mode)
        for field in ("sigma", "window", "entry"):
            value = getattr(self, field)
            if field == needed and value is None:
                raise ValueError(f"{self.mode} mode requires --{field}")
            if field != needed and value is not None:
                raise ValueError(f"--{field} does not apply to {self.mode} mode")

    def family_tag(self) -> str:
        return self.family if self.family is not None else self.mode

    def build(self) -> modes.Mode:
        if self.mode == "echo":
            return modes.echo_mode()
        if self.mode == "gaussian":
            return modes.gaussian_mode(self.sigma)
        if self.mode == "median":
            return modes.median_mode(self.window)
        return modes.custom_mode(self.entry)


def _read_exact(stream, n: int) -> bytes | None:
    """Read exactly n bytes, or None once the stream is exhausted."""
    chunks = []
    got = 0
    while got < n:
        chunk = stream.read(n - got)
        if not chunk:
            return None
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


def serve_connection(rstream, wstream, config: ServerConfig) -> None:
    """Answer frames on one connection until the peer hangs up."""
    restore = config.build()
    initialized = False

    def reply(msg_type: int, payload: bytes) -> None:
        wstream.write(encode_frame(msg_type, payload))
        wstream.flush()

    def refuse(message: str) -> None:
        log.debug("refusing frame: %s", message)
        reply(MSG_ERROR, message.encode("utf-8"))

    while True:
        head = _read_exact(rstream, HEADER.size)
        if head is None:
            return
        magic, version, msg_type, length = HEADER.unpack(head)
        if length > MAX_PAYLOAD:
            refuse(f"payload of {length} bytes exceeds the limit")
            continue
        payload = _read_exact(rstream, length)
        if payload is None:
            return
        if magic != MAGIC:
            refuse("bad magic")
            continue
        if version != VERSION:
            refuse(f"unsupported protocol version {version}")
            continue
        if msg_type == MSG_INIT:
            try:
                json.loads(payload.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError):
                refuse("INIT payload is not valid JSON")
                continue
            initialized = True
            ack = {"family": config.family_tag(), "shape_policy": "any", "dims": None}
            reply(MSG_INIT_ACK, json.dumps(ack).encode("utf-8"))
        elif msg_type == MSG_RESTORE:
            if not initialized:
                refuse("not initialized")
                continue
            try:
                result = restore(decode_tensor(payload))
                reply(MSG_RESPONSE, encode_tensor(result))
            except (FrameError, ValueError) as exc:
                refuse(str(exc))
        else:
            refuse(f"unexpected frame type {msg_type}")


def serve_stdio(config: ServerConfig) -> None:
    serve_connection(sys.stdin.buffer, sys.stdout.buffer, config)


def serve_tcp(config: ServerConfig, port: int) -> None:
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as listener:
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        listener.bind(("127.0.0.1", port))
        listener.listen(1)
        host, bound = listener.getsockname()
        print(f"listening on {host}:{bound}", file=sys.stderr, flush=True)
        while True:
            conn, peer = listener.accept()
            log.info("connection from %s:%d", *peer)
            with conn, conn.makefile("rb") as r, conn.makefile("wb") as w:
                serve_connection(r, w, config)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="prior-server",
        description="Serve a restorer over the binary restoration protocol.",
    )
    parser.add_argument("--mode", choices=_MODES, default="echo")
    parser.add_argument("--sigma", type=float, help="gaussian mode: smoothing strength")
    parser.add_argument("--window", type=int, help="median mode: odd neighborhood size")
    parser.add_argument(
        "--entry", help="custom mode: package.module:function to serve as the restorer"
    )
    parser.add_argument("--family", help="capability tag announced at INIT (default: the mode)")
    transport = parser.add_mutually_exclusive_group()
    transport.add_argument("--stdio", action="store_true", help="serve on stdin/stdout (default)")
    transport.add_argument("--port", type=int, help="serve on a local TCP port (0 = ephemeral)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=logging.WARNING)
    try:
        config = ServerConfig(
            mode=args.mode,
            sigma=args.sigma,
            window=args.window,
            entry=args.entry,
            family=args.family,
        )
        config.build()  # fail fast on a bad mode parameter or entry point
    except (ValueError, ImportError, AttributeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        if args.port is not None:
            serve_tcp(config, args.port)
        else:
            serve_stdio(config)
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    sys.exit(main())
