"""Reference server for the binary restoration wire protocol."""

from .protocol import (
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
from .server import ServerConfig, main, serve_connection

__all__ = [
    "MAGIC",
    "VERSION",
    "MSG_INIT",
    "MSG_INIT_ACK",
    "MSG_RESTORE",
    "MSG_RESPONSE",
    "MSG_ERROR",
    "MAX_PAYLOAD",
    "FrameError",
    "encode_frame",
    "encode_tensor",
    "decode_tensor",
    "ServerConfig",
    "serve_connection",
    "main",
]
