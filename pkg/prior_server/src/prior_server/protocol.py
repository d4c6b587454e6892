"""Frame and tensor codec for the restoration wire protocol.

Every frame is ``FIRE`` + version byte + type byte + u32 LE payload
length + payload.  INIT and INIT_ACK carry UTF-8 JSON capabilities;
RESTORE and RESPONSE carry a raw tensor (u32 rank, one u64 per
dimension, f32 LE data); ERROR carries a UTF-8 message.
"""

from __future__ import annotations

import math
import struct

import numpy as np

MAGIC = b"FIRE"
VERSION = 1

MSG_INIT = 1
MSG_INIT_ACK = 2
MSG_RESTORE = 3
MSG_RESPONSE = 4
MSG_ERROR = 5

MAX_PAYLOAD = 1 << 30
MAX_RANK = 32

HEADER = struct.Struct("<4sBBL")


class FrameError(ValueError):
    """A payload that does not decode as what its frame type promises."""


def encode_frame(msg_type: int, payload: bytes) -> bytes:
    if len(payload) > MAX_PAYLOAD:
        raise FrameError(f"payload of {len(payload)} bytes exceeds the limit")
    return HEADER.pack(MAGIC, VERSION, msg_type, len(payload)) + payload


def encode_tensor(data: np.ndarray) -> bytes:
    # asarray, not ascontiguousarray: the latter promotes rank-0 to rank-1
    data = np.asarray(data, dtype="<f4", order="C")
    head = struct.pack("<L", data.ndim)
    head += b"".join(struct.pack("<Q", d) for d in data.shape)
    return head + data.tobytes()


def decode_tensor(payload: bytes) -> np.ndarray:
    """Parse a wire tensor, widening losslessly to float64."""
    if len(payload) < 4:
        raise FrameError("tensor payload shorter than its rank field")
    (rank,) = struct.unpack_from("<L", payload)
    if rank > MAX_RANK:
        raise FrameError(f"tensor rank {rank} exceeds the limit of {MAX_RANK}")
    head = 4 + 8 * rank
    if len(payload) < head:
        raise FrameError("tensor payload shorter than its dimension list")
    dims = struct.unpack_from(f"<{rank}Q", payload, 4)
    count = math.prod(dims)
    if len(payload) != head + 4 * count:
        raise FrameError(
            f"tensor payload holds {len(payload) - head} bytes, "
            f"dimensions require {4 * count}"
        )
    data = np.frombuffer(payload, dtype="<f4", offset=head, count=count)
    return data.reshape(dims).astype(np.float64)
