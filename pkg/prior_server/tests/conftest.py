import subprocess
import sys

from prior_server.protocol import HEADER, encode_frame


def spawn_server(*args, env=None):
    return subprocess.Popen(
        [sys.executable, "-m", "prior_server", *args],
        stdin=subprocess.PIPE,
        stdout=subprocess.PIPE,
        env=env,
    )


def send_frame(proc, msg_type, payload):
    send_raw(proc, encode_frame(msg_type, payload))


def send_raw(proc, blob):
    proc.stdin.write(blob)
    proc.stdin.flush()


def read_frame(proc):
    head = proc.stdout.read(HEADER.size)
    assert len(head) == HEADER.size, "server hung up mid-frame"
    magic, version, msg_type, length = HEADER.unpack(head)
    payload = proc.stdout.read(length)
    assert len(payload) == length
    return magic, version, msg_type, payload
