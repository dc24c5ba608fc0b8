"""Byte framing for topic-multiplexed streams.

Layout (little-endian)::

    FF FE | len:u16 | len_cksum:u8 | topic:u16 | payload[len] | cksum:u8

``len_cksum = 255 - (len_lo + len_hi) % 256`` and
``cksum = 255 - (topic_lo + topic_hi + sum(payload)) % 256``. The fixed
overhead is 8 bytes per frame.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

SYNC = b"\xff\xfe"
HEADER_SIZE = 7  # sync + len + len_cksum + topic
FRAME_OVERHEAD = 8
MAX_PAYLOAD = 0xFFFF

_LEN = struct.Struct("<H")
_HEAD = struct.Struct("<2sHBH")


class FrameTooLargeError(ValueError):
    pass


def _checksum(data: bytes | bytearray | memoryview) -> int:
    return 255 - (sum(data) % 256)


def encode_frame(topic_id: int, payload: bytes = b"") -> bytes:
    if len(payload) > MAX_PAYLOAD:
        raise FrameTooLargeError(f"payload of {len(payload)} bytes exceeds {MAX_PAYLOAD}")
    if not 0 <= topic_id <= 0xFFFF:
        raise ValueError(f"topic id {topic_id} does not fit in 16 bits")
    n = len(payload)
    head = _HEAD.pack(SYNC, n, 255 - ((n & 0xFF) + (n >> 8)) % 256, topic_id)
    cksum = 255 - ((topic_id & 0xFF) + (topic_id >> 8) + sum(payload)) % 256
    return b"".join((head, payload, bytes((cksum,))))


@dataclass
class DecoderStats:
    frames: int = 0
    corrupted: int = 0
    skipped_bytes: int = 0


class FrameDecoder:
    """Incremental decoder; feed arbitrary chunks, collect whole frames.

    Garbage between frames is skipped. A frame failing either checksum is
    dropped, counted in ``stats.corrupted``, and scanning resumes one byte
    after its sync marker.
    """

    def __init__(self, max_payload: int = MAX_PAYLOAD):
        self._buf = bytearray()
        self.max_payload = max_payload
        self.stats = DecoderStats()

    def feed(self, data: bytes) -> list[tuple[int, bytes]]:
        if not self._buf and len(data) >= FRAME_OVERHEAD and data[0] == 0xFF and data[1] == 0xFE:
            # fast path: exactly one intact frame and nothing buffered
            length = data[2] | (data[3] << 8)
            if (
                len(data) == length + FRAME_OVERHEAD
                and length <= self.max_payload
                and (data[2] + data[3] + data[4]) % 256 == 255
                and (sum(data) - 0xFF - 0xFE - data[2] - data[3] - data[4]) % 256 == 255
            ):
                self.stats.frames += 1
                return [(data[5] | (data[6] << 8), bytes(data[HEADER_SIZE:-1]))]
        self._buf += data
        frames: list[tuple[int, bytes]] = []
        buf = self._buf
        pos = 0
        while True:
            start = buf.find(SYNC, pos)
            if start < 0:
                # keep a trailing 0xFF: it may be the first half of a sync pair
                keep = 1 if buf and buf[-1] == 0xFF else 0
                self.stats.skipped_bytes += len(buf) - pos - keep
                pos = len(buf) - keep
                break
            self.stats.skipped_bytes += start - pos
            pos = start
            if len(buf) - start < HEADER_SIZE:
                break
            length = buf[start + 2] | (buf[start + 3] << 8)
            if (buf[start + 2] + buf[start + 3] + buf[start + 4]) % 256 != 255 or length > self.max_payload:
                self.stats.corrupted += 1
                pos = start + 1
                continue
            end = start + HEADER_SIZE + length + 1
            if len(buf) < end:
                break
            payload = bytes(buf[start + HEADER_SIZE : end - 1])
            ok = (buf[start + 5] + buf[start + 6] + sum(payload) + buf[end - 1]) % 256 == 255
            topic = buf[start + 5] | (buf[start + 6] << 8)
            if ok:
                frames.append((topic, payload))
                self.stats.frames += 1
                pos = end
            else:
                self.stats.corrupted += 1
                pos = start + 1
        del buf[:pos]
        return frames

    @property
    def pending(self) -> int:
        """Bytes held while waiting for the rest of a frame."""
        return len(self._buf)


def decode_frame(data: bytes) -> tuple[int, bytes] | None:
    """Decode the first complete frame in ``data``; ``None`` means more bytes are needed."""
    frames = FrameDecoder().feed(data)
    return frames[0] if frames else None
