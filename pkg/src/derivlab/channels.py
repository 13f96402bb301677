"""Frame wire format, channel bank, and batch-record framing.

Frame layout (big-endian)::

    channel_id[16] | frame_number u16 | is_last u8 | length u32 | payload

A batcher tx's DA bytes are one or more frames back to back. A channel's
payload (frames concatenated by number) is a sequence of ``u32``-length
prefixed batch records. No compression.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .errors import MalformedFrame

FRAME_HEADER = struct.Struct(">16sHBI")
FRAME_BUDGET = 120 * 1024
_RECORD_LEN = struct.Struct(">I")


@dataclass(frozen=True)
class Frame:
    channel_id: bytes
    frame_number: int
    is_last: bool
    payload: bytes

    def encode(self) -> bytes:
        return FRAME_HEADER.pack(
            self.channel_id, self.frame_number, int(self.is_last), len(self.payload)
        ) + self.payload


def decode_frames(data: bytes) -> list[Frame]:
    frames = []
    pos = 0
    while pos < len(data):
        if len(data) - pos < FRAME_HEADER.size:
            raise MalformedFrame(f"truncated frame header at offset {pos}")
        cid, num, last, length = FRAME_HEADER.unpack_from(data, pos)
        if last not in (0, 1):
            raise MalformedFrame(f"is_last byte must be 0 or 1, got {last}")
        pos += FRAME_HEADER.size
        if len(data) - pos < length:
            raise MalformedFrame(f"frame payload truncated: need {length}, have {len(data) - pos}")
        frames.append(Frame(cid, num, bool(last), data[pos:pos + length]))
        pos += length
    if not frames:
        raise MalformedFrame("empty DA element")
    return frames


def encode_records(records: Iterable[bytes]) -> bytes:
    return b"".join(_RECORD_LEN.pack(len(r)) + r for r in records)


def decode_records(payload: bytes) -> list[bytes]:
    out = []
    pos = 0
    while pos < len(payload):
        if len(payload) - pos < _RECORD_LEN.size:
            raise MalformedFrame("truncated batch record length")
        (n,) = _RECORD_LEN.unpack_from(payload, pos)
        pos += _RECORD_LEN.size
        if len(payload) - pos < n:
            raise MalformedFrame("truncated batch record")
        out.append(payload[pos:pos + n])
        pos += n
    return out


def split_into_frames(channel_id: bytes, payload: bytes, budget: int = FRAME_BUDGET) -> list[Frame]:
    """Cut a channel payload into frames whose encoded size fits ``budget``."""
    room = budget - FRAME_HEADER.size
    chunks = [payload[i:i + room] for i in range(0, len(payload), room)] or [b""]
    return [
        Frame(channel_id, i, i == len(chunks) - 1, chunk) for i, chunk in enumerate(chunks)
    ]


@dataclass
class Channel:
    id: bytes
    opened_at: int
    frames: dict[int, Frame] = field(default_factory=dict)
    last_number: int | None = None

    @property
    def closed(self) -> bool:
        return self.last_number is not None and all(
            i in self.frames for i in range(self.last_number + 1)
        )

    def payload(self) -> bytes:
        return b"".join(self.frames[i].payload for i in range(self.last_number + 1))


class ChannelBank:
    """Buffers frames per channel and releases completed channel payloads.

    A channel whose first frame arrived at L1 block ``b`` is discarded once
    frames are ingested at a block later than ``b + timeout_blocks``.
    """

    def __init__(self, timeout_blocks: int):
        if timeout_blocks < 1:
            raise ValueError("timeout_blocks must be >= 1")
        self.timeout_blocks = timeout_blocks
        self.channels: dict[bytes, Channel] = {}
        self.dropped: list[bytes] = []

    def prune(self, block_number: int) -> None:
        for cid in [
            cid for cid, ch in self.channels.items()
            if block_number - ch.opened_at > self.timeout_blocks
        ]:
            self.dropped.append(cid)
            del self.channels[cid]

    def ingest(self, frame: Frame, block_number: int) -> bytes | None:
        self.prune(block_number)
        ch = self.channels.get(frame.channel_id)
        if ch is None:
            ch = self.channels[frame.channel_id] = Channel(frame.channel_id, block_number)
        if frame.frame_number in ch.frames:
            return None  # duplicate frame numbers are ignored
        if ch.last_number is not None and frame.frame_number > ch.last_number:
            return None
        if frame.is_last:
            if ch.last_number is not None:
                return None
            ch.last_number = frame.frame_number
        ch.frames[frame.frame_number] = frame
        if ch.closed:
            del self.channels[frame.channel_id]
            return ch.payload()
        return None


def iter_channel_payloads(bank: ChannelBank, data: bytes, block_number: int) -> Iterator[bytes]:
    for frame in decode_frames(data):
        done = bank.ingest(frame, block_number)
        if done is not None:
            yield done
