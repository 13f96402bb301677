import pytest
from hypothesis import given, strategies as st

from derivlab.channels import (
    FRAME_HEADER,
    ChannelBank,
    Frame,
    decode_frames,
    decode_records,
    encode_records,
    split_into_frames,
)
from derivlab.errors import MalformedFrame

cid = st.binary(min_size=16, max_size=16)


@given(cid, st.lists(st.binary(max_size=200), max_size=20), st.integers(FRAME_HEADER.size + 1, 600))
def test_split_reassemble_roundtrip(channel_id, records, budget):
    payload = encode_records(records)
    frames = split_into_frames(channel_id, payload, budget)
    assert all(len(f.encode()) <= budget for f in frames)
    assert [f.frame_number for f in frames] == list(range(len(frames)))
    assert [f.is_last for f in frames].count(True) == 1 and frames[-1].is_last
    data = b"".join(f.encode() for f in frames)
    assert decode_frames(data) == frames
    bank = ChannelBank(timeout_blocks=5)
    outs = [bank.ingest(f, 1) for f in frames]
    assert outs[:-1] == [None] * (len(frames) - 1)
    assert decode_records(outs[-1]) == records


def test_single_frame_channel_emits_immediately():
    bank = ChannelBank(3)
    assert bank.ingest(Frame(b"c" * 16, 0, True, b"xyz"), 10) == b"xyz"
    assert not bank.channels


def test_frames_across_blocks():
    bank = ChannelBank(3)
    assert bank.ingest(Frame(b"c" * 16, 0, False, b"ab"), 10) is None
    assert bank.ingest(Frame(b"c" * 16, 1, True, b"cd"), 12) == b"abcd"


def test_out_of_order_and_duplicates():
    bank = ChannelBank(3)
    assert bank.ingest(Frame(b"c" * 16, 1, True, b"cd"), 1) is None
    assert bank.ingest(Frame(b"c" * 16, 1, True, b"zz"), 1) is None
    assert bank.ingest(Frame(b"c" * 16, 0, False, b"ab"), 1) == b"abcd"


def test_timeout_drops_channel():
    bank = ChannelBank(3)
    bank.ingest(Frame(b"c" * 16, 0, False, b"ab"), 10)
    assert bank.ingest(Frame(b"c" * 16, 1, True, b"cd"), 14) is None
    assert bank.dropped == [b"c" * 16]


@pytest.mark.parametrize("data", [
    b"",
    b"\x00" * 10,
    Frame(b"c" * 16, 0, True, b"abc").encode()[:-1],
    FRAME_HEADER.pack(b"c" * 16, 0, 2, 0),
])
def test_malformed(data):
    with pytest.raises(MalformedFrame):
        decode_frames(data)


def test_truncated_records():
    with pytest.raises(MalformedFrame):
        decode_records(b"\x00\x00\x00\x05ab")
