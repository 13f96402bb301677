import random

import pytest
from hypothesis import given, strategies as st

from derivlab.bloom import (
    BLOOM_BYTES,
    EMPTY_BLOOM,
    FULL_BLOOM,
    LogsBloom,
    block_bloom,
    bloom_bits,
    fp_rate_estimate,
    insert,
    keccak256,
    may_contain,
)
from derivlab.world import CONFIG_UPDATE_TOPIC, SYSTEM_CONFIG_ADDRESS, Log, Receipt

items = st.binary(min_size=0, max_size=64)


# --- reference Keccak-256 (slow, independent of the library under test) -------

_RC = [
    0x0000000000000001, 0x0000000000008082, 0x800000000000808A, 0x8000000080008000,
    0x000000000000808B, 0x0000000080000001, 0x8000000080008081, 0x8000000000008009,
    0x000000000000008A, 0x0000000000000088, 0x0000000080008009, 0x000000008000000A,
    0x000000008000808B, 0x800000000000008B, 0x8000000000008089, 0x8000000000008003,
    0x8000000000008002, 0x8000000000000080, 0x000000000000800A, 0x800000008000000A,
    0x8000000080008081, 0x8000000000008080, 0x0000000080000001, 0x8000000080008008,
]
_ROT = [[0, 36, 3, 41, 18], [1, 44, 10, 45, 2], [62, 6, 43, 15, 61],
        [28, 55, 25, 21, 56], [27, 20, 39, 8, 14]]
_M = (1 << 64) - 1


def _rol(x, n):
    return ((x << n) | (x >> (64 - n))) & _M if n else x


def _keccak_f(a):
    for rc in _RC:
        c = [a[x][0] ^ a[x][1] ^ a[x][2] ^ a[x][3] ^ a[x][4] for x in range(5)]
        d = [c[(x - 1) % 5] ^ _rol(c[(x + 1) % 5], 1) for x in range(5)]
        a = [[a[x][y] ^ d[x] for y in range(5)] for x in range(5)]
        b = [[0] * 5 for _ in range(5)]
        for x in range(5):
            for y in range(5):
                b[y][(2 * x + 3 * y) % 5] = _rol(a[x][y], _ROT[x][y])
        a = [[b[x][y] ^ (~b[(x + 1) % 5][y] & b[(x + 2) % 5][y]) for y in range(5)] for x in range(5)]
        a[0][0] ^= rc
    return a


def ref_keccak256(msg: bytes) -> bytes:
    rate = 136
    if len(msg) % rate == rate - 1:  # both pad bits share one byte
        padded = bytearray(msg) + b"\x81"
    else:
        padded = bytearray(msg) + b"\x01" + bytes((-len(msg) - 2) % rate) + b"\x80"
    a = [[0] * 5 for _ in range(5)]
    for off in range(0, len(padded), rate):
        block = padded[off:off + rate]
        for i in range(rate // 8):
            x, y = i % 5, i // 5
            a[x][y] ^= int.from_bytes(block[8 * i:8 * i + 8], "little")
        a = _keccak_f(a)
    out = b"".join(a[i % 5][i // 5].to_bytes(8, "little") for i in range(4))
    return out


def ref_bloom_bits(item: bytes):
    d = ref_keccak256(item)
    return tuple(((d[i] << 8) | d[i + 1]) & 2047 for i in (0, 2, 4))


# --- hashing and bit extraction ------------------------------------------------


def test_reference_keccak_known_vector():
    assert ref_keccak256(b"").hex() == "c5d2460186f7233c927e7db2dcc703c0e500b653ca82273b7bfad8045d85a470"


@pytest.mark.parametrize("n", [0, 1, 134, 135, 136, 137, 271, 272])
def test_keccak_matches_reference_at_rate_edges(n):
    data = bytes(range(256))[:n] if n <= 256 else bytes(n)
    assert keccak256(data) == ref_keccak256(data)


@given(st.binary(max_size=300))
def test_keccak_matches_reference(data):
    assert keccak256(data) == ref_keccak256(data)


def test_bloom_bits_system_config_pinned():
    assert ref_bloom_bits(SYSTEM_CONFIG_ADDRESS) == (983, 34, 563)
    assert bloom_bits(SYSTEM_CONFIG_ADDRESS) == (983, 34, 563)


def test_bloom_bits_config_topic_pinned():
    assert bloom_bits(CONFIG_UPDATE_TOPIC) == ref_bloom_bits(CONFIG_UPDATE_TOPIC) == (930, 39, 1611)


@given(items)
def test_bloom_bits_deterministic_and_in_range(x):
    a, b = bloom_bits(x), bloom_bits(x)
    assert a == b
    assert all(0 <= p < 2048 for p in a)


# --- insert / query ------------------------------------------------------------


def test_empty_bloom_contains_nothing():
    assert not may_contain(EMPTY_BLOOM, b"anything")


def test_full_bloom_contains_everything():
    rng = random.Random(1)
    assert all(may_contain(FULL_BLOOM, rng.randbytes(32)) for _ in range(200))


@given(st.lists(items, max_size=40))
def test_no_false_negatives(xs):
    b = EMPTY_BLOOM
    for x in xs:
        b = insert(b, x)
    assert all(may_contain(b, x) for x in xs)


@given(items, items)
def test_insert_monotone_idempotent_commutative(x, y):
    b = insert(EMPTY_BLOOM, x)
    assert b.issuperset(EMPTY_BLOOM)
    assert insert(b, x) == b
    assert insert(insert(EMPTY_BLOOM, x), y) == insert(insert(EMPTY_BLOOM, y), x)
    assert insert(b, y).issuperset(b)


def test_block_bloom_shapes():
    addr = bytes(range(20))
    assert block_bloom([]) == EMPTY_BLOOM
    assert block_bloom([Receipt()]) == EMPTY_BLOOM
    assert 1 <= block_bloom([Receipt((Log(addr),))]).popcount() <= 3
    t1, t2 = b"\x01" * 32, b"\x02" * 32
    two = block_bloom([Receipt((Log(addr, (t1, t2)),))])
    expected = len(set(bloom_bits(addr)) | set(bloom_bits(t1)) | set(bloom_bits(t2)))
    assert two.popcount() == expected <= 9


# --- serialization -------------------------------------------------------------


@given(st.integers(min_value=0, max_value=(1 << 2048) - 1))
def test_bytes_roundtrip(bits):
    b = LogsBloom(bits)
    raw = b.to_bytes()
    assert len(raw) == BLOOM_BYTES
    assert LogsBloom.from_bytes(raw) == b


@given(items)
def test_byte_layout_matches_header_convention(x):
    # position p lives in byte 255 - p // 8, bit p % 8 (as in block headers)
    raw = insert(EMPTY_BLOOM, x).to_bytes()
    expect = bytearray(BLOOM_BYTES)
    for p in bloom_bits(x):
        expect[BLOOM_BYTES - 1 - p // 8] |= 1 << (p % 8)
    assert raw == bytes(expect)


def test_rejects_bad_sizes():
    with pytest.raises(ValueError):
        LogsBloom.from_bytes(b"\x00" * 255)
    with pytest.raises(ValueError):
        LogsBloom(1 << 2048)


# --- false-positive estimate ---------------------------------------------------


def test_fp_estimate_limits():
    assert fp_rate_estimate(0) == 0
    assert fp_rate_estimate(100_000) == pytest.approx(1.0)
    assert fp_rate_estimate(10) < fp_rate_estimate(100) < fp_rate_estimate(500)
    with pytest.raises(ValueError):
        fp_rate_estimate(-1)


def empirical_fp(n: int, blooms: int, queries: int, seed: int = 0) -> float:
    rng = random.Random(seed)
    hits = 0
    for _ in range(blooms):
        b = EMPTY_BLOOM
        for _ in range(n):
            b = insert(b, rng.randbytes(32))
        hits += sum(may_contain(b, rng.randbytes(32)) for _ in range(queries))
    return hits / (blooms * queries)


@pytest.mark.parametrize("n", [10, 50, 100, 500])
def test_fp_estimate_matches_monte_carlo(n):
    assert abs(empirical_fp(n, 150, 40, seed=n) - fp_rate_estimate(n)) <= 0.02
