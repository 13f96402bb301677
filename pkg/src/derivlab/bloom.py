"""2048-bit header logs bloom with Ethereum semantics.

Each item (a log's emitting address or one of its topics) is hashed with
Keccak-256; the low 11 bits of the first three big-endian 16-bit words
select three bit positions. Position ``p`` is bit ``p`` of the bloom read as
a 2048-bit big-endian integer, so ``to_bytes`` yields the exact 256-byte
layout found in block headers.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable

from Crypto.Hash import keccak

BLOOM_BITS = 2048
BLOOM_BYTES = BLOOM_BITS // 8
HASHES_PER_ITEM = 3
_FULL = (1 << BLOOM_BITS) - 1


def keccak256(data: bytes) -> bytes:
    return keccak.new(data=data, digest_bits=256).digest()


@lru_cache(maxsize=1 << 16)
def bloom_bits(item: bytes) -> tuple[int, int, int]:
    d = keccak256(item)
    return (
        ((d[0] << 8) | d[1]) & 0x7FF,
        ((d[2] << 8) | d[3]) & 0x7FF,
        ((d[4] << 8) | d[5]) & 0x7FF,
    )


def _mask(item: bytes) -> int:
    p1, p2, p3 = bloom_bits(item)
    return (1 << p1) | (1 << p2) | (1 << p3)


@dataclass(frozen=True)
class LogsBloom:
    bits: int = 0

    def __post_init__(self):
        if not 0 <= self.bits <= _FULL:
            raise ValueError("bloom must fit in 2048 bits")

    def __or__(self, other: "LogsBloom") -> "LogsBloom":
        return LogsBloom(self.bits | other.bits)

    def issuperset(self, other: "LogsBloom") -> bool:
        return self.bits & other.bits == other.bits

    def popcount(self) -> int:
        return bin(self.bits).count("1")

    def positions(self) -> list[int]:
        return [i for i in range(BLOOM_BITS) if self.bits >> i & 1]

    def to_bytes(self) -> bytes:
        return self.bits.to_bytes(BLOOM_BYTES, "big")

    @classmethod
    def from_bytes(cls, raw: bytes) -> "LogsBloom":
        if len(raw) != BLOOM_BYTES:
            raise ValueError(f"bloom must be {BLOOM_BYTES} bytes, got {len(raw)}")
        return cls(int.from_bytes(raw, "big"))


EMPTY_BLOOM = LogsBloom(0)
FULL_BLOOM = LogsBloom(_FULL)


def insert(bloom: LogsBloom, item: bytes) -> LogsBloom:
    return LogsBloom(bloom.bits | _mask(item))


def may_contain(bloom: LogsBloom, item: bytes) -> bool:
    m = _mask(item)
    return bloom.bits & m == m


def logs_bloom(logs: Iterable) -> LogsBloom:
    """Bloom over the address and every topic of each log."""
    bits = 0
    for log in logs:
        bits |= _mask(log.address)
        for topic in log.topics:
            bits |= _mask(topic)
    return LogsBloom(bits)


def block_bloom(receipts: Iterable) -> LogsBloom:
    return logs_bloom(log for r in receipts for log in r.logs)


def fp_rate_estimate(n_items: int) -> float:
    """Analytic false-positive probability after ``n_items`` insertions."""
    if n_items < 0:
        raise ValueError("n_items must be >= 0")
    return (1.0 - (1.0 - 1.0 / BLOOM_BITS) ** (HASHES_PER_ITEM * n_items)) ** HASHES_PER_ITEM
