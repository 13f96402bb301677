"""Deterministic abstract cost meter.

Stands in for zkVM cycle counts. Every primitive the pipelines perform is
charged ``weight * count`` to ``total`` and to exactly one of the two
component counters: ``derivation`` (header reads, tx scans, byte decoding,
blob hashes) or ``receipt`` (per-log receipt parsing).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from pathlib import Path


class ChargeKind(str, Enum):
    HEADER = "header"
    TX_SCAN = "tx_scan"
    RECEIPT_LOG = "receipt_log"
    BYTE_DECODE = "byte_decode"
    BLOB_HASH = "blob_hash"


@dataclass(frozen=True)
class CostWeights:
    w_header: int = 50
    w_tx_scan: int = 200
    w_receipt_log: int = 500
    w_byte_decode: int = 1
    w_blob_hash: int = 300

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, int) or v < 0:
                raise ValueError(f"{f.name} must be a non-negative integer, got {v!r}")

    def weight(self, kind: ChargeKind) -> int:
        return getattr(self, "w_" + ChargeKind(kind).value)

    @classmethod
    def from_dict(cls, data: dict) -> "CostWeights":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown weight fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> "CostWeights":
        return cls.from_dict(json.loads(Path(path).read_text()))


DEFAULT_WEIGHTS = CostWeights()


@dataclass
class CostLedger:
    total: int = 0
    derivation: int = 0
    receipt: int = 0
    weights: CostWeights = field(default=DEFAULT_WEIGHTS, compare=False, repr=False)

    def charge(self, kind: ChargeKind, count: int = 1) -> "CostLedger":
        return charge(self, kind, count, self.weights)

    def snapshot(self) -> dict[str, int]:
        return {"total": self.total, "derivation": self.derivation, "receipt": self.receipt}

    def __add__(self, other: "CostLedger") -> "CostLedger":
        return CostLedger(
            self.total + other.total,
            self.derivation + other.derivation,
            self.receipt + other.receipt,
            self.weights,
        )


def charge(ledger: CostLedger, kind: ChargeKind, count: int, weights: CostWeights) -> CostLedger:
    if count < 0:
        raise ValueError("charge count must be >= 0")
    kind = ChargeKind(kind)
    amount = weights.weight(kind) * count
    ledger.total += amount
    if kind is ChargeKind.RECEIPT_LOG:
        ledger.receipt += amount
    else:
        ledger.derivation += amount
    return ledger


def diff_percent(baseline: int | float, optimized: int | float) -> float:
    """Relative saving of ``optimized`` against ``baseline``, in percent."""
    if baseline == 0:
        raise ZeroDivisionError("baseline counter is zero")
    return 100.0 * (baseline - optimized) / baseline


def weights_as_dict(weights: CostWeights) -> dict[str, int]:
    return asdict(weights)
