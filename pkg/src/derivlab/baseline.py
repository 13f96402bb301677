"""Unoptimized derivation: walk every L1 block, parse every receipt, scan every tx."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

from .channels import ChannelBank, decode_frames, decode_records
from .cost import ChargeKind, CostLedger, CostWeights, DEFAULT_WEIGHTS
from .errors import (
    DataIntegrityError,
    HeaderIntegrityError,
    MissingBlob,
    OutOfRange,
    ReorgDetected,
)
from .world import (
    BATCH_INBOX,
    DEPOSIT_TOPIC,
    PORTAL_ADDRESS,
    Chain,
    L1Block,
    Receipt,
    ScenarioConfig,
    SystemConfig,
    Tx,
    block_by_number,
    hexstr,
    parse_batcher_update,
    receipts_by_hash,
    receipts_root,
    system_config_at,
    verify_tx,
)


class L1Reader:
    """Metered, integrity-checked view of the chain for one derivation run.

    Each header and each block's receipts are charged once per reader, so a
    detection pre-pass and the derivation that follows share fetches.
    """

    def __init__(self, chain: Chain, ledger: CostLedger):
        self.chain = chain
        self.ledger = ledger
        self._headers: set[int] = set()
        self._receipts: set[int] = set()

    def header(self, n: int) -> L1Block:
        block = block_by_number(self.chain, n)
        if n not in self._headers:
            self._headers.add(n)
            self.ledger.charge(ChargeKind.HEADER)
        if not block.header_ok():
            raise HeaderIntegrityError(f"block {n}: header fields do not hash to block hash")
        return block

    def receipts(self, block: L1Block) -> tuple[Receipt, ...]:
        receipts = receipts_by_hash(self.chain, block.hash)
        if block.number not in self._receipts:
            self._receipts.add(block.number)
            self.ledger.charge(ChargeKind.RECEIPT_LOG, block.log_count)
            self.ledger.charge(ChargeKind.BYTE_DECODE, block.receipts_size)
        if receipts_root(receipts) != block.receipts_root:
            raise DataIntegrityError(f"block {block.number}: receipts root mismatch")
        return receipts

    def txs(self, block: L1Block) -> tuple[Tx, ...]:
        if not block.body_ok():
            raise DataIntegrityError(f"block {block.number}: tx root mismatch")
        return block.txs


@dataclass(frozen=True)
class TraversalState:
    origin: L1Block
    sys: SystemConfig
    done: bool = False


@dataclass(frozen=True)
class DaElement:
    kind: str  # "calldata" | "blob"
    data: bytes
    source_block: int
    source_tx_index: int
    blob_index: int | None = None
    tx: Tx | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Epoch:
    l1_origin: int
    deposits: tuple[bytes, ...] = ()
    batch_txs: tuple[bytes, ...] = ()

    def to_dict(self) -> dict:
        return {
            "l1_origin": self.l1_origin,
            "deposits": [d.hex() for d in self.deposits],
            "batch_txs": [b.hex() for b in self.batch_txs],
        }


@dataclass
class DerivationOutput:
    epochs: list[Epoch]
    final_sys: SystemConfig
    ledger: CostLedger = field(default_factory=CostLedger, compare=False)

    def to_dict(self) -> dict:
        return {
            "epochs": [e.to_dict() for e in self.epochs],
            "final_sys": {"batcher_address": hexstr(self.final_sys.batcher_address)},
        }

    def serialize(self) -> bytes:
        """Canonical JSON (sorted keys, no whitespace); the ledger is excluded."""
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()

    @property
    def batches(self) -> list[bytes]:
        return [b for e in self.epochs for b in e.batch_txs]


def update_system_config(sys: SystemConfig, receipts: Iterable[Receipt]) -> tuple[SystemConfig, bool]:
    batcher = sys.batcher_address
    for r in receipts:
        for log in r.logs:
            new = parse_batcher_update(log)
            if new is not None:
                batcher = new
    if batcher == sys.batcher_address:
        return sys, False
    return SystemConfig(batcher), True


def advance_l1_block(state: TraversalState, chain: Chain, ledger: CostLedger,
                     reader: L1Reader | None = None) -> TraversalState:
    reader = reader or L1Reader(chain, ledger)
    n = state.origin.number + 1
    if n >= len(chain.blocks):
        raise OutOfRange(f"no block after {state.origin.number}")
    block = reader.header(n)
    if block.parent_hash != state.origin.hash:
        raise ReorgDetected(f"block {n}: parent hash does not match block {n - 1}")
    sys, _ = update_system_config(state.sys, reader.receipts(block))
    return TraversalState(block, sys)


def is_valid_batch_tx(tx: Tx, inbox: bytes, batcher: bytes, chain: Chain) -> bool:
    if tx.claimed_sender != batcher:
        return False
    if not tx.is_blob and tx.to != inbox:
        return False
    return verify_tx(chain, tx)


def classify_txs(block: L1Block, batcher: bytes, ledger: CostLedger, chain: Chain,
                 reader: L1Reader | None = None) -> list[DaElement]:
    txs = reader.txs(block) if reader else block.txs
    out: list[DaElement] = []
    blob_index = 0
    for i, tx in enumerate(txs):
        ledger.charge(ChargeKind.TX_SCAN)
        valid = is_valid_batch_tx(tx, BATCH_INBOX, batcher, chain)
        if not tx.is_blob:
            if valid:
                out.append(DaElement("calldata", tx.calldata, block.number, i, None, tx))
            continue
        for h in tx.blob_hashes:
            if valid:
                ledger.charge(ChargeKind.BLOB_HASH)
                try:
                    blob = chain.blob_store[h]
                except KeyError:
                    raise MissingBlob(f"block {block.number} tx {i}: blob {h.hex()}") from None
                out.append(DaElement("blob", blob, block.number, i, blob_index, tx))
            blob_index += 1
    return out


class ChannelAssembler:
    """Feeds DA elements through a channel bank and yields batch records."""

    def __init__(self, timeout_blocks: int, ledger: CostLedger):
        self.bank = ChannelBank(timeout_blocks)
        self.ledger = ledger

    def feed(self, element: DaElement) -> list[bytes]:
        self.ledger.charge(ChargeKind.BYTE_DECODE, len(element.data))
        out: list[bytes] = []
        for frame in decode_frames(element.data):
            payload = self.bank.ingest(frame, element.source_block)
            if payload is not None:
                out.extend(decode_records(payload))
        return out


def assemble_channels(elements: Iterable[DaElement], timeout_blocks: int,
                      ledger: CostLedger) -> list[bytes]:
    asm = ChannelAssembler(timeout_blocks, ledger)
    return [rec for el in elements for rec in asm.feed(el)]


def extract_deposits(receipts: Iterable[Receipt], ledger: CostLedger | None = None) -> list[bytes]:
    # the receipt fetch that produced ``receipts`` already paid for parsing
    return [
        log.data
        for r in receipts
        for log in r.logs
        if log.address == PORTAL_ADDRESS and log.topics and log.topics[0] == DEPOSIT_TOPIC
    ]


def timeout_blocks_for(chain: Chain, cfg: ScenarioConfig | None) -> int:
    cfg = cfg or chain.config or ScenarioConfig()
    return cfg.channel_timeout_blocks


def derive_range_baseline(chain: Chain, l1_start: int, l1_end: int,
                          cfg: ScenarioConfig | None = None, *,
                          ledger: CostLedger | None = None,
                          reader: L1Reader | None = None,
                          weights: CostWeights = DEFAULT_WEIGHTS) -> DerivationOutput:
    """Derive blocks ``l1_start+1 .. l1_end`` on top of the state agreed at ``l1_start``."""
    if not 0 <= l1_start <= l1_end < len(chain.blocks):
        raise OutOfRange(f"range [{l1_start}, {l1_end}] outside chain")
    ledger = ledger if ledger is not None else CostLedger(weights=weights)
    reader = reader or L1Reader(chain, ledger)
    asm = ChannelAssembler(timeout_blocks_for(chain, cfg), ledger)

    state = TraversalState(chain.blocks[l1_start], system_config_at(chain, l1_start))
    epochs: list[Epoch] = []
    while state.origin.number < l1_end:
        state = advance_l1_block(state, chain, ledger, reader)
        block = state.origin
        deposits = extract_deposits(reader.receipts(block))
        batches: list[bytes] = []
        for el in classify_txs(block, state.sys.batcher_address, ledger, chain, reader):
            batches.extend(asm.feed(el))
        epochs.append(Epoch(block.number, tuple(deposits), tuple(batches)))
    return DerivationOutput(epochs, state.sys, ledger)
