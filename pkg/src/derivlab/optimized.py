"""Prefeed + nonce-discipline pipeline with bloom-gated receipt reads.

Only blocks in the host-supplied prefeed set have their transactions
scanned. The host is untrusted: omissions, replays and reorderings surface
as (sender, nonce) discontinuities, and the final tracked state must match
the claimed boundary.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from functools import cached_property
from pathlib import Path
from typing import Iterable

from .baseline import (
    ChannelAssembler,
    DerivationOutput,
    Epoch,
    L1Reader,
    classify_txs,
    derive_range_baseline,
    extract_deposits,
    is_valid_batch_tx,
    timeout_blocks_for,
    update_system_config,
)
from .bloom import LogsBloom, may_contain
from .cost import CostLedger, CostWeights, DEFAULT_WEIGHTS
from .errors import (
    BoundaryMismatchError,
    NonceGapError,
    NonceMismatchError,
    NonceRebaseError,
    OutOfRange,
    ReorgDetected,
    SenderMismatchError,
)
from .world import (
    BATCH_INBOX,
    CONFIG_UPDATE_TOPIC,
    DEPOSIT_TOPIC,
    PORTAL_ADDRESS,
    SYSTEM_CONFIG_ADDRESS,
    Chain,
    ScenarioConfig,
    SystemConfig,
    Tx,
    account_nonce,
    hexstr,
    parse_address,
    recover_sender,
    system_config_at,
)

OPTIMIZED = "optimized"
BASELINE = "baseline"


def config_gate(bloom: LogsBloom) -> bool:
    return may_contain(bloom, CONFIG_UPDATE_TOPIC) and may_contain(bloom, SYSTEM_CONFIG_ADDRESS)


def deposit_gate(bloom: LogsBloom) -> bool:
    return may_contain(bloom, DEPOSIT_TOPIC) and may_contain(bloom, PORTAL_ADDRESS)


@dataclass(frozen=True)
class NonceState:
    sender: bytes
    expected_next_nonce: int


@dataclass(frozen=True)
class PrefeedSet:
    da_blocks: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "da_blocks", tuple(sorted(self.da_blocks)))

    def __contains__(self, n: int) -> bool:
        return n in self._members

    def __len__(self) -> int:
        return len(self.da_blocks)

    def __iter__(self):
        return iter(self.da_blocks)

    @cached_property
    def _members(self) -> frozenset[int]:
        return frozenset(self.da_blocks)


@dataclass(frozen=True)
class BootInfo:
    agreed_sender: bytes
    agreed_nonce: int
    claimed_sender: bytes
    claimed_nonce: int
    l1_start: int
    l1_end: int

    def __post_init__(self):
        if self.l1_start > self.l1_end:
            raise ValueError("l1_start must be <= l1_end")

    @classmethod
    def for_range(cls, chain: Chain, l1_start: int, l1_end: int) -> "BootInfo":
        a_sender, a_nonce = get_batcher_sender_info_at(chain, l1_start)
        c_sender, c_nonce = get_batcher_sender_info_at(chain, l1_end)
        return cls(a_sender, a_nonce, c_sender, c_nonce, l1_start, l1_end)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["agreed_sender"] = hexstr(self.agreed_sender)
        d["claimed_sender"] = hexstr(self.claimed_sender)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "BootInfo":
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown boot fields: {sorted(unknown)}")
        data = dict(data)
        for k in ("agreed_sender", "claimed_sender"):
            data[k] = parse_address(data[k])
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> "BootInfo":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class PipelineMode:
    mode: str
    prefeed: PrefeedSet | None = None


def get_batcher_sender_info_at(chain: Chain, l1_head: int) -> tuple[bytes, int]:
    if not 0 <= l1_head < len(chain.blocks):
        raise OutOfRange(f"block {l1_head} outside chain")
    batcher = system_config_at(chain, l1_head).batcher_address
    return batcher, account_nonce(chain, batcher, l1_head)


def compute_prefeed_set(chain: Chain, l1_start: int, l1_end: int) -> PrefeedSet:
    """Host-side scan: blocks in ``(l1_start, l1_end]`` holding a valid batcher tx."""
    out = []
    for n in range(l1_start + 1, l1_end + 1):
        batcher = system_config_at(chain, n).batcher_address
        if any(is_valid_batch_tx(tx, BATCH_INBOX, batcher, chain) for tx in chain.blocks[n].txs):
            out.append(n)
    return PrefeedSet(tuple(out))


def has_batcher_sender_change(chain: Chain, origin: int, head: int, ledger: CostLedger, *,
                              reader: L1Reader | None = None,
                              sys: SystemConfig | None = None) -> bool:
    """Walk headers ``origin..head`` (inclusive); read receipts only on a bloom hit."""
    reader = reader or L1Reader(chain, ledger)
    sys = sys or system_config_at(chain, origin - 1)
    for n in range(origin, head + 1):
        block = reader.header(n)
        if config_gate(block.logs_bloom):
            sys, changed = update_system_config(sys, reader.receipts(block))
            if changed:
                return True
    return False


def wire_pipeline(chain: Chain, boot: BootInfo, ledger: CostLedger, *,
                  reader: L1Reader | None = None,
                  prefeed: PrefeedSet | None = None) -> PipelineMode:
    # the anchor block's own update is already part of the agreed state
    changed = has_batcher_sender_change(chain, boot.l1_start + 1, boot.l1_end, ledger,
                                        reader=reader, sys=SystemConfig(boot.agreed_sender))
    if changed:
        return PipelineMode(BASELINE)
    if prefeed is None:
        prefeed = compute_prefeed_set(chain, boot.l1_start, boot.l1_end)
    return PipelineMode(OPTIMIZED, prefeed)


def nonce_init(agreed: tuple[bytes, int], first_tx: Tx, sender: bytes | None = None) -> NonceState:
    agreed_sender, agreed_nonce = agreed
    sender = first_tx.claimed_sender if sender is None else sender
    if sender != agreed_sender:
        raise SenderMismatchError(f"first batcher tx from {hexstr(sender)}, agreed {hexstr(agreed_sender)}")
    if first_tx.nonce > agreed_nonce:
        raise NonceRebaseError(f"first nonce {first_tx.nonce} beyond agreed nonce {agreed_nonce}")
    return NonceState(agreed_sender, first_tx.nonce + 1)


def nonce_observe(state: NonceState, tx: Tx, sender: bytes | None = None) -> NonceState:
    sender = tx.claimed_sender if sender is None else sender
    if sender != state.sender:
        raise SenderMismatchError(f"tx from {hexstr(sender)}, tracking {hexstr(state.sender)}")
    if tx.nonce > state.expected_next_nonce:
        raise NonceGapError(f"nonce {tx.nonce}, expected {state.expected_next_nonce}")
    if tx.nonce < state.expected_next_nonce:
        raise NonceMismatchError(f"nonce {tx.nonce}, expected {state.expected_next_nonce}")
    return NonceState(state.sender, tx.nonce + 1)


def epilogue_check(post: NonceState, boot: BootInfo) -> None:
    if post.sender != boot.claimed_sender:
        raise BoundaryMismatchError(
            f"final sender {hexstr(post.sender)} != claimed {hexstr(boot.claimed_sender)}")
    if post.expected_next_nonce != boot.claimed_nonce:
        raise BoundaryMismatchError(
            f"final nonce {post.expected_next_nonce} != claimed {boot.claimed_nonce}")


def derive_range_optimized(chain: Chain, boot: BootInfo, prefeed: PrefeedSet | Iterable[int],
                           cfg: ScenarioConfig | None = None, *,
                           ledger: CostLedger | None = None,
                           reader: L1Reader | None = None,
                           weights: CostWeights = DEFAULT_WEIGHTS) -> tuple[DerivationOutput, NonceState]:
    if not 0 <= boot.l1_start <= boot.l1_end < len(chain.blocks):
        raise OutOfRange(f"range [{boot.l1_start}, {boot.l1_end}] outside chain")
    if not isinstance(prefeed, PrefeedSet):
        prefeed = PrefeedSet(tuple(prefeed))
    ledger = ledger if ledger is not None else CostLedger(weights=weights)
    reader = reader or L1Reader(chain, ledger)
    asm = ChannelAssembler(timeout_blocks_for(chain, cfg), ledger)

    sys = SystemConfig(boot.agreed_sender)
    agreed = (boot.agreed_sender, boot.agreed_nonce)
    state: NonceState | None = None
    prev = chain.blocks[boot.l1_start]
    epochs: list[Epoch] = []
    for n in range(boot.l1_start + 1, boot.l1_end + 1):
        block = reader.header(n)
        if block.parent_hash != prev.hash:
            raise ReorgDetected(f"block {n}: parent hash does not match block {n - 1}")
        prev = block
        # forced inclusions are not DA: every block is checked, receipts only on a hit
        deposits = extract_deposits(reader.receipts(block)) if deposit_gate(block.logs_bloom) else []
        batches: list[bytes] = []
        if n in prefeed:
            if config_gate(block.logs_bloom):
                sys, _ = update_system_config(sys, reader.receipts(block))
            for el in classify_txs(block, sys.batcher_address, ledger, chain, reader):
                sender = recover_sender(chain, el.tx)
                if state is None:
                    state = nonce_init(agreed, el.tx, sender)
                else:
                    state = nonce_observe(state, el.tx, sender)
                batches.extend(asm.feed(el))
        epochs.append(Epoch(n, tuple(deposits), tuple(batches)))
    post = state if state is not None else NonceState(*agreed)
    return DerivationOutput(epochs, sys, ledger), post


@dataclass
class RangeResult:
    mode: str
    output: DerivationOutput
    boot: BootInfo
    post: NonceState | None = None
    ledger: CostLedger = field(default_factory=CostLedger)


def run_range(chain: Chain, l1_start: int, l1_end: int, cfg: ScenarioConfig | None = None, *,
              boot: BootInfo | None = None, prefeed: PrefeedSet | None = None,
              force_baseline: bool = False,
              weights: CostWeights = DEFAULT_WEIGHTS) -> RangeResult:
    """Detect, wire and run one range the way the range program does.

    Optimized runs finish with the epilogue boundary check.
    """
    boot = boot or BootInfo.for_range(chain, l1_start, l1_end)
    ledger = CostLedger(weights=weights)
    reader = L1Reader(chain, ledger)
    if force_baseline:
        wiring = PipelineMode(BASELINE)
    else:
        wiring = wire_pipeline(chain, boot, ledger, reader=reader, prefeed=prefeed)
    if wiring.mode == BASELINE:
        out = derive_range_baseline(chain, l1_start, l1_end, cfg, ledger=ledger, reader=reader)
        return RangeResult(BASELINE, out, boot, None, ledger)
    out, post = derive_range_optimized(chain, boot, wiring.prefeed, cfg, ledger=ledger, reader=reader)
    epilogue_check(post, boot)
    return RangeResult(OPTIMIZED, out, boot, post, ledger)
