"""Synthetic L1 chain: types, canonical encodings, authentication, generator.

The chain is immutable once built. Block hashes commit to the header fields
(number, parent hash, timestamp, tx root, receipts root, logs bloom); the
roots commit to the tx and receipt digests. Batcher authentication uses a
per-address HMAC key in place of ECDSA.
"""

from __future__ import annotations

import bisect
import hashlib
import hmac
import json
import math
import random
import struct
from collections import defaultdict, deque
from dataclasses import asdict, dataclass, field, fields, replace
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

from .bloom import EMPTY_BLOOM, FULL_BLOOM, LogsBloom, block_bloom, keccak256
from .channels import FRAME_BUDGET, FRAME_HEADER, encode_records, split_into_frames
from .errors import BloomIntegrityError, InvalidScenario, OutOfRange, UnknownHash, UnknownSigner


def address_from_label(label: str) -> bytes:
    return keccak256(label.encode())[12:]


BATCH_INBOX = bytes.fromhex("ff00000000000000000000000000000000042069")
SYSTEM_CONFIG_ADDRESS = bytes.fromhex("229047fed2591dbec1ef1118d64f7af3db9eb290")
PORTAL_ADDRESS = bytes.fromhex("beb5fc579115071764c7423a4f12edde41f106ed")
SYSTEM_CONFIG_OWNER = address_from_label("derivlab/SystemConfigOwner")
DEFAULT_BATCHER = address_from_label("derivlab/batcher-0")

CONFIG_UPDATE_TOPIC = keccak256(b"ConfigUpdate(uint256,uint8,bytes)")
DEPOSIT_TOPIC = keccak256(b"TransactionDeposited(address,address,uint256,bytes)")
UPDATE_TYPE_BATCHER = 0

GENESIS_TIMESTAMP = 1_700_000_000
BLOB_TX_THRESHOLD = 4 * 1024
L2_RECORD_SIZE = (100, 400)
MAX_CHAIN_BLOCKS = 200_000
ZERO32 = bytes(32)


def hexstr(b: bytes) -> str:
    return "0x" + b.hex()


def parse_address(value: str | bytes) -> bytes:
    if isinstance(value, bytes):
        raw = value
    else:
        s = value[2:] if value.startswith(("0x", "0X")) else value
        raw = bytes.fromhex(s)
    if len(raw) != 20:
        raise ValueError(f"address must be 20 bytes, got {len(raw)}")
    return raw


def _word(value: int | bytes) -> bytes:
    if isinstance(value, int):
        return value.to_bytes(32, "big")
    return value.rjust(32, b"\x00")


def _sha(*parts: bytes) -> bytes:
    h = hashlib.sha256()
    for p in parts:
        h.update(p)
    return h.digest()


# --- core types ---------------------------------------------------------------


@dataclass(frozen=True)
class Tx:
    claimed_sender: bytes
    to: bytes | None
    nonce: int
    calldata: bytes = b""
    blob_hashes: tuple[bytes, ...] = ()
    authenticator: bytes = ZERO32

    def __post_init__(self):
        if len(self.claimed_sender) != 20 or (self.to is not None and len(self.to) != 20):
            raise ValueError("addresses must be 20 bytes")
        if not 0 <= self.nonce < 1 << 64:
            raise ValueError("nonce must be an unsigned 64-bit integer")
        if any(len(h) != 32 for h in self.blob_hashes) or len(self.authenticator) != 32:
            raise ValueError("blob hashes and authenticator must be 32 bytes")

    @property
    def is_blob(self) -> bool:
        return bool(self.blob_hashes)

    def signing_payload(self) -> bytes:
        to = b"\x01" + self.to if self.to is not None else b"\x00" + bytes(20)
        return b"".join((
            b"TX",
            self.claimed_sender,
            to,
            struct.pack(">QI", self.nonce, len(self.calldata)),
            self.calldata,
            struct.pack(">H", len(self.blob_hashes)),
            *self.blob_hashes,
        ))

    @cached_property
    def digest(self) -> bytes:
        return _sha(self.signing_payload(), self.authenticator)


@dataclass(frozen=True)
class Log:
    address: bytes
    topics: tuple[bytes, ...] = ()
    data: bytes = b""

    def __post_init__(self):
        if len(self.address) != 20:
            raise ValueError("log address must be 20 bytes")
        if len(self.topics) > 4:
            raise ValueError("EVM logs carry at most 4 topics")
        if any(len(t) != 32 for t in self.topics):
            raise ValueError("topics must be 32 bytes")


@dataclass(frozen=True)
class Receipt:
    logs: tuple[Log, ...] = ()

    @cached_property
    def encoded(self) -> bytes:
        parts = [b"\x01", struct.pack(">H", len(self.logs))]
        for log in self.logs:
            parts += [log.address, bytes([len(log.topics)]), *log.topics,
                      struct.pack(">I", len(log.data)), log.data]
        return b"".join(parts)

    @cached_property
    def digest(self) -> bytes:
        return _sha(self.encoded)


@dataclass(frozen=True)
class SystemConfig:
    batcher_address: bytes

    def __post_init__(self):
        if len(self.batcher_address) != 20:
            raise ValueError("batcher address must be 20 bytes")


def tx_root(txs: Iterable[Tx]) -> bytes:
    return _sha(b"txs", *(tx.digest for tx in txs))


def receipts_root(receipts: Iterable[Receipt]) -> bytes:
    return _sha(b"rcp", *(r.digest for r in receipts))


def header_digest(number: int, parent_hash: bytes, timestamp: int, txs_root: bytes,
                  rcp_root: bytes, bloom: LogsBloom) -> bytes:
    return _sha(b"HDR", struct.pack(">QQ", number, timestamp), parent_hash,
                txs_root, rcp_root, bloom.to_bytes())


@dataclass(frozen=True)
class L1Block:
    number: int
    hash: bytes
    parent_hash: bytes
    timestamp: int
    txs: tuple[Tx, ...]
    receipts: tuple[Receipt, ...]
    logs_bloom: LogsBloom
    tx_root: bytes
    receipts_root: bytes

    @property
    def log_count(self) -> int:
        return sum(len(r.logs) for r in self.receipts)

    @property
    def receipts_size(self) -> int:
        return sum(len(r.encoded) for r in self.receipts)

    def header_ok(self) -> bool:
        return self.hash == header_digest(self.number, self.parent_hash, self.timestamp,
                                          self.tx_root, self.receipts_root, self.logs_bloom)

    def body_ok(self) -> bool:
        return len(self.txs) == len(self.receipts) and tx_root(self.txs) == self.tx_root

    def receipts_ok(self) -> bool:
        return receipts_root(self.receipts) == self.receipts_root


def make_block(number: int, parent_hash: bytes, timestamp: int, txs: Sequence[Tx],
               receipts: Sequence[Receipt] | None = None,
               extra_bloom: LogsBloom = EMPTY_BLOOM) -> L1Block:
    txs = tuple(txs)
    receipts = tuple(receipts) if receipts is not None else tuple(Receipt() for _ in txs)
    if len(receipts) != len(txs):
        raise ValueError("need exactly one receipt per tx")
    bloom = block_bloom(receipts) | extra_bloom
    t_root, r_root = tx_root(txs), receipts_root(receipts)
    h = header_digest(number, parent_hash, timestamp, t_root, r_root, bloom)
    return L1Block(number, h, parent_hash, timestamp, txs, receipts, bloom, t_root, r_root)


def parse_batcher_update(log: Log) -> bytes | None:
    """New batcher address carried by an authentic ConfigUpdate log, else None."""
    if log.address != SYSTEM_CONFIG_ADDRESS:
        return None
    if len(log.topics) < 3 or log.topics[0] != CONFIG_UPDATE_TOPIC:
        return None
    if int.from_bytes(log.topics[2], "big") != UPDATE_TYPE_BATCHER or len(log.data) != 32:
        return None
    return log.data[12:]


def config_update_log(new_batcher: bytes) -> Log:
    return Log(SYSTEM_CONFIG_ADDRESS,
               (CONFIG_UPDATE_TOPIC, _word(0), _word(UPDATE_TYPE_BATCHER)),
               _word(new_batcher))


def deposit_log(depositor: bytes, target: bytes, opaque: bytes) -> Log:
    return Log(PORTAL_ADDRESS, (DEPOSIT_TOPIC, _word(depositor), _word(target), _word(0)), opaque)


# --- scenario -----------------------------------------------------------------


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 0
    l1_block_time_s: int = 12
    l2_block_time_s: int = 2
    range_l2_blocks: int = 400
    channel_timeout_s: int = 100
    noise_txs_per_block: int = 60
    noise_logs_per_tx: int = 2
    batcher_schedule: tuple[tuple[bytes, int], ...] = ((DEFAULT_BATCHER, 0),)
    outage_windows: tuple[tuple[int, int], ...] = ()
    post_outage_cap: int = 4
    forced_bloom_fp: bool = False

    def __post_init__(self):
        object.__setattr__(self, "batcher_schedule", tuple(
            (parse_address(a), int(n)) for a, n in self.batcher_schedule))
        object.__setattr__(self, "outage_windows", tuple(
            (int(s), int(n)) for s, n in self.outage_windows))
        self._validate()

    def _validate(self):
        if not 0 <= self.seed < 1 << 64:
            raise InvalidScenario("seed must be an unsigned 64-bit integer")
        if self.l1_block_time_s <= 0 or self.l2_block_time_s <= 0:
            raise InvalidScenario("block times must be positive")
        if self.channel_timeout_s <= 0:
            raise InvalidScenario("channel_timeout_s must be > 0")
        if self.range_l2_blocks <= 0:
            raise InvalidScenario("range_l2_blocks must be > 0")
        if self.noise_txs_per_block < 0 or self.noise_logs_per_tx < 0:
            raise InvalidScenario("noise counts must be >= 0")
        if self.post_outage_cap < 1:
            raise InvalidScenario("post_outage_cap must be >= 1")
        if not self.batcher_schedule:
            raise InvalidScenario("batcher_schedule must not be empty")
        acts = [n for _, n in self.batcher_schedule]
        if acts[0] > 0:
            raise InvalidScenario("first batcher activation must be at or before block 0")
        if any(b <= a for a, b in zip(acts, acts[1:])):
            raise InvalidScenario("batcher activations must be strictly increasing")
        prev_end = None
        for start, length in sorted(self.outage_windows):
            if start < 0 or length <= 0:
                raise InvalidScenario("outage windows need start >= 0 and length > 0")
            if prev_end is not None and start < prev_end:
                raise InvalidScenario("outage windows overlap")
            prev_end = start + length

    @property
    def channel_timeout_blocks(self) -> int:
        return math.ceil(self.channel_timeout_s / self.l1_block_time_s)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["batcher_schedule"] = [[hexstr(a), n] for a, n in self.batcher_schedule]
        d["outage_windows"] = [list(w) for w in self.outage_windows]
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidScenario(f"unknown scenario fields: {sorted(unknown)}")
        try:
            return cls(**data)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, InvalidScenario):
                raise
            raise InvalidScenario(str(exc)) from exc

    @classmethod
    def from_json(cls, text: str) -> "ScenarioConfig":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path: str | Path) -> "ScenarioConfig":
        return cls.from_json(Path(path).read_text())


# --- chain --------------------------------------------------------------------


@dataclass(eq=False)
class Chain:
    blocks: tuple[L1Block, ...]
    key_registry: dict[bytes, bytes]
    system_config_genesis: SystemConfig
    blob_store: dict[bytes, bytes] = field(default_factory=dict)
    # per sender: ((block, account nonce after that block), ...) -- consensus state,
    # carried over unchanged when an adversary rewrites served block data
    account_nonces: dict[bytes, tuple[tuple[int, int], ...]] = field(default_factory=dict)
    posted_batches: tuple[tuple[int, bytes], ...] = ()
    l2_inclusion: tuple[int, ...] = ()
    config: ScenarioConfig | None = None

    def __post_init__(self):
        self.blocks = tuple(self.blocks)
        for i, b in enumerate(self.blocks):
            if b.number != i:
                raise ValueError(f"block numbers must be contiguous from 0 (index {i} has {b.number})")
        self._by_hash = {b.hash: b for b in self.blocks}
        timeline = [(-1, self.system_config_genesis.batcher_address)]
        for b in self.blocks:
            for r in b.receipts:
                for log in r.logs:
                    new = parse_batcher_update(log)
                    if new is not None:
                        if timeline[-1][0] == b.number:
                            timeline[-1] = (b.number, new)
                        else:
                            timeline.append((b.number, new))
        self._timeline = timeline
        self._timeline_keys = [n for n, _ in timeline]

    @property
    def tip(self) -> L1Block:
        return self.blocks[-1]

    def with_blocks(self, blocks: Iterable[L1Block]) -> "Chain":
        return replace(self, blocks=tuple(blocks))

    def batcher_changes(self) -> list[tuple[int, bytes]]:
        return list(self._timeline[1:])


def block_by_number(chain: Chain, n: int) -> L1Block:
    if not 0 <= n < len(chain.blocks):
        raise OutOfRange(f"block {n} outside chain range 0..{len(chain.blocks) - 1}")
    return chain.blocks[n]


def receipts_by_hash(chain: Chain, h: bytes) -> tuple[Receipt, ...]:
    try:
        return chain._by_hash[h].receipts
    except KeyError:
        raise UnknownHash(hexstr(h)) from None


def _keyed_digest(secret: bytes, payload: bytes) -> bytes:
    return hmac.new(secret, payload, hashlib.sha256).digest()


def sign_tx(chain: Chain | dict, sender: bytes, tx: Tx) -> Tx:
    registry = chain.key_registry if isinstance(chain, Chain) else chain
    try:
        secret = registry[sender]
    except KeyError:
        raise UnknownSigner(hexstr(sender)) from None
    return replace(tx, authenticator=_keyed_digest(secret, tx.signing_payload()))


def verify_tx(chain: Chain, tx: Tx) -> bool:
    secret = chain.key_registry.get(tx.claimed_sender)
    if secret is None:
        return False
    return hmac.compare_digest(tx.authenticator, _keyed_digest(secret, tx.signing_payload()))


def recover_sender(chain: Chain, tx: Tx) -> bytes:
    """The address a signature check attributes ``tx`` to.

    A valid authenticator yields the claimed sender; anything else yields an
    unrelated address, the way ECDSA recovery of a forged signature does.
    """
    if verify_tx(chain, tx):
        return tx.claimed_sender
    return keccak256(b"unrecoverable" + tx.authenticator + tx.signing_payload())[12:]


def system_config_at(chain: Chain, n: int) -> SystemConfig:
    """SystemConfig as of the end of block ``n`` (``n = -1``: genesis)."""
    if n >= len(chain.blocks):
        raise OutOfRange(f"block {n} beyond tip")
    i = bisect.bisect_right(chain._timeline_keys, n) - 1
    return SystemConfig(chain._timeline[i][1])


def account_nonce(chain: Chain, address: bytes, n: int) -> int:
    """Account nonce of ``address`` after block ``n`` executed."""
    entries = chain.account_nonces.get(address, ())
    i = bisect.bisect_right([b for b, _ in entries], n) - 1
    return entries[i][1] if i >= 0 else 0


def audit_blooms(chain: Chain, start: int = 0, end: int | None = None) -> None:
    """Check every header bloom covers the bloom recomputed from its receipts."""
    end = len(chain.blocks) - 1 if end is None else end
    for b in chain.blocks[start:end + 1]:
        if not b.logs_bloom.issuperset(block_bloom(b.receipts)):
            raise BloomIntegrityError(f"block {b.number}: header bloom misses receipt bits")


def l1_origin_of_l2(config: ScenarioConfig, l2_block: int) -> int:
    return l2_block * config.l2_block_time_s // config.l1_block_time_s


def total_txs(chain: Chain, l1_start: int, l1_end: int) -> int:
    return sum(len(b.txs) for b in chain.blocks[l1_start + 1:l1_end + 1])


# --- construction -------------------------------------------------------------


def blob_versioned_hash(blob: bytes) -> bytes:
    return b"\x01" + hashlib.sha256(blob).digest()[1:]


class ChainBuilder:
    """Appends blocks with correct roots, blooms, hashes and account nonces."""

    def __init__(self, genesis_batcher: bytes = DEFAULT_BATCHER, *, seed: int = 0,
                 l1_block_time_s: int = 12):
        self.seed = seed
        self.l1_block_time_s = l1_block_time_s
        self.genesis_config = SystemConfig(genesis_batcher)
        self.registry: dict[bytes, bytes] = {}
        self.blob_store: dict[bytes, bytes] = {}
        self.blocks: list[L1Block] = []
        self._next_nonce: dict[bytes, int] = defaultdict(int)
        self._nonce_log: dict[bytes, list[tuple[int, int]]] = defaultdict(list)
        self.register(genesis_batcher)

    def register(self, address: bytes) -> bytes:
        secret = _sha(b"derivlab/key", self.seed.to_bytes(8, "big"), address)
        self.registry[address] = secret
        return secret

    def sign(self, tx: Tx) -> Tx:
        return sign_tx(self.registry, tx.claimed_sender, tx)

    def batcher_tx(self, sender: bytes, da: bytes, *, nonce: int | None = None) -> Tx:
        """Signed DA tx from ``sender``: a blob tx above 4 KB, else calldata to the inbox."""
        if nonce is None:
            nonce = self._next_nonce[sender]
            self._next_nonce[sender] += 1
        if len(da) > BLOB_TX_THRESHOLD:
            h = blob_versioned_hash(da)
            self.blob_store[h] = da
            tx = Tx(sender, None, nonce, b"", (h,))
        else:
            tx = Tx(sender, BATCH_INBOX, nonce, da)
        return self.sign(tx)

    def add_block(self, txs: Sequence[Tx] = (), receipts: Sequence[Receipt] | None = None,
                  *, extra_bloom: LogsBloom = EMPTY_BLOOM) -> L1Block:
        n = len(self.blocks)
        parent = self.blocks[-1].hash if self.blocks else ZERO32
        block = make_block(n, parent, GENESIS_TIMESTAMP + n * self.l1_block_time_s,
                           txs, receipts, extra_bloom)
        touched = {}
        for tx in block.txs:
            secret = self.registry.get(tx.claimed_sender)
            if secret is not None and hmac.compare_digest(
                    tx.authenticator, _keyed_digest(secret, tx.signing_payload())):
                touched[tx.claimed_sender] = max(touched.get(tx.claimed_sender, 0), tx.nonce + 1)
        for addr, after in touched.items():
            self._nonce_log[addr].append((n, after))
            self._next_nonce[addr] = max(self._next_nonce[addr], after)
        self.blocks.append(block)
        return block

    def finish(self, **extra) -> Chain:
        return Chain(
            blocks=tuple(self.blocks),
            key_registry=dict(self.registry),
            system_config_genesis=self.genesis_config,
            blob_store=dict(self.blob_store),
            account_nonces={a: tuple(v) for a, v in self._nonce_log.items()},
            **extra,
        )


def channel_txs_for_records(builder: ChainBuilder, sender: bytes, records: Sequence[bytes],
                            channel_id: bytes) -> list[Tx]:
    """Signed batcher txs (one per frame) carrying ``records`` as one channel."""
    frames = split_into_frames(channel_id, encode_records(records))
    return [builder.batcher_tx(sender, f.encode()) for f in frames]


@dataclass
class _PendingChannel:
    frames: list
    records: list[bytes]
    l2_numbers: list[int]


def _l2_target(config: ScenarioConfig) -> int:
    last_end = max((s + n for s, n in config.outage_windows), default=0)
    span = -(-last_end * config.l1_block_time_s // config.l2_block_time_s) + config.range_l2_blocks
    return -(-span // config.range_l2_blocks) * config.range_l2_blocks


def _noise_tx(rng: random.Random, contracts: list[bytes], topics: list[bytes],
              n_logs: int) -> tuple[Tx, Receipt]:
    roll = rng.random()
    blobs: tuple[bytes, ...] = ()
    if roll < 0.05:
        to = BATCH_INBOX  # spam to the inbox from an unauthorized sender
    elif roll < 0.15:
        to = None
        blobs = tuple(b"\x01" + rng.randbytes(31) for _ in range(rng.randint(1, 2)))
    else:
        to = rng.choice(contracts)
    tx = Tx(rng.randbytes(20), to, rng.randrange(1 << 20), rng.randbytes(rng.randint(0, 64)),
            blobs, rng.randbytes(32))
    logs = tuple(
        Log(rng.choice(contracts),
            (rng.choice(topics),) + tuple(rng.randbytes(32) for _ in range(rng.randint(0, 2))),
            rng.randbytes(rng.choice((0, 32, 64))))
        for _ in range(n_logs)
    )
    return tx, Receipt(logs)


def _pack_channels(rng: random.Random, records: list[bytes], numbers: list[int],
                   max_frames: int) -> list[_PendingChannel]:
    room = max_frames * (FRAME_BUDGET - FRAME_HEADER.size)
    out: list[_PendingChannel] = []
    cur_r: list[bytes] = []
    cur_n: list[int] = []
    size = 0
    for rec, num in zip(records, numbers):
        if cur_r and size + 4 + len(rec) > room:
            out.append(_PendingChannel([], cur_r, cur_n))
            cur_r, cur_n, size = [], [], 0
        cur_r.append(rec)
        cur_n.append(num)
        size += 4 + len(rec)
    if cur_r:
        out.append(_PendingChannel([], cur_r, cur_n))
    for ch in out:
        ch.frames = split_into_frames(rng.randbytes(16), encode_records(ch.records))
    return out


def build_chain(config: ScenarioConfig, *, l2_blocks: int | None = None) -> Chain:
    """Generate a deterministic L1 chain for ``config``.

    Batcher channels close every ``ceil(channel_timeout / l1_block_time)``
    blocks outside outage windows and right after each outage ends; queued
    channels are posted whole, at most ``post_outage_cap`` txs per block.
    Deposits land every k-th block (k drawn from the seed, 4..9) with 0-2
    deposit logs each. Generation stops once every L2 block needed for the
    scenario's ranges has been posted; ``l2_blocks`` raises that target.
    """
    rng = random.Random(config.seed)
    t1, t2 = config.l1_block_time_s, config.l2_block_time_s
    cadence = config.channel_timeout_blocks
    activations = {n: a for a, n in config.batcher_schedule[1:]}
    batcher = config.batcher_schedule[0][0]

    builder = ChainBuilder(batcher, seed=config.seed, l1_block_time_s=t1)
    for addr, _ in config.batcher_schedule[1:]:
        builder.register(addr)

    deposit_every = rng.randint(4, 9)
    contracts = [rng.randbytes(20) for _ in range(64)]
    topics = [rng.randbytes(32) for _ in range(32)]
    n_l2 = max(_l2_target(config), l2_blocks or 0)
    windows = config.outage_windows
    outage_ends = {s + n for s, n in windows}
    last_outage_end = max(outage_ends, default=0)
    extra = FULL_BLOOM if config.forced_bloom_fp else EMPTY_BLOOM

    next_l2 = 0
    queue: deque[_PendingChannel] = deque()
    posted: list[tuple[int, bytes]] = []
    inclusion = [-1] * n_l2
    n = 0
    while True:
        if n >= MAX_CHAIN_BLOCKS:
            raise InvalidScenario("scenario needs more than MAX_CHAIN_BLOCKS L1 blocks")
        in_outage = any(s <= n < s + ln for s, ln in windows)
        pairs: list[tuple[Tx, Receipt]] = []

        if n in activations:
            batcher = activations[n]
            owner_tx = Tx(SYSTEM_CONFIG_OWNER, SYSTEM_CONFIG_ADDRESS, n, b"setBatcher",
                          (), rng.randbytes(32))
            pairs.append((owner_tx, Receipt((config_update_log(batcher),))))
        if n > 0 and n % deposit_every == 0:
            user = rng.randbytes(20)
            logs = tuple(deposit_log(user, rng.randbytes(20), rng.randbytes(rng.randint(32, 96)))
                         for _ in range(rng.randint(0, 2)))
            pairs.append((Tx(user, PORTAL_ADDRESS, rng.randrange(1 << 20), b"deposit", (),
                             rng.randbytes(32)), Receipt(logs)))
        for _ in range(config.noise_txs_per_block if n > 0 else 0):
            pairs.append(_noise_tx(rng, contracts, topics, config.noise_logs_per_tx))

        if n > 0 and not in_outage and (n % cadence == 0 or n in outage_ends):
            nums = []
            while next_l2 < n_l2 and next_l2 * t2 < n * t1:
                nums.append(next_l2)
                next_l2 += 1
            if nums:
                recs = []
                for j in nums:
                    size = rng.randint(*L2_RECORD_SIZE)
                    recs.append(b"L2BATCH" + j.to_bytes(8, "big") + rng.randbytes(size - 15))
                queue.extend(_pack_channels(rng, recs, nums, config.post_outage_cap))

        batcher_txs: list[Tx] = []
        if not in_outage:
            while queue and len(batcher_txs) + len(queue[0].frames) <= config.post_outage_cap:
                ch = queue.popleft()
                batcher_txs += [builder.batcher_tx(batcher, f.encode()) for f in ch.frames]
                for rec, j in zip(ch.records, ch.l2_numbers):
                    posted.append((n, rec))
                    inclusion[j] = n

        if batcher_txs:
            total = len(pairs) + len(batcher_txs)
            slots = set(rng.sample(range(total), len(batcher_txs)))
            others = iter(pairs)
            mine = iter(batcher_txs)
            merged = [(next(mine), Receipt()) if i in slots else next(others) for i in range(total)]
        else:
            merged = pairs
        builder.add_block([t for t, _ in merged], [r for _, r in merged], extra_bloom=extra)

        if next_l2 >= n_l2 and not queue and n >= last_outage_end:
            break
        n += 1

    return builder.finish(posted_batches=tuple(posted), l2_inclusion=tuple(inclusion),
                          config=config)
