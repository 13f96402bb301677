"""Attack mutators A1-A6, the attack runner, and the bloom false-positive attack."""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable, Mapping, Sequence

from .baseline import derive_range_baseline, is_valid_batch_tx, update_system_config
from .bloom import LogsBloom, bloom_bits, keccak256, logs_bloom, may_contain
from .channels import encode_records, split_into_frames
from .errors import (
    ContinuityError,
    DerivLabError,
    NonceGapError,
    NonceMismatchError,
    SearchExhausted,
    TooManyTopics,
)
from .optimized import (
    OPTIMIZED,
    NonceState,
    PrefeedSet,
    compute_prefeed_set,
    nonce_observe,
    run_range,
)
from .proof import RangeRecord, aggregate, make_range_record
from .world import (
    BATCH_INBOX,
    CONFIG_UPDATE_TOPIC,
    SYSTEM_CONFIG_ADDRESS,
    ZERO32,
    Chain,
    L1Block,
    Log,
    Receipt,
    ScenarioConfig,
    Tx,
    account_nonce,
    address_from_label,
    audit_blooms,
    build_chain,
    make_block,
    recover_sender,
    system_config_at,
)

ATTACKER = address_from_label("derivlab/attacker")
GAS_BLOCK_LIMIT = 30_000_000
COVER_BUDGET = 10**6


class AttackId(str, Enum):
    A1 = "A1"
    A2 = "A2"
    A3 = "A3"
    A4 = "A4"
    A5 = "A5"
    A6 = "A6"
    BLOOM_FP = "BLOOM_FP"


EXPECTED_DEFENSE = {
    AttackId.A1: "SenderMismatchError",
    AttackId.A2: "NonceGapError",
    AttackId.A3: "NonceMismatchError",
    AttackId.A4: "ignored",
    AttackId.A5: "BloomIntegrityError",
    AttackId.A6: "ContinuityError",
    AttackId.BLOOM_FP: "harmless",
}


@dataclass(frozen=True)
class AttackSpec:
    id: AttackId
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "id", AttackId(self.id))

    @classmethod
    def from_dict(cls, data: dict) -> "AttackSpec":
        unknown = set(data) - {"id", "params"}
        if unknown:
            raise ValueError(f"unknown attack fields: {sorted(unknown)}")
        return cls(data["id"], dict(data.get("params", {})))

    @classmethod
    def from_json(cls, text: str) -> "AttackSpec":
        return cls.from_dict(json.loads(text))


# --- chain surgery ------------------------------------------------------------


def rebuild_chain(chain: Chain, overrides: Mapping[int, tuple[Sequence[Tx], Sequence[Receipt]]]) -> Chain:
    """Replace block bodies and re-link every later block.

    Each rebuilt block keeps its old bloom bits, so forced false positives
    survive. Account nonces are L1 state and are left as they were.
    """
    if not overrides:
        return chain
    blocks = list(chain.blocks[:min(overrides)])
    parent = blocks[-1].hash if blocks else ZERO32
    for old in chain.blocks[min(overrides):]:
        txs, rcps = overrides.get(old.number, (old.txs, old.receipts))
        b = make_block(old.number, parent, old.timestamp, txs, rcps, old.logs_bloom)
        blocks.append(b)
        parent = b.hash
    return chain.with_blocks(blocks)


def _insert(block: L1Block, pos: int, tx: Tx, receipt: Receipt = Receipt()):
    txs, rcps = list(block.txs), list(block.receipts)
    txs.insert(pos, tx)
    rcps.insert(pos, receipt)
    return txs, rcps


def _batcher_positions(chain: Chain, l1_start: int, l1_end: int) -> list[tuple[int, int]]:
    """(block, tx index) of every valid batcher tx in ``(l1_start, l1_end]``, L1 order."""
    out = []
    for n in range(l1_start + 1, l1_end + 1):
        batcher = system_config_at(chain, n).batcher_address
        for i, tx in enumerate(chain.blocks[n].txs):
            if is_valid_batch_tx(tx, BATCH_INBOX, batcher, chain):
                out.append((n, i))
    return out


def forge_batch_tx(chain: Chain, block: int, rng: random.Random) -> tuple[Chain, Tx]:
    """A1: batcher-claimed DA tx carrying attacker records and a random authenticator."""
    batcher = system_config_at(chain, block).batcher_address
    frame = split_into_frames(rng.randbytes(16), encode_records([b"EVIL" + rng.randbytes(60)]))[0]
    forged = Tx(batcher, BATCH_INBOX, account_nonce(chain, batcher, block - 1),
                frame.encode(), (), rng.randbytes(32))
    b = chain.blocks[block]
    return rebuild_chain(chain, {block: _insert(b, rng.randint(0, len(b.txs)), forged)}), forged


def drop_prefeed(prefeed: PrefeedSet, index: int) -> PrefeedSet:
    """A2: host omits one DA block from the prefeed set."""
    blocks = list(prefeed.da_blocks)
    del blocks[index]
    return PrefeedSet(tuple(blocks))


def replay_batch_tx(chain: Chain, l1_start: int, l1_end: int, which: int,
                    mode: str = "duplicate") -> Chain:
    """A3: duplicate batcher tx ``which`` in place, or swap it with the next one."""
    pos = _batcher_positions(chain, l1_start, l1_end)
    n, i = pos[which]
    block = chain.blocks[n]
    if mode == "duplicate":
        return rebuild_chain(chain, {n: _insert(block, i + 1, block.txs[i], block.receipts[i])})
    if mode != "swap":
        raise ValueError(f"unknown replay mode {mode!r}")
    n2, j = pos[which + 1]
    bodies = {b: (list(chain.blocks[b].txs), list(chain.blocks[b].receipts)) for b in {n, n2}}
    bodies[n][0][i], bodies[n2][0][j] = chain.blocks[n2].txs[j], chain.blocks[n].txs[i]
    return rebuild_chain(chain, bodies)


def forge_config_update(chain: Chain, block: int, new_batcher: bytes = ATTACKER,
                        emitter: bytes = ATTACKER) -> Chain:
    """A4: ConfigUpdate-shaped log from a contract other than SystemConfig."""
    log = Log(emitter, (CONFIG_UPDATE_TOPIC, bytes(32), bytes(32)), new_batcher.rjust(32, b"\x00"))
    tx = Tx(ATTACKER, emitter, 0, b"setBatcher", (), bytes(32))
    b = chain.blocks[block]
    return rebuild_chain(chain, {block: _insert(b, len(b.txs), tx, Receipt((log,)))})


def clear_config_bloom(chain: Chain, block: int) -> Chain:
    """A5: wipe the ConfigUpdate topic bits from one served header bloom."""
    b = chain.blocks[block]
    mask = 0
    for p in bloom_bits(CONFIG_UPDATE_TOPIC):
        mask |= 1 << p
    tampered = replace(b, logs_bloom=LogsBloom(b.logs_bloom.bits & ~mask))
    blocks = list(chain.blocks)
    blocks[block] = tampered
    return chain.with_blocks(blocks)


BOUNDARY_FIELDS = ("post_sender", "post_nonce", "end_l1_head", "pre_sender", "pre_nonce", "start_l1_head")


def perturb_boundary(records: Sequence[RangeRecord], boundary: int, field_name: str) -> list[RangeRecord]:
    """A6: shift one field on either side of boundary ``boundary``."""
    out = list(records)
    side = boundary if field_name.startswith(("post", "end")) else boundary + 1
    r = out[side]
    v = getattr(r, field_name)
    if isinstance(v, bytes):
        new = ATTACKER if v != ATTACKER else address_from_label("derivlab/attacker-2")
    elif field_name == "start_l1_head":
        new = v - 1  # stays <= end_l1_head; interior boundaries are never at genesis
    else:
        new = v + 1
    out[side] = replace(r, **{field_name: new})
    return out


def apply_attack(target, spec: AttackSpec, rng: random.Random | None = None):
    rng = rng or random.Random(0)
    p = dict(spec.params)
    if spec.id is AttackId.A1:
        return forge_batch_tx(target, p["block"], rng)[0]
    if spec.id is AttackId.A2:
        return drop_prefeed(target, p.get("index", 0))
    if spec.id is AttackId.A3:
        return replay_batch_tx(target, p["l1_start"], p["l1_end"], p.get("which", 0), p.get("mode", "duplicate"))
    if spec.id is AttackId.A4:
        return forge_config_update(target, p["block"])
    if spec.id is AttackId.A5:
        return clear_config_bloom(target, p["block"])
    if spec.id is AttackId.A6:
        return perturb_boundary(target, p.get("boundary", 0), p.get("field", "post_nonce"))
    raise ValueError(f"apply_attack does not mutate {spec.id.value}; use bloom_fp_attack")


# --- attack runner ------------------------------------------------------------


@dataclass(frozen=True)
class AttackOutcome:
    id: str
    seed: int
    expected: str
    observed: str
    passed: bool

    def line(self) -> str:
        return f"{self.id}\tseed={self.seed}\texpected={self.expected}\tobserved={self.observed}\t" \
               f"{'PASS' if self.passed else 'FAIL'}"


def attack_scenario(seed: int, **overrides) -> ScenarioConfig:
    base = dict(seed=seed, channel_timeout_s=60, range_l2_blocks=120, noise_txs_per_block=6)
    base.update(overrides)
    return ScenarioConfig(**base)


def _outcome(fn: Callable[[], Any]) -> tuple[str, Any]:
    try:
        return "accepted", fn()
    except DerivLabError as exc:
        return exc.code, exc


def _honest(chain: Chain, cfg: ScenarioConfig) -> tuple[int, int, bytes]:
    start, end = 0, len(chain.blocks) - 1
    return start, end, derive_range_baseline(chain, start, end, cfg).serialize()


def run_attack(attack: AttackId | str, seed: int) -> AttackOutcome:
    """Mount one attack on an honest seeded scenario and report what stopped it."""
    attack = AttackId(attack)
    rng = random.Random(f"{attack.value}/{seed}")
    expected = EXPECTED_DEFENSE[attack]

    if attack is AttackId.A5:
        probe = build_chain(attack_scenario(seed))
        at = rng.randint(2, len(probe.blocks) - 2)
        cfg = attack_scenario(seed, batcher_schedule=(
            (probe.system_config_genesis.batcher_address, 0),
            (address_from_label(f"derivlab/batcher-{seed}-b"), at)))
    else:
        cfg = attack_scenario(seed)
    chain = build_chain(cfg)
    start, end, honest = _honest(chain, cfg)

    def accepted_same(res) -> bool:
        return res.output.serialize() == honest

    if attack is AttackId.A1:
        da = list(compute_prefeed_set(chain, start, end))
        mutated, forged = forge_batch_tx(chain, rng.choice(da), rng)
        code, res = _outcome(lambda: run_range(mutated, start, end, cfg))
        excluded = code == "accepted" and accepted_same(res)
        state = NonceState(forged.claimed_sender, forged.nonce)
        forced, _ = _outcome(lambda: nonce_observe(state, forged, recover_sender(mutated, forged)))
        observed = f"{'excluded' if excluded else code}+forced:{forced}"
        return AttackOutcome(attack.value, seed, expected, observed, excluded and forced == expected)

    if attack is AttackId.A2:
        honest_pf = compute_prefeed_set(chain, start, end)
        idx = rng.randrange(len(honest_pf) - 1)
        code, res = _outcome(lambda: run_range(chain, start, end, cfg, prefeed=drop_prefeed(honest_pf, idx)))
        ok = isinstance(res, NonceGapError)
        return AttackOutcome(attack.value, seed, expected, code, ok)

    if attack is AttackId.A3:
        which = rng.randrange(len(_batcher_positions(chain, start, end)))
        mutated = replay_batch_tx(chain, start, end, which, "duplicate")
        code, res = _outcome(lambda: run_range(mutated, start, end, cfg))
        ok = isinstance(res, NonceMismatchError)
        return AttackOutcome(attack.value, seed, expected, code, ok)

    if attack is AttackId.A4:
        block = rng.randint(start + 1, end)
        mutated = forge_config_update(chain, block, address_from_label(f"derivlab/evil-{seed}"))
        _, changed = update_system_config(system_config_at(chain, block), mutated.blocks[block].receipts)
        code, res = _outcome(lambda: run_range(mutated, start, end, cfg))
        ok = code == "accepted" and res.mode == OPTIMIZED and accepted_same(res) and not changed
        return AttackOutcome(attack.value, seed, expected, "ignored" if ok else code, ok)

    if attack is AttackId.A5:
        mutated = clear_config_bloom(chain, at)
        code, res = _outcome(lambda: run_range(mutated, start, end, cfg))
        audit, _ = _outcome(lambda: audit_blooms(mutated, start, end))
        diverged = code == "accepted" and not accepted_same(res)
        ok = audit == expected and not diverged and code != "accepted"
        return AttackOutcome(attack.value, seed, expected, f"{audit}+run:{code}", ok)

    if attack is AttackId.A6:
        cuts = sorted(rng.sample(range(start + 1, end), 2))
        bounds = [start, *cuts, end]
        records = []
        for a, b in zip(bounds, bounds[1:]):
            res = run_range(chain, a, b, cfg, force_baseline=rng.random() < 0.5)
            records.append(make_range_record(chain, res.boot, res))
        aggregate(records)
        boundary = rng.randrange(len(records) - 1)
        fname = rng.choice(BOUNDARY_FIELDS)
        code, res = _outcome(lambda: aggregate(perturb_boundary(records, boundary, fname)))
        ok = isinstance(res, ContinuityError)
        return AttackOutcome(attack.value, seed, expected, code, ok)

    plan = bloom_fp_attack([CONFIG_UPDATE_TOPIC], SYSTEM_CONFIG_ADDRESS)
    block = make_block(0, ZERO32, 0, [Tx(ATTACKER, ATTACKER, 0)], [Receipt(tuple(plan.logs))])
    fires = may_contain(block.logs_bloom, CONFIG_UPDATE_TOPIC) and may_contain(block.logs_bloom, SYSTEM_CONFIG_ADDRESS)
    _, changed = update_system_config(system_config_at(chain, 0), block.receipts)
    ok = fires and not changed
    return AttackOutcome(attack.value, seed, expected, "harmless" if ok else "gate-missed", ok)


# --- bloom false-positive attack ----------------------------------------------


@dataclass(frozen=True)
class BloomAttackPlan:
    logs: tuple[Log, ...]
    total_topics: int
    gas: int
    candidates_tried: int = 0


def gas_log(topics: int, data_bytes: int) -> int:
    if not 0 <= topics <= 4:
        raise TooManyTopics(f"a log carries 0..4 topics, got {topics}")
    if data_bytes < 0:
        raise ValueError("data_bytes must be >= 0")
    return 375 + 375 * topics + 8 * data_bytes


def gas_attack(m: int) -> int:
    if m < 1:
        raise ValueError("m must be >= 1")
    return 375 * ((m + 3) + math.ceil((m + 3) / 4))


def exact_match_probability() -> float:
    """Chance one random topic lands exactly on a given item's three bits."""
    return 6 / 2048**3


def expected_cover_candidates() -> float:
    """Expected counter candidates to cover three distinct target bits, one at a time."""
    per_bit = 1 / (1 - (1 - 1 / 2048) ** 3)
    return 3 * per_bit


def _cover_topic(counter: int) -> bytes:
    return keccak256(b"derivlab/cover" + counter.to_bytes(8, "big"))


def bloom_fp_attack(query_topics: Sequence[bytes], target_address: bytes, *,
                    emitter: bytes = ATTACKER, budget: int = COVER_BUDGET) -> BloomAttackPlan:
    """Logs that make a bloom claim ``target_address`` and every query topic.

    The query topics are emitted verbatim; for each of the address's three
    bit positions a counter-derived cover topic hitting that bit is searched
    for. Topics are packed four per log with empty data.
    """
    if not query_topics:
        raise ValueError("need at least one query topic")
    topics = list(query_topics)
    counter = 0
    for bit in bloom_bits(target_address):
        while True:
            if counter >= budget:
                raise SearchExhausted(f"no cover topic for bit {bit} within {budget} candidates")
            cand = _cover_topic(counter)
            counter += 1
            if bit in bloom_bits(cand):
                topics.append(cand)
                break
    logs = tuple(Log(emitter, tuple(topics[i:i + 4])) for i in range(0, len(topics), 4))
    gas = sum(gas_log(len(log.topics), len(log.data)) for log in logs)
    return BloomAttackPlan(logs, len(topics), gas, counter)


def plan_bloom(plan: BloomAttackPlan) -> LogsBloom:
    return logs_bloom(plan.logs)
