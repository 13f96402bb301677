"""Range records, aggregate continuity, and the output-oracle anchor.

Proof verification is structural: a range record is trusted once its
derivation ran to completion, and an aggregate is trusted once every
adjacent boundary lines up.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields, replace
from typing import Sequence

from .baseline import DerivationOutput
from .errors import AnchorMismatchError, ContinuityError
from .optimized import OPTIMIZED, BootInfo, RangeResult, get_batcher_sender_info_at
from .world import Chain, hexstr, parse_address

_ADDRESS_FIELDS = ("pre_sender", "post_sender", "batcher")


def _jsonable(obj) -> dict:
    d = asdict(obj)
    for k, v in d.items():
        if isinstance(v, bytes):
            d[k] = hexstr(v)
        elif isinstance(v, (tuple, list)):
            d[k] = [x.hex() if isinstance(x, bytes) else x for x in v]
    return d


def _from_jsonable(cls, data: dict):
    unknown = set(data) - {f.name for f in fields(cls)}
    if unknown:
        raise ValueError(f"unknown {cls.__name__} fields: {sorted(unknown)}")
    data = dict(data)
    for k in _ADDRESS_FIELDS:
        if k in data:
            data[k] = parse_address(data[k])
    if "output_root" in data:
        root = data["output_root"]
        data["output_root"] = bytes.fromhex(root[2:] if root.startswith("0x") else root)
    return cls(**data)


@dataclass(frozen=True)
class RangeRecord:
    pre_sender: bytes
    pre_nonce: int
    post_sender: bytes
    post_nonce: int
    start_l1_head: int
    end_l1_head: int
    output_root: bytes
    mode: str

    def __post_init__(self):
        if self.start_l1_head > self.end_l1_head:
            raise ValueError("start_l1_head must be <= end_l1_head")

    def to_dict(self) -> dict:
        return _jsonable(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RangeRecord":
        return _from_jsonable(cls, data)


@dataclass(frozen=True)
class AggregateSummary:
    pre_sender: bytes
    pre_nonce: int
    post_sender: bytes
    post_nonce: int
    start_l1_head: int
    end_l1_head: int
    output_root: bytes
    n_ranges: int = 1

    def to_dict(self) -> dict:
        return _jsonable(self)

    @classmethod
    def from_dict(cls, data: dict) -> "AggregateSummary":
        return _from_jsonable(cls, data)


@dataclass(frozen=True)
class OutputMeta:
    batcher: bytes
    nonce: int


@dataclass(frozen=True)
class OracleState:
    meta: OutputMeta
    roots: tuple[bytes, ...] = ()


def output_root(output: DerivationOutput) -> bytes:
    return hashlib.sha256(output.serialize()).digest()


def make_range_record(chain: Chain, boot: BootInfo, result: RangeResult,
                      mode: str | None = None) -> RangeRecord:
    mode = mode or result.mode
    if mode == OPTIMIZED:
        pre = (boot.agreed_sender, boot.agreed_nonce)
        post = (result.post.sender, result.post.expected_next_nonce)
    else:
        pre = get_batcher_sender_info_at(chain, boot.l1_start)
        post = get_batcher_sender_info_at(chain, boot.l1_end)
    return RangeRecord(*pre, *post, boot.l1_start, boot.l1_end, output_root(result.output), mode)


_LINKS = (
    ("post_sender", "pre_sender"),
    ("post_nonce", "pre_nonce"),
    ("end_l1_head", "start_l1_head"),
)


def aggregate(records: Sequence[RangeRecord]) -> AggregateSummary:
    if not records:
        raise ValueError("aggregate needs at least one range record")
    for i, (left, right) in enumerate(zip(records, records[1:])):
        for lf, rf in _LINKS:
            a, b = getattr(left, lf), getattr(right, rf)
            if a != b:
                raise ContinuityError(i, f"{lf}/{rf}", a, b)
    first, last = records[0], records[-1]
    return AggregateSummary(first.pre_sender, first.pre_nonce, last.post_sender, last.post_nonce,
                            first.start_l1_head, last.end_l1_head, last.output_root, len(records))


def genesis_oracle(chain: Chain, l1_head: int) -> OracleState:
    """Oracle deployed at ``l1_head``: meta is the on-chain (batcher, nonce) there."""
    return OracleState(OutputMeta(*get_batcher_sender_info_at(chain, l1_head)))


def propose_output_root(state: OracleState, summary: AggregateSummary) -> OracleState:
    if (summary.pre_sender, summary.pre_nonce) != (state.meta.batcher, state.meta.nonce):
        raise AnchorMismatchError(
            f"pre ({hexstr(summary.pre_sender)}, {summary.pre_nonce}) != meta "
            f"({hexstr(state.meta.batcher)}, {state.meta.nonce})")
    return replace(state, meta=OutputMeta(summary.post_sender, summary.post_nonce),
                   roots=state.roots + (summary.output_root,))


def records_to_json(records: Sequence[RangeRecord]) -> str:
    return json.dumps([r.to_dict() for r in records], sort_keys=True, indent=2)
