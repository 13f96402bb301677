import json
from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from derivlab.baseline import (
    L1Reader,
    TraversalState,
    advance_l1_block,
    assemble_channels,
    classify_txs,
    derive_range_baseline,
    extract_deposits,
    is_valid_batch_tx,
    update_system_config,
)
from derivlab.channels import encode_records, split_into_frames
from derivlab.cost import CostLedger, CostWeights
from derivlab.errors import (
    DataIntegrityError,
    HeaderIntegrityError,
    MalformedFrame,
    MissingBlob,
    OutOfRange,
    ReorgDetected,
)
from derivlab.world import (
    BATCH_INBOX,
    DEFAULT_BATCHER,
    ChainBuilder,
    Receipt,
    SystemConfig,
    Tx,
    address_from_label,
    build_chain,
    config_update_log,
    deposit_log,
    system_config_at,
    verify_tx,
)

from .conftest import small_config

B = address_from_label("test/batcher-b")
EVIL = address_from_label("test/evil")
W = CostWeights()


def one_frame(records, cid=b"c" * 16):
    return split_into_frames(cid, encode_records(records))[0].encode()


# --- update_system_config ------------------------------------------------------------


def test_update_no_logs():
    sys = SystemConfig(DEFAULT_BATCHER)
    assert update_system_config(sys, [Receipt()]) == (sys, False)


def test_update_authentic():
    sys = SystemConfig(DEFAULT_BATCHER)
    new, changed = update_system_config(sys, [Receipt((config_update_log(B),))])
    assert changed and new.batcher_address == B


def test_update_forged_emitter_ignored():
    forged = replace(config_update_log(EVIL), address=EVIL)
    sys = SystemConfig(DEFAULT_BATCHER)
    assert update_system_config(sys, [Receipt((forged,))]) == (sys, False)


def test_update_later_log_wins():
    sys = SystemConfig(DEFAULT_BATCHER)
    rs = [Receipt((config_update_log(EVIL),)), Receipt((config_update_log(B),))]
    assert update_system_config(sys, rs)[0].batcher_address == B


def test_update_back_to_same_is_unchanged():
    sys = SystemConfig(DEFAULT_BATCHER)
    rs = [Receipt((config_update_log(B), config_update_log(DEFAULT_BATCHER)))]
    assert update_system_config(sys, rs) == (sys, False)


# --- traversal ---------------------------------------------------------------------------


def test_advance_plain(small_chain):
    st0 = TraversalState(small_chain.blocks[10], system_config_at(small_chain, 10))
    st1 = advance_l1_block(st0, small_chain, CostLedger())
    assert st1.origin.number == 11 and st1.sys == st0.sys


def test_advance_picks_up_change():
    cfg = small_config(batcher_schedule=((DEFAULT_BATCHER, 0), (B, 12)))
    chain = build_chain(cfg)
    st0 = TraversalState(chain.blocks[11], SystemConfig(DEFAULT_BATCHER))
    assert advance_l1_block(st0, chain, CostLedger()).sys.batcher_address == B


def test_advance_detects_reorg(small_chain):
    blocks = list(small_chain.blocks)
    blocks[10] = replace(blocks[10], hash=b"\x11" * 32)
    chain = small_chain.with_blocks(blocks)
    st0 = TraversalState(chain.blocks[10], system_config_at(chain, 10))
    with pytest.raises(ReorgDetected):
        advance_l1_block(st0, chain, CostLedger())


def test_advance_past_tip(small_chain):
    st0 = TraversalState(small_chain.tip, system_config_at(small_chain, small_chain.tip.number))
    with pytest.raises(OutOfRange):
        advance_l1_block(st0, small_chain, CostLedger())


def test_reader_catches_tampered_header_and_body(small_chain):
    blocks = list(small_chain.blocks)
    blocks[3] = replace(blocks[3], timestamp=blocks[3].timestamp + 1)
    with pytest.raises(HeaderIntegrityError):
        L1Reader(small_chain.with_blocks(blocks), CostLedger()).header(3)
    blocks = list(small_chain.blocks)
    blocks[3] = replace(blocks[3], txs=blocks[3].txs[1:], receipts=blocks[3].receipts[1:])
    chain = small_chain.with_blocks(blocks)
    with pytest.raises(DataIntegrityError):
        L1Reader(chain, CostLedger()).txs(chain.blocks[3])
    with pytest.raises(DataIntegrityError):
        L1Reader(chain, CostLedger()).receipts(chain.blocks[3])


def test_reader_charges_each_fetch_once(small_chain):
    led = CostLedger()
    r = L1Reader(small_chain, led)
    b = r.header(4)
    r.header(4)
    r.receipts(b)
    r.receipts(b)
    assert led.derivation == W.w_header + W.w_byte_decode * b.receipts_size
    assert led.receipt == W.w_receipt_log * b.log_count


# --- classification ---------------------------------------------------------------------


def fixture_chain():
    """Block 1: noise blob tx (2 blobs), batcher calldata tx, batcher blob tx, bad-to tx."""
    b = ChainBuilder(DEFAULT_BATCHER, seed=5)
    b.add_block()
    noise = Tx(EVIL, None, 0, b"", (b"\x01" + b"\x00" * 31, b"\x01" + b"\x11" * 31), bytes(32))
    cd = b.batcher_tx(DEFAULT_BATCHER, one_frame([b"calldata-record"], b"a" * 16))
    blob = b.batcher_tx(DEFAULT_BATCHER, one_frame([b"R" * 5000], b"b" * 16))
    wrong_to = b.sign(Tx(DEFAULT_BATCHER, EVIL, 2, one_frame([b"nope"], b"d" * 16)))
    b.add_block([noise, cd, blob, wrong_to])
    return b.finish()


def test_classify_blob_index_and_exclusions():
    chain = fixture_chain()
    led = CostLedger()
    els = classify_txs(chain.blocks[1], DEFAULT_BATCHER, led, chain)
    assert [(e.kind, e.source_tx_index, e.blob_index) for e in els] == [("calldata", 1, None), ("blob", 2, 2)]
    assert led.derivation == 4 * W.w_tx_scan + 1 * W.w_blob_hash


def test_classify_no_batcher_txs(small_chain):
    blk = next(b for b in small_chain.blocks[1:] if b.number % small_chain.config.channel_timeout_blocks)
    led = CostLedger()
    assert classify_txs(blk, DEFAULT_BATCHER, led, small_chain) == []
    assert led.derivation == W.w_tx_scan * len(blk.txs)


def test_classify_missing_blob():
    chain = fixture_chain()
    chain.blob_store.clear()
    with pytest.raises(MissingBlob):
        classify_txs(chain.blocks[1], DEFAULT_BATCHER, CostLedger(), chain)


def test_is_valid_batch_tx():
    chain = fixture_chain()
    _, cd, blob, wrong_to = chain.blocks[1].txs
    assert is_valid_batch_tx(cd, BATCH_INBOX, DEFAULT_BATCHER, chain)
    assert is_valid_batch_tx(blob, BATCH_INBOX, DEFAULT_BATCHER, chain)
    assert not is_valid_batch_tx(wrong_to, BATCH_INBOX, DEFAULT_BATCHER, chain)
    assert not is_valid_batch_tx(cd, BATCH_INBOX, B, chain)
    forged = replace(cd, authenticator=b"\x42" * 32)
    assert not is_valid_batch_tx(forged, BATCH_INBOX, DEFAULT_BATCHER, chain)


# --- assembly and deposits ------------------------------------------------------------------


def test_assemble_charges_bytes_and_decodes():
    chain = fixture_chain()
    led = CostLedger()
    els = classify_txs(chain.blocks[1], DEFAULT_BATCHER, CostLedger(), chain)
    assert assemble_channels(els, 5, led) == [b"calldata-record", b"R" * 5000]
    assert led.derivation == sum(len(e.data) for e in els)


def test_assemble_malformed():
    from derivlab.baseline import DaElement

    with pytest.raises(MalformedFrame):
        assemble_channels([DaElement("calldata", b"\x00" * 7, 1, 0)], 5, CostLedger())


def test_extract_deposits():
    d1 = deposit_log(EVIL, B, b"first")
    d2 = deposit_log(EVIL, B, b"second")
    stray = replace(d1, address=EVIL)
    assert extract_deposits([]) == []
    assert extract_deposits([Receipt((d1, stray)), Receipt((d2,))]) == [b"first", b"second"]


# --- full range ---------------------------------------------------------------------------


def test_empty_traffic_range():
    chain = build_chain(small_config(noise_txs_per_block=0, outage_windows=((1, 30),)))
    out = derive_range_baseline(chain, 0, 10)
    assert [e.l1_origin for e in out.epochs] == list(range(1, 11))
    assert all(not e.batch_txs for e in out.epochs)
    assert out.ledger.total > 0


@settings(max_examples=10)
@given(st.integers(0, 2**32), st.sampled_from([10, 40, 100]))
def test_baseline_reproduces_ground_truth_and_cost(seed, timeout):
    cfg = small_config(seed=seed, channel_timeout_s=timeout)
    chain = build_chain(cfg)
    end = len(chain.blocks) - 1
    out = derive_range_baseline(chain, 0, end, cfg)
    assert out.batches == [rec for _, rec in chain.posted_batches]
    for e in out.epochs:
        assert [r for n, r in chain.posted_batches if n == e.l1_origin] == list(e.batch_txs)
    # exact ledger: recompute from chain statistics
    blocks = chain.blocks[1:end + 1]
    batcher = [tx for b in blocks for tx in b.txs
               if tx.claimed_sender == DEFAULT_BATCHER and verify_tx(chain, tx)]
    da_bytes = sum(len(tx.calldata) if not tx.is_blob else len(chain.blob_store[tx.blob_hashes[0]])
                   for tx in batcher)
    n_blobs = sum(len(tx.blob_hashes) for tx in batcher)
    derivation = (W.w_header * len(blocks) + W.w_tx_scan * sum(len(b.txs) for b in blocks)
                  + W.w_byte_decode * (da_bytes + sum(b.receipts_size for b in blocks))
                  + W.w_blob_hash * n_blobs)
    assert out.ledger.derivation == derivation
    assert out.ledger.receipt == W.w_receipt_log * sum(b.log_count for b in blocks)


def test_final_sys_tracks_mid_range_change():
    cfg = small_config(batcher_schedule=((DEFAULT_BATCHER, 0), (B, 12)))
    chain = build_chain(cfg)
    out = derive_range_baseline(chain, 0, 20, cfg)
    assert out.final_sys.batcher_address == B
    assert out.batches == [r for n, r in chain.posted_batches if n <= 20]


def test_serialization_is_canonical(small_chain):
    out = derive_range_baseline(small_chain, 0, len(small_chain.blocks) - 1)
    doc = json.loads(out.serialize())
    assert out.serialize() == json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    assert any(e["deposits"] for e in doc["epochs"])
    assert out.serialize() == derive_range_baseline(small_chain, 0, len(small_chain.blocks) - 1).serialize()


def test_bad_range(small_chain):
    with pytest.raises(OutOfRange):
        derive_range_baseline(small_chain, 5, 4)
