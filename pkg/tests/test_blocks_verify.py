"""Hash chain structure and tamper evidence on the persisted ledger."""

from __future__ import annotations

import json
import random

import pytest

from conftest import register_default_users
from fedprov.canonical import ZERO_DIGEST
from fedprov.ledger.blocks import (
    compute_block_hash,
    compute_data_hash,
    genesis_block,
    verify_chain_file,
)


def test_genesis_shape():
    genesis = genesis_block()
    assert genesis.height == 0
    assert genesis.prev_hash == ZERO_DIGEST
    assert genesis.block_hash == compute_block_hash(0, ZERO_DIGEST, compute_data_hash([]))


@pytest.fixture()
def committed(fed):
    users = register_default_users(fed)
    alice = users["alice"]["ledger"]
    for i in range(4):
        assert alice.hlf_create(f"21.P/{i}", f"cas://{i}", f"c{i}", ["alice"], "artifact").ok
    assert alice.hlf_update_prov("21.P/none", "cas://x", "cx").status == "REJECTED"
    assert alice.hlf_invalidate("21.P/0").ok
    return fed, users


def test_untouched_ledger_all_clear(committed):
    fed, _ = committed
    for node in fed.nodes.values():
        report = verify_chain_file(
            node.store.path, fed.config.orgs_map(), fed.config.endorsement_policy
        )
        assert report.ok, report.findings
        assert report.first_divergent_height is None


def test_ledgers_identical_across_nodes(committed):
    fed, _ = committed
    payloads = {
        org: node.store.path.read_bytes() for org, node in fed.nodes.items()
    }
    assert len(set(payloads.values())) == 1


def test_payload_byte_flip_flagged(committed):
    """Flip one byte inside a committed tx body at a known height."""
    fed, _ = committed
    node = fed.nodes["OrgA"]
    lines = node.store.path.read_bytes().split(b"\n")
    target_height = 3
    line = bytearray(lines[target_height])
    position = line.find(b"cas://")
    line[position + 6] ^= 0x01
    lines[target_height] = bytes(line)
    tampered = node.store.path.with_name("tampered.jsonl")
    tampered.write_bytes(b"\n".join(lines))
    report = verify_chain_file(
        tampered, fed.config.orgs_map(), fed.config.endorsement_policy
    )
    assert not report.ok
    assert report.first_divergent_height == target_height


def test_transaction_reorder_flagged(committed):
    """Reordering transactions inside a block breaks the data hash."""
    fed, users = committed
    # Cut one block holding two txs by ordering two envelopes back to back.
    import uuid

    from fedprov import clock, crypto
    from fedprov.canonical import canonical_bytes

    alice = users["alice"]["ledger"]

    def envelope(pid):
        body = {
            "kind": "create-artifact",
            "pid": pid,
            "args": {"uri": "cas://z", "checksum": "cz", "owners": ["alice"]},
            "creator": {
                "user_id": "alice",
                "org": "OrgA",
                "public_key": users["alice"]["identity"].public_key,
                "certificate": users["alice"]["identity"].certificate,
            },
            "timestamp": clock.now_iso(),
            "nonce": uuid.uuid4().hex,
        }
        return alice.endorse(body, crypto.sign(users["alice"]["key"], canonical_bytes(body)))

    import threading

    envs = [envelope("21.P/r1"), envelope("21.P/r2")]
    threads = [threading.Thread(target=alice.order, args=(e,)) for e in envs]
    for t in threads:
        t.start()
    for t in threads:
        t.join()

    node = fed.nodes["OrgA"]
    lines = node.store.path.read_bytes().split(b"\n")
    reordered_height = None
    out_lines = []
    for index, raw in enumerate(l for l in lines if l.strip()):
        record = json.loads(raw)
        if len(record["transactions"]) >= 2 and reordered_height is None:
            record["transactions"] = list(reversed(record["transactions"]))
            reordered_height = index
            raw = json.dumps(record, sort_keys=True, separators=(",", ":")).encode()
        out_lines.append(raw)
    if reordered_height is None:
        pytest.skip("batching produced no multi-tx block on this run")
    tampered = node.store.path.with_name("reordered.jsonl")
    tampered.write_bytes(b"\n".join(out_lines) + b"\n")
    report = verify_chain_file(
        tampered, fed.config.orgs_map(), fed.config.endorsement_policy
    )
    assert not report.ok
    assert any(
        "data_hash" in f.problem for f in report.findings if f.height == reordered_height
    )


def test_validation_flag_tamper_flagged(committed):
    """Flipping a stored validation flag is caught by deterministic replay."""
    fed, _ = committed
    node = fed.nodes["OrgA"]
    lines = node.store.path.read_bytes().split(b"\n")
    target = None
    out = []
    for index, raw in enumerate(l for l in lines if l.strip()):
        record = json.loads(raw)
        if record["transactions"] and target is None and record["height"] >= 1:
            record["transactions"][0]["validation"] = "INVALID:read-write-conflict"
            target = index
            raw = json.dumps(record, sort_keys=True, separators=(",", ":")).encode()
        out.append(raw)
    tampered = node.store.path.with_name("flagged.jsonl")
    tampered.write_bytes(b"\n".join(out) + b"\n")
    report = verify_chain_file(
        tampered, fed.config.orgs_map(), fed.config.endorsement_policy
    )
    assert not report.ok
    assert report.first_divergent_height == target


def test_random_single_byte_mutations_always_flagged(committed):
    fed, _ = committed
    node = fed.nodes["OrgA"]
    payload = node.store.path.read_bytes()
    line_offsets = _line_offsets(payload)
    rng = random.Random(20260801)
    tampered = node.store.path.with_name("mutated.jsonl")
    for _ in range(40):
        position = rng.randrange(len(payload))
        mutated = bytearray(payload)
        mutated[position] ^= 1 << rng.randrange(8)
        if bytes(mutated) == payload:
            continue
        tampered.write_bytes(bytes(mutated))
        report = verify_chain_file(
            tampered, fed.config.orgs_map(), fed.config.endorsement_policy
        )
        mutated_height = _height_of(position, line_offsets)
        assert not report.ok, f"mutation at byte {position} not detected"
        assert report.first_divergent_height is not None
        assert report.first_divergent_height <= mutated_height


def _line_offsets(payload: bytes) -> list[int]:
    offsets = []
    start = 0
    while start < len(payload):
        end = payload.find(b"\n", start)
        if end == -1:
            end = len(payload)
        offsets.append(start)
        start = end + 1
    return offsets


def _height_of(position: int, offsets: list[int]) -> int:
    height = 0
    for index, start in enumerate(offsets):
        if position >= start:
            height = index
    return height


def test_missing_file_reported(tmp_path, fed):
    report = verify_chain_file(
        tmp_path / "absent.jsonl", fed.config.orgs_map(), fed.config.endorsement_policy
    )
    assert not report.ok
