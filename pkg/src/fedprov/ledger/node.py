"""An organization's ledger node.

Each node keeps a full replica: the append-only block file and the world
state rebuilt from it on startup. Nodes endorse proposals by simulating the
chaincode against their current state and signing the result; they commit
blocks delivered by the ordering service after independently re-validating
every transaction, so all replicas stay byte-identical.

Endorsement simulations may run concurrently against a state snapshot;
commits are strictly serialized.
"""

from __future__ import annotations

import copy
import threading
from pathlib import Path
from typing import Mapping

from .. import crypto, identity as identity_mod
from ..canonical import canonical_bytes
from ..errors import LedgerRejectedError, UnauthorizedError
from . import blocks as blocks_mod
from .blocks import Block, BlockStore, endorsement_payload, tx_id_for, validate_tx
from .chaincode import simulate
from .values import LedgerValue, WorldState


class OrgNode:
    def __init__(
        self,
        org_name: str,
        node_identity: identity_mod.Identity,
        node_private_key: str,
        orgs: Mapping[str, identity_mod.Organization],
        endorsement_policy: str,
        ledger_path: Path,
    ):
        self.org_name = org_name
        self.node_identity = node_identity
        self._node_private_key = node_private_key
        self.orgs = dict(orgs)
        self.endorsement_policy = endorsement_policy
        self.store = BlockStore(ledger_path)
        self.state = WorldState()
        self.blocks: list[Block] = []
        self._commit_lock = threading.Lock()
        self._replay()

    def _replay(self) -> None:
        """Rebuild world state from the persisted chain."""
        self.blocks = self.store.load()
        for block in self.blocks:
            for tx in block.transactions:
                if tx.get("validation") == blocks_mod.VALID:
                    for pid, value in tx.get("result", {}).get("writes", {}).items():
                        self.state.put(pid, LedgerValue.from_dict(value))

    # -- endorsement --------------------------------------------------------

    def endorse(self, proposal: Mapping) -> dict:
        """Simulate a signed proposal and endorse the result.

        Refuses outright (no endorsement) if the creator identity or the
        client signature does not verify; chaincode-level errors still get
        endorsed so all peers can agree the operation is rejected.
        """
        body = proposal.get("body", {})
        signature = proposal.get("signature", "")
        creator = body.get("creator", {})
        caller = identity_mod.Identity(
            user_id=creator.get("user_id", ""),
            org=creator.get("org", ""),
            public_key=creator.get("public_key", ""),
            certificate=creator.get("certificate", ""),
        )
        if not identity_mod.verify_identity(caller, self.orgs):
            raise UnauthorizedError("unknown or forged creator identity")
        if not crypto.verify(caller.public_key, signature, canonical_bytes(body)):
            raise UnauthorizedError("client signature invalid")

        snapshot = self.state.snapshot()
        result = simulate(body, self.orgs, snapshot.get)
        tx_id = tx_id_for(body)
        result_digest = result.result_digest()
        endorsement = {
            "org": self.org_name,
            "node_id": self.node_identity.user_id,
            "node_public_key": self.node_identity.public_key,
            "node_certificate": self.node_identity.certificate,
            "signature": crypto.sign(
                self._node_private_key, endorsement_payload(tx_id, result_digest)
            ),
        }
        return {
            "ok": True,
            "tx_id": tx_id,
            "result": result.to_dict(),
            "endorsement": endorsement,
        }

    # -- commit --------------------------------------------------------------

    def commit(self, block_dict: Mapping) -> dict:
        """Validate and apply an ordered block; returns per-tx validation flags.

        Re-delivery of an already-committed height is answered idempotently
        from the stored chain.
        """
        with self._commit_lock:
            # Deep-copy: the ordering service may hand the same dict to
            # several in-process nodes, and commit assigns validation flags.
            incoming = Block.from_dict(copy.deepcopy(dict(block_dict)))
            tip_height = self.blocks[-1].height if self.blocks else -1
            if incoming.height <= tip_height:
                stored = self.blocks[incoming.height]
                if stored.block_hash != incoming.block_hash:
                    raise LedgerRejectedError(
                        f"conflicting block at height {incoming.height}"
                    )
                return {
                    "height": stored.height,
                    "flags": [tx.get("validation") for tx in stored.transactions],
                }
            if incoming.height != tip_height + 1:
                raise LedgerRejectedError(
                    f"out-of-order block {incoming.height}, tip is {tip_height}"
                )
            expected_prev = self.blocks[-1].block_hash if self.blocks else None
            if expected_prev is not None and incoming.prev_hash != expected_prev:
                raise LedgerRejectedError("prev_hash does not extend this chain")
            recomputed = blocks_mod.compute_block_hash(
                incoming.height, incoming.prev_hash, incoming.data_hash
            )
            if recomputed != incoming.block_hash:
                raise LedgerRejectedError("block hash does not match header")

            flags = []
            current = self.state.snapshot()
            applied: dict[str, LedgerValue] = {}
            for tx in incoming.transactions:
                flag = validate_tx(tx, current, self.orgs, self.endorsement_policy)
                tx["validation"] = flag
                flags.append(flag)
                if flag == blocks_mod.VALID:
                    for pid, value in tx.get("result", {}).get("writes", {}).items():
                        parsed = LedgerValue.from_dict(value)
                        current[pid] = parsed
                        applied[pid] = parsed
            for pid, value in applied.items():
                self.state.put(pid, value)
            self.blocks.append(incoming)
            self.store.append(incoming)
            return {"height": incoming.height, "flags": flags}

    # -- queries ---------------------------------------------------------------

    def read(self, pid: str) -> dict | None:
        value = self.state.get(pid)
        return value.to_dict() if value else None

    def height(self) -> int:
        return self.blocks[-1].height if self.blocks else -1

    def tip_hash(self) -> str | None:
        return self.blocks[-1].block_hash if self.blocks else None

    def state_digest(self) -> str:
        return self.state.state_digest()

    def state_dump(self) -> dict[str, dict]:
        return self.state.dump()

    def history(self, pid: str) -> list[dict]:
        """Committed VALID transactions that wrote *pid*, in commit order."""
        entries = []
        for block in self.blocks:
            for tx in block.transactions:
                if tx.get("validation") != blocks_mod.VALID:
                    continue
                writes = tx.get("result", {}).get("writes", {})
                if pid in writes:
                    entries.append(
                        {
                            "tx_id": tx.get("tx_id"),
                            "kind": tx.get("body", {}).get("kind"),
                            "height": block.height,
                            "value": writes[pid],
                            "timestamp": tx.get("body", {}).get("timestamp"),
                            "creator": tx.get("body", {}).get("creator", {}).get("user_id"),
                        }
                    )
        return entries

    def verify_chain(self) -> dict:
        report = blocks_mod.verify_chain_file(
            self.store.path, self.orgs, self.endorsement_policy
        )
        return report.to_dict()
