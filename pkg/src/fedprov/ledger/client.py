"""Client-side transaction flow: sign locally, gather endorsements from the
organization nodes, check agreement and policy, then hand the envelope to
the ordering service and wait for the commit receipt.

The client talks to nodes directly -- there is no proxy in the path -- so a
single dead node degrades nothing that the remaining replicas can answer.
"""

from __future__ import annotations

import uuid
from dataclasses import dataclass
from typing import Callable, Mapping

from .. import clock, crypto, identity as identity_mod
from ..canonical import canonical_bytes
from ..errors import (
    EndorsementPolicyUnmetError,
    FedprovError,
    SimulationDivergenceError,
    TransportError,
)
from . import blocks as blocks_mod
from .chaincode import (
    TX_CREATE_ARTIFACT,
    TX_CREATE_PROV,
    TX_FLAG_AFFECTED,
    TX_INVALIDATE,
    TX_UPDATE_PROV,
    SimulationResult,
)
from .policy import policy_satisfied
from .values import LedgerValue

Transport = Callable[[str, dict], dict]

STATUS_REJECTED = "REJECTED"


@dataclass
class Receipt:
    tx_id: str
    height: int | None
    status: str
    message: str

    @property
    def committed_valid(self) -> bool:
        return self.status == blocks_mod.VALID

    @property
    def ok(self) -> bool:
        return self.committed_valid and not self.message.startswith("Error:")

    def to_dict(self) -> dict:
        return {
            "tx_id": self.tx_id,
            "height": self.height,
            "status": self.status,
            "message": self.message,
        }


class LedgerClient:
    def __init__(
        self,
        identity: identity_mod.Identity,
        private_key: str,
        peer_transports: Mapping[str, Transport],
        orderer_transport: Transport,
        orgs: Mapping[str, identity_mod.Organization],
        endorsement_policy: str,
    ):
        self.identity = identity
        self._private_key = private_key
        self.peers = dict(peer_transports)
        self.orderer = orderer_transport
        self.orgs = dict(orgs)
        self.endorsement_policy = endorsement_policy

    # -- write path ----------------------------------------------------------

    def submit(
        self,
        kind: str,
        pid: str,
        args: dict,
        timestamp: str | None = None,
    ) -> Receipt:
        """Full propose/endorse/order/commit round trip for one operation."""
        body = {
            "kind": kind,
            "pid": pid,
            "args": args,
            "creator": {
                "user_id": self.identity.user_id,
                "org": self.identity.org,
                "public_key": self.identity.public_key,
                "certificate": self.identity.certificate,
            },
            "timestamp": timestamp or clock.now_iso(),
            "nonce": uuid.uuid4().hex,
        }
        signature = crypto.sign(self._private_key, canonical_bytes(body))
        envelope = self.endorse(body, signature)
        if envelope["result"]["message"].startswith("Error:"):
            # The peers agree the chaincode refuses this operation; nothing
            # is ordered and no state changes anywhere.
            return Receipt(
                tx_id=envelope["tx_id"],
                height=None,
                status=STATUS_REJECTED,
                message=envelope["result"]["message"],
            )
        return self.order(envelope)

    def endorse(self, body: dict, signature: str) -> dict:
        """Collect endorsements for a signed body; returns an order-ready envelope."""
        proposal = {"body": body, "signature": signature}
        endorsements = []
        results: dict[str, dict] = {}
        errors: dict[str, str] = {}
        for org, transport in self.peers.items():
            try:
                response = transport("PROPOSE", proposal)
            except FedprovError as exc:
                # Unreachable peers and refused endorsements both just mean
                # this org contributes nothing toward the policy.
                errors[org] = str(exc)
                continue
            endorsements.append(response["endorsement"])
            results[org] = response["result"]
        if not results:
            raise TransportError(f"no endorsing peer reachable: {errors}")

        digests = {
            org: SimulationResult.from_dict(result).result_digest()
            for org, result in results.items()
        }
        if len(set(digests.values())) > 1:
            raise SimulationDivergenceError(
                f"peers disagree on simulation result: {digests}"
            )
        endorsing_orgs = {e["org"] for e in endorsements}
        if not policy_satisfied(endorsing_orgs, self.orgs, self.endorsement_policy):
            raise EndorsementPolicyUnmetError(
                f"policy {self.endorsement_policy!r} unmet by endorsements "
                f"from {sorted(endorsing_orgs)}"
            )
        some_org = next(iter(results))
        return {
            "tx_id": blocks_mod.tx_id_for(body),
            "body": body,
            "signature": signature,
            "result": results[some_org],
            "endorsements": endorsements,
        }

    def order(self, envelope: dict) -> Receipt:
        """Submit an endorsed envelope for ordering and await commit."""
        response = self.orderer("ORDER", {"envelope": envelope})
        receipt = response["receipt"]
        return Receipt(
            tx_id=receipt["tx_id"],
            height=receipt["height"],
            status=receipt["status"],
            message=receipt["message"],
        )

    # -- chaincode wrappers ---------------------------------------------------

    def hlf_create(
        self,
        pid: str,
        uri: str,
        checksum: str,
        owners: list[str],
        object_kind: str,
        timestamp: str | None = None,
    ) -> Receipt:
        kind = TX_CREATE_ARTIFACT if object_kind == "artifact" else TX_CREATE_PROV
        return self.submit(
            kind, pid, {"uri": uri, "checksum": checksum, "owners": owners}, timestamp
        )

    def hlf_update_prov(
        self,
        pid: str,
        new_uri: str,
        new_checksum: str,
        timestamp: str | None = None,
        permission: identity_mod.Permission | None = None,
    ) -> Receipt:
        args = {"new_uri": new_uri, "new_checksum": new_checksum}
        if permission is not None:
            args["permission"] = permission.to_dict()
        return self.submit(TX_UPDATE_PROV, pid, args, timestamp)

    def hlf_invalidate(
        self,
        pid: str,
        reason: str = "",
        timestamp: str | None = None,
        permission: identity_mod.Permission | None = None,
    ) -> Receipt:
        args: dict = {"reason": reason}
        if permission is not None:
            args["permission"] = permission.to_dict()
        return self.submit(TX_INVALIDATE, pid, args, timestamp)

    def flag_affected(
        self, pid: str, source_pid: str, timestamp: str | None = None
    ) -> Receipt:
        return self.submit(TX_FLAG_AFFECTED, pid, {"source_pid": source_pid}, timestamp)

    # -- read path -------------------------------------------------------------

    def hlf_read(self, pid: str) -> LedgerValue | None:
        data = self._query({"op": "read", "pid": pid})["value"]
        return LedgerValue.from_dict(data) if data else None

    def get_history(self, pid: str) -> list[dict]:
        return self._query({"op": "history", "pid": pid})["entries"]

    def state_dump(self) -> dict[str, dict]:
        return self._query({"op": "state"})["state"]

    def state_digest(self) -> str:
        return self._query({"op": "state_digest"})["digest"]

    def verify_chain(self) -> dict:
        return self._query({"op": "verify_chain"})["report"]

    def height(self) -> int:
        return self._query({"op": "height"})["height"]

    def _query(self, payload: dict) -> dict:
        last_error: Exception | None = None
        for org, transport in self.peers.items():
            try:
                return transport("QUERY", payload)
            except TransportError as exc:
                last_error = exc
                continue
        raise TransportError(f"no node reachable for query: {last_error}")
