"""Message-kind dispatch for the node, ordering, and registry services.

A ``NodeService`` answers PROPOSE / COMMIT / QUERY on every organization
node and additionally ORDER on the node that hosts the ordering service.
A ``RegistryService`` answers MINT / RESOLVE / LINK / HISTORY plus the
UNLINK compensation step used by the atomic update protocol's rollback.

Mutating registry requests are signed by the caller; the service verifies
the signature and the caller's certificate before acting.
"""

from __future__ import annotations

from typing import Mapping

from . import crypto, identity as identity_mod
from .canonical import canonical_bytes
from .errors import FedprovError, UnauthorizedError
from .ledger.node import OrgNode
from .ledger.ordering import OrderingService
from .pid_registry import PIDRegistry
from .transport import MessageServer


class NodeService:
    def __init__(self, node: OrgNode, orderer: OrderingService | None = None):
        self.node = node
        self.orderer = orderer

    def handle(self, kind: str, payload: dict) -> dict:
        if kind == "PROPOSE":
            return {"kind": "ENDORSE", **self.node.endorse(payload)}
        if kind == "COMMIT":
            response = self.node.commit(payload["block"])
            return {"ok": True, **response}
        if kind == "ORDER":
            if self.orderer is None:
                raise FedprovError(f"{self.node.org_name} does not host the orderer")
            receipt = self.orderer.submit(payload["envelope"])
            return {"ok": True, "receipt": receipt}
        if kind == "QUERY":
            return {"ok": True, **self._query(payload)}
        raise FedprovError(f"unknown message kind: {kind!r}")

    def _query(self, payload: dict) -> dict:
        op = payload.get("op")
        if op == "read":
            return {"value": self.node.read(payload["pid"])}
        if op == "history":
            return {"entries": self.node.history(payload["pid"])}
        if op == "height":
            return {"height": self.node.height(), "tip_hash": self.node.tip_hash()}
        if op == "state":
            return {"state": self.node.state_dump()}
        if op == "state_digest":
            return {"digest": self.node.state_digest()}
        if op == "verify_chain":
            return {"report": self.node.verify_chain()}
        raise FedprovError(f"unknown query op: {op!r}")


class RegistryService:
    def __init__(
        self,
        registry: PIDRegistry,
        orgs: Mapping[str, identity_mod.Organization],
    ):
        self.registry = registry
        self.orgs = dict(orgs)

    def handle(self, kind: str, payload: dict) -> dict:
        if kind == "RESOLVE":
            record = self.registry.resolve(payload["pid"])
            return {"ok": True, "record": record.to_dict()}
        if kind == "HISTORY":
            chain = self.registry.version_history(payload["pid"])
            return {"ok": True, "records": [r.to_dict() for r in chain]}
        if kind in ("MINT", "LINK", "UNLINK", "ENRICH"):
            caller = self._authenticate(payload)
            return self._mutate(kind, payload.get("request", {}), caller)
        raise FedprovError(f"unknown message kind: {kind!r}")

    def _authenticate(self, payload: dict) -> identity_mod.Identity:
        caller_data = payload.get("caller", {})
        caller = identity_mod.Identity.from_dict(caller_data, self.orgs)
        if not identity_mod.verify_identity(caller, self.orgs):
            raise UnauthorizedError("caller identity does not verify")
        request = payload.get("request", {})
        signature = payload.get("signature", "")
        if not crypto.verify(caller.public_key, signature, canonical_bytes(request)):
            raise UnauthorizedError("request signature invalid")
        return caller

    def _mutate(self, kind: str, request: dict, caller: identity_mod.Identity) -> dict:
        if kind == "MINT":
            record = self.registry.mint(
                object_kind=request["object_kind"],
                target_uri=request.get("target_uri", ""),
                checksum=request.get("checksum", ""),
                owner=caller.user_id,
                metadata=request.get("metadata"),
            )
            return {"ok": True, "record": record.to_dict()}
        if kind == "LINK":
            permission = None
            if request.get("permission"):
                permission = identity_mod.Permission.from_dict(request["permission"])
            self.registry.link_new_version(
                request["old_pid"],
                request["new_pid"],
                caller,
                orgs=self.orgs,
                permission=permission,
            )
            return {"ok": True}
        if kind == "UNLINK":
            old_pid = request.get("old_pid")
            new_pid = request["new_pid"]
            if old_pid:
                self.registry.rollback_link(old_pid, new_pid)
            else:
                self.registry.discard_record(new_pid)
            return {"ok": True}
        if kind == "ENRICH":
            record = self.registry.enrich(
                request["pid"],
                caller,
                target_uri=request.get("target_uri"),
                checksum=request.get("checksum"),
                metadata=request.get("metadata"),
                orgs=self.orgs,
            )
            return {"ok": True, "record": record.to_dict()}
        raise FedprovError(f"unknown message kind: {kind!r}")


class RegistryClient:
    """Registry access over any transport, signing mutating requests."""

    def __init__(self, transport, identity: identity_mod.Identity | None = None,
                 private_key: str | None = None):
        self.transport = transport
        self.identity = identity
        self._private_key = private_key

    def resolve(self, pid: str) -> dict:
        return self.transport("RESOLVE", {"pid": pid})["record"]

    def version_history(self, pid: str) -> list[dict]:
        return self.transport("HISTORY", {"pid": pid})["records"]

    def mint(self, object_kind: str, target_uri: str, checksum: str,
             metadata: dict | None = None) -> dict:
        request = {
            "object_kind": object_kind,
            "target_uri": target_uri,
            "checksum": checksum,
            "metadata": metadata or {},
        }
        return self._signed("MINT", request)["record"]

    def link_new_version(self, old_pid: str, new_pid: str,
                         permission: dict | None = None) -> None:
        request = {"old_pid": old_pid, "new_pid": new_pid, "permission": permission}
        self._signed("LINK", request)

    def unlink(self, new_pid: str, old_pid: str | None = None) -> None:
        self._signed("UNLINK", {"old_pid": old_pid, "new_pid": new_pid})

    def enrich(self, pid: str, target_uri: str | None = None,
               checksum: str | None = None, metadata: dict | None = None) -> dict:
        request = {
            "pid": pid,
            "target_uri": target_uri,
            "checksum": checksum,
            "metadata": metadata,
        }
        return self._signed("ENRICH", request)["record"]

    def _signed(self, kind: str, request: dict) -> dict:
        if self.identity is None or self._private_key is None:
            raise UnauthorizedError(f"{kind} requires caller credentials")
        payload = {
            "caller": self.identity.to_dict(),
            "request": request,
            "signature": crypto.sign(self._private_key, canonical_bytes(request)),
        }
        return self.transport(kind, payload)


def serve_node(service: NodeService, address: str) -> MessageServer:
    return MessageServer(address, service.handle).start()


def serve_registry(service: RegistryService, address: str) -> MessageServer:
    return MessageServer(address, service.handle).start()
