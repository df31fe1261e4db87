"""Chaincode: deterministic simulation of ledger operations.

Each operation runs against a read-only state view and produces a
read/write set plus a status message. Endorsing peers on every organization
run the same simulation; commit-time validation re-checks the read versions,
so divergent or stale simulations never mutate replicated state.

The CRUD asymmetry is enforced here: artifacts can be created, read, and
invalidated but never updated; provenance records can be created, read, and
updated but never invalidated. "Deletion" does not exist -- invalidation
retains the value and flips its status so referential integrity survives.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

from .. import identity as identity_mod
from ..canonical import digest
from .values import (
    STATUS_AFFECTED,
    STATUS_INVALIDATED,
    STATUS_VALID,
    LedgerValue,
)

TX_CREATE_ARTIFACT = "create-artifact"
TX_CREATE_PROV = "create-prov"
TX_UPDATE_PROV = "update-prov"
TX_INVALIDATE = "invalidate-artifact"
TX_FLAG_AFFECTED = "flag-affected"

TX_KINDS = (
    TX_CREATE_ARTIFACT,
    TX_CREATE_PROV,
    TX_UPDATE_PROV,
    TX_INVALIDATE,
    TX_FLAG_AFFECTED,
)

MSG_UNAUTHORIZED = "Error: Unauthorized user"
MSG_NOT_FOUND = "Error: Resource not found"
MSG_EXISTS = "Error: Resource already exists"
MSG_ARTIFACT_UPDATE = "Error: Artifact records cannot be updated"
MSG_PROV_INVALIDATE = "Error: Provenance records cannot be invalidated"
MSG_SOURCE_NOT_INVALIDATED = "Error: Source artifact is not invalidated"
MSG_BAD_REQUEST = "Error: Malformed transaction"

MSG_CREATED = "Success: Resource created successfully"
MSG_UPDATED = "Success: Resource updated successfully"
MSG_INVALIDATED = "Success: Resource invalidated"
MSG_ALREADY_INVALIDATED = "Success: Resource already invalidated"
MSG_FLAGGED = "Success: Resource flagged as affected"
MSG_ALREADY_FLAGGED = "Success: Resource already flagged"

KIND_ARTIFACT = "artifact"
KIND_PROVENANCE = "provenance-record"


@dataclass
class SimulationResult:
    """Outcome of simulating one transaction: message + read/write sets."""

    message: str
    reads: dict[str, int | None] = field(default_factory=dict)
    writes: dict[str, dict] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.message.startswith("Error:")

    def to_dict(self) -> dict:
        return {"message": self.message, "reads": self.reads, "writes": self.writes}

    @classmethod
    def from_dict(cls, data: Mapping) -> "SimulationResult":
        return cls(
            message=data["message"],
            reads={k: v for k, v in data.get("reads", {}).items()},
            writes={k: dict(v) for k, v in data.get("writes", {}).items()},
        )

    def result_digest(self) -> str:
        return digest(self.to_dict())


def simulate(
    body: Mapping,
    orgs: Mapping[str, identity_mod.Organization],
    get_state: Callable[[str], LedgerValue | None],
) -> SimulationResult:
    """Run one transaction body against a state view."""
    result = SimulationResult(message=MSG_BAD_REQUEST)

    def read(pid: str) -> LedgerValue | None:
        value = get_state(pid)
        result.reads[pid] = value.version if value else None
        return value

    kind = body.get("kind")
    pid = body.get("pid")
    args = body.get("args", {})
    timestamp = body.get("timestamp")
    creator = body.get("creator", {})
    caller = identity_mod.Identity(
        user_id=creator.get("user_id", ""),
        org=creator.get("org", ""),
        public_key=creator.get("public_key", ""),
        certificate=creator.get("certificate", ""),
        role=_role_for(creator.get("org", ""), orgs),
    )
    permission = None
    if args.get("permission"):
        permission = identity_mod.Permission.from_dict(args["permission"])

    if not isinstance(pid, str) or kind not in TX_KINDS:
        return result

    if kind in (TX_CREATE_ARTIFACT, TX_CREATE_PROV):
        if caller.role == identity_mod.ROLE_CONSUMER:
            result.message = MSG_UNAUTHORIZED
            return result
        if read(pid) is not None:
            result.message = MSG_EXISTS
            return result
        owners = tuple(args.get("owners") or [caller.user_id])
        value = LedgerValue(
            uri=args.get("uri", ""),
            checksum=args.get("checksum", ""),
            version=1,
            owners=owners,
            timestamp=timestamp,
            kind=KIND_ARTIFACT if kind == TX_CREATE_ARTIFACT else KIND_PROVENANCE,
            status=STATUS_VALID,
        )
        result.writes[pid] = value.to_dict()
        result.message = MSG_CREATED
        return result

    if kind == TX_UPDATE_PROV:
        value = read(pid)
        authorized = identity_mod.check_auth(
            pid,
            identity_mod.CAP_UPDATE_PROVENANCE,
            caller,
            list(value.owners) if value else None,
            orgs,
            permission,
        )
        if not authorized:
            result.message = MSG_UNAUTHORIZED
            return result
        if value is None:
            result.message = MSG_NOT_FOUND
            return result
        if value.kind == KIND_ARTIFACT:
            result.message = MSG_ARTIFACT_UPDATE
            return result
        updated = value.evolved(
            uri=args.get("new_uri", ""),
            checksum=args.get("new_checksum", ""),
            version=value.version + 1,
            timestamp=timestamp,
        )
        result.writes[pid] = updated.to_dict()
        result.message = MSG_UPDATED
        return result

    if kind == TX_INVALIDATE:
        value = read(pid)
        authorized = identity_mod.check_auth(
            pid,
            identity_mod.CAP_INVALIDATE_ARTIFACT,
            caller,
            list(value.owners) if value else None,
            orgs,
            permission,
        )
        if not authorized:
            result.message = MSG_UNAUTHORIZED
            return result
        if value is None:
            result.message = MSG_NOT_FOUND
            return result
        if value.kind == KIND_PROVENANCE:
            result.message = MSG_PROV_INVALIDATE
            return result
        if value.status == STATUS_INVALIDATED:
            result.message = MSG_ALREADY_INVALIDATED
            return result
        updated = value.evolved(
            version=value.version + 1,
            timestamp=timestamp,
            status=STATUS_INVALIDATED,
            status_source=pid,
        )
        result.writes[pid] = updated.to_dict()
        result.message = MSG_INVALIDATED
        return result

    if kind == TX_FLAG_AFFECTED:
        # Flagging downstream artifacts does not require ownership: any
        # producer may record the consequence of an invalidation, but only
        # when the cited source really is invalidated on this ledger.
        if caller.role == identity_mod.ROLE_CONSUMER or not identity_mod.verify_identity(
            caller, orgs
        ):
            result.message = MSG_UNAUTHORIZED
            return result
        source_pid = args.get("source_pid", "")
        source = read(source_pid) if source_pid else None
        if source is None or source.status != STATUS_INVALIDATED:
            result.message = MSG_SOURCE_NOT_INVALIDATED
            return result
        value = read(pid)
        if value is None:
            result.message = MSG_NOT_FOUND
            return result
        if value.kind == KIND_PROVENANCE:
            result.message = MSG_PROV_INVALIDATE
            return result
        if value.status in (STATUS_INVALIDATED, STATUS_AFFECTED):
            result.message = MSG_ALREADY_FLAGGED
            return result
        updated = value.evolved(
            version=value.version + 1,
            timestamp=timestamp,
            status=STATUS_AFFECTED,
            status_source=source_pid,
        )
        result.writes[pid] = updated.to_dict()
        result.message = MSG_FLAGGED
        return result

    return result


def _role_for(org_name: str, orgs: Mapping[str, identity_mod.Organization]) -> str:
    org = orgs.get(org_name)
    if org is not None and org.kind == identity_mod.ORG_CONSUMER:
        return identity_mod.ROLE_CONSUMER
    return identity_mod.ROLE_PRODUCER
