"""Handle-style persistent identifier registry with linear version chains.

One registry serves a federation under a single prefix. Records persist as
one JSON file per suffix under the registry root, so the registry can be
reopened from disk at any time; the suffix counter is recovered by scanning.
Mint and link are serialized through a single writer lock; resolution is
read-only.
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

from . import clock, identity as identity_mod
from .errors import (
    BrokenChainError,
    KindMismatchError,
    RegistryUnavailableError,
    SuccessorExistsError,
    UnauthorizedError,
    UnknownPIDError,
)

KIND_ARTIFACT = "artifact"
KIND_PROVENANCE = "provenance-record"
OBJECT_KINDS = (KIND_ARTIFACT, KIND_PROVENANCE)

_SUFFIX_WIDTH = 6
_SUFFIX_RE = re.compile(r"^\d{%d,}$" % _SUFFIX_WIDTH)


@dataclass(frozen=True)
class PID:
    """Persistent identifier; canonical text form is ``prefix/suffix``."""

    prefix: str
    suffix: str

    def __str__(self) -> str:
        return f"{self.prefix}/{self.suffix}"

    @classmethod
    def parse(cls, text: str) -> "PID":
        if not isinstance(text, str) or "/" not in text:
            raise UnknownPIDError(f"malformed PID: {text!r}")
        prefix, _, suffix = text.partition("/")
        if not prefix or not suffix:
            raise UnknownPIDError(f"malformed PID: {text!r}")
        return cls(prefix=prefix, suffix=suffix)


@dataclass(frozen=True)
class PIDRecord:
    pid: str
    target_uri: str
    checksum: str
    object_kind: str
    version_number: int
    predecessor: str | None = None
    successor: str | None = None
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "pid": self.pid,
            "target_uri": self.target_uri,
            "checksum": self.checksum,
            "object_kind": self.object_kind,
            "version_number": self.version_number,
            "predecessor": self.predecessor,
            "successor": self.successor,
            "metadata": dict(self.metadata),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "PIDRecord":
        return cls(
            pid=data["pid"],
            target_uri=data["target_uri"],
            checksum=data["checksum"],
            object_kind=data["object_kind"],
            version_number=int(data["version_number"]),
            predecessor=data.get("predecessor"),
            successor=data.get("successor"),
            metadata=dict(data.get("metadata", {})),
        )


class PIDRegistry:
    """Filesystem-backed registry for a single prefix."""

    def __init__(self, root: Path, prefix: str):
        self.root = Path(root)
        self.prefix = prefix
        self.records_dir = self.root / "records"
        self._write_lock = threading.Lock()
        try:
            self.records_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise RegistryUnavailableError(f"cannot open registry at {root}: {exc}") from exc

    # -- core operations ---------------------------------------------------

    def mint(
        self,
        object_kind: str,
        target_uri: str,
        checksum: str,
        owner: str,
        metadata: Mapping | None = None,
    ) -> PIDRecord:
        """Assign a fresh suffix and store a version-1 record.

        An empty ``target_uri`` is accepted: the artifact may become
        accessible later and the record enriched then.
        """
        if object_kind not in OBJECT_KINDS:
            raise KindMismatchError(f"unknown object kind: {object_kind!r}")
        with self._write_lock:
            suffix = self._next_suffix()
            record = PIDRecord(
                pid=f"{self.prefix}/{suffix}",
                target_uri=target_uri,
                checksum=checksum,
                object_kind=object_kind,
                version_number=1,
                metadata={"owner": owner, "created_at": clock.now_iso(), **(metadata or {})},
            )
            self._store(record)
            return record

    def resolve(self, pid: str) -> PIDRecord:
        parsed = PID.parse(pid)
        if parsed.prefix != self.prefix:
            raise UnknownPIDError(f"PID {pid!r} is outside prefix {self.prefix!r}")
        path = self._record_path(parsed.suffix)
        if not path.exists():
            raise UnknownPIDError(f"unknown PID: {pid!r}")
        try:
            with open(path, "r", encoding="utf-8") as fh:
                return PIDRecord.from_dict(json.load(fh))
        except (OSError, ValueError, KeyError) as exc:
            raise BrokenChainError(f"unreadable record for {pid!r}: {exc}") from exc

    def link_new_version(
        self,
        old_pid: str,
        new_pid: str,
        caller: identity_mod.Identity,
        orgs: Mapping[str, identity_mod.Organization] | None = None,
        permission: identity_mod.Permission | None = None,
    ) -> None:
        """Atomically chain ``new_pid`` as the next version after ``old_pid``.

        Both records are updated or neither. The old record must be the
        newest version (null successor) and both must be provenance records;
        the caller must own the old record or carry a valid grant.
        """
        with self._write_lock:
            old = self.resolve(old_pid)
            new = self.resolve(new_pid)
            if old.object_kind != KIND_PROVENANCE or new.object_kind != KIND_PROVENANCE:
                raise KindMismatchError("version chains link provenance records only")
            if old.successor is not None:
                raise SuccessorExistsError(
                    f"{old_pid} already superseded by {old.successor}"
                )
            if new.predecessor is not None or new.successor is not None:
                raise SuccessorExistsError(f"{new_pid} is already part of a chain")
            if not self._authorized(old, caller, orgs, permission):
                raise UnauthorizedError(
                    f"{caller.user_id!r} may not supersede {old_pid}"
                )
            updated_old = replace(old, successor=new_pid)
            updated_new = replace(
                new, predecessor=old_pid, version_number=old.version_number + 1
            )
            # Write the new record first: a crash between the two writes
            # leaves a forward link to a consistent record rather than a
            # dangling successor.
            self._store(updated_new)
            self._store(updated_old)

    def version_history(self, pid: str) -> list[PIDRecord]:
        """Full chain from version 1 to newest, from any member."""
        record = self.resolve(pid)
        chain = [record]
        seen = {record.pid}
        current = record
        while current.predecessor is not None:
            try:
                current = self.resolve(current.predecessor)
            except UnknownPIDError as exc:
                raise BrokenChainError(
                    f"predecessor {chain[0].predecessor!r} of {chain[0].pid} missing"
                ) from exc
            if current.pid in seen:
                raise BrokenChainError(f"version chain cycle at {current.pid}")
            seen.add(current.pid)
            chain.insert(0, current)
        current = record
        while current.successor is not None:
            try:
                current = self.resolve(current.successor)
            except UnknownPIDError as exc:
                raise BrokenChainError(
                    f"successor {current.successor!r} of {current.pid} missing"
                ) from exc
            if current.pid in seen:
                raise BrokenChainError(f"version chain cycle at {current.pid}")
            seen.add(current.pid)
            chain.append(current)
        return chain

    # -- enrichment and rollback -------------------------------------------

    def enrich(
        self,
        pid: str,
        caller: identity_mod.Identity,
        target_uri: str | None = None,
        checksum: str | None = None,
        metadata: Mapping | None = None,
        orgs: Mapping[str, identity_mod.Organization] | None = None,
    ) -> PIDRecord:
        """Fill empty fields of a record; never overwrites non-empty values."""
        with self._write_lock:
            record = self.resolve(pid)
            if not self._authorized(record, caller, orgs, None):
                raise UnauthorizedError(f"{caller.user_id!r} may not enrich {pid}")
            updates: dict = {}
            if target_uri is not None:
                if record.target_uri:
                    raise KindMismatchError(f"{pid} already has a target URI")
                updates["target_uri"] = target_uri
            if checksum is not None:
                if record.checksum:
                    raise KindMismatchError(f"{pid} already has a checksum")
                updates["checksum"] = checksum
            merged = dict(record.metadata)
            merged.update(metadata or {})
            updated = replace(record, metadata=merged, **updates)
            self._store(updated)
            return updated

    def rollback_link(self, old_pid: str, new_pid: str) -> None:
        """Undo a link and discard the superseding record.

        Internal compensation step of the atomic update protocol: only ever
        applied to a version that was never published (no ledger commit
        referenced it). Restores the registry to its pre-link state.
        """
        with self._write_lock:
            new = self.resolve(new_pid)
            if new.successor is not None:
                raise SuccessorExistsError(f"{new_pid} has a successor; cannot roll back")
            old = self.resolve(old_pid)
            if old.successor == new_pid:
                self._store(replace(old, successor=None))
            self._record_path(PID.parse(new_pid).suffix).unlink()

    def discard_record(self, pid: str) -> None:
        """Remove a freshly minted, never-linked record (rollback path).

        A record whose predecessor does not link back (a half-written link
        interrupted by a crash) is treated as unlinked.
        """
        with self._write_lock:
            record = self.resolve(pid)
            if record.successor is not None:
                raise SuccessorExistsError(f"{pid} has a successor; cannot discard")
            if record.predecessor is not None:
                predecessor = self.resolve(record.predecessor)
                if predecessor.successor == pid:
                    raise SuccessorExistsError(f"{pid} is linked; cannot discard")
            self._record_path(PID.parse(pid).suffix).unlink()

    def list_records(self) -> list[PIDRecord]:
        records = []
        for path in sorted(self.records_dir.glob("*.json")):
            with open(path, "r", encoding="utf-8") as fh:
                records.append(PIDRecord.from_dict(json.load(fh)))
        return records

    def state_digest(self) -> str:
        from .canonical import digest

        return digest([r.to_dict() for r in self.list_records()])

    # -- internals -----------------------------------------------------------

    def _authorized(
        self,
        record: PIDRecord,
        caller: identity_mod.Identity,
        orgs: Mapping[str, identity_mod.Organization] | None,
        permission: identity_mod.Permission | None,
    ) -> bool:
        owner = record.metadata.get("owner")
        if orgs is None:
            # No federation context: fall back to plain owner equality.
            return owner is None or owner == caller.user_id
        owners = [owner] if owner else []
        return identity_mod.check_auth(
            record.pid,
            identity_mod.CAP_UPDATE_PROVENANCE,
            caller,
            owners,
            orgs,
            permission,
        )

    def _next_suffix(self) -> str:
        highest = 0
        for path in self.records_dir.glob("*.json"):
            stem = path.stem
            if _SUFFIX_RE.match(stem):
                highest = max(highest, int(stem))
        return str(highest + 1).zfill(_SUFFIX_WIDTH)

    def _record_path(self, suffix: str) -> Path:
        return self.records_dir / f"{suffix}.json"

    def _store(self, record: PIDRecord) -> None:
        path = self._record_path(PID.parse(record.pid).suffix)
        try:
            path.write_text(json.dumps(record.to_dict(), indent=2, sort_keys=True))
        except OSError as exc:
            raise RegistryUnavailableError(f"cannot persist {record.pid}: {exc}") from exc
