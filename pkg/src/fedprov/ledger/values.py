"""World state: the ledger's current PID -> value view.

A value carries the five core fields (URI, checksum, version, owners,
timestamp) plus two metadata fields this system needs to enforce the
asymmetric CRUD rules and invalidation semantics: the object kind fixed at
create time, and the validity status with its provoking source.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, replace
from typing import Mapping

from ..canonical import digest

STATUS_VALID = "valid"
STATUS_INVALIDATED = "invalidated"
STATUS_AFFECTED = "affected"


@dataclass(frozen=True)
class LedgerValue:
    uri: str
    checksum: str
    version: int
    owners: tuple[str, ...]
    timestamp: str
    kind: str
    status: str = STATUS_VALID
    status_source: str | None = None

    def to_dict(self) -> dict:
        return {
            "uri": self.uri,
            "checksum": self.checksum,
            "version": self.version,
            "owners": list(self.owners),
            "timestamp": self.timestamp,
            "kind": self.kind,
            "status": self.status,
            "status_source": self.status_source,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "LedgerValue":
        return cls(
            uri=data["uri"],
            checksum=data["checksum"],
            version=int(data["version"]),
            owners=tuple(data["owners"]),
            timestamp=data["timestamp"],
            kind=data["kind"],
            status=data.get("status", STATUS_VALID),
            status_source=data.get("status_source"),
        )

    def evolved(self, **changes) -> "LedgerValue":
        return replace(self, **changes)


class WorldState:
    """Current key -> value view; many readers, one committer."""

    def __init__(self):
        self._values: dict[str, LedgerValue] = {}
        self._lock = threading.RLock()

    def get(self, pid: str) -> LedgerValue | None:
        with self._lock:
            return self._values.get(pid)

    def version(self, pid: str) -> int | None:
        with self._lock:
            value = self._values.get(pid)
            return value.version if value else None

    def put(self, pid: str, value: LedgerValue) -> None:
        with self._lock:
            self._values[pid] = value

    def snapshot(self) -> dict[str, LedgerValue]:
        with self._lock:
            return dict(self._values)

    def dump(self) -> dict[str, dict]:
        with self._lock:
            return {pid: value.to_dict() for pid, value in sorted(self._values.items())}

    def state_digest(self) -> str:
        return digest(self.dump())
