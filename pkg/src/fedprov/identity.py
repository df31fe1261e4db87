"""PKI identities, organizations, and the ledger's authorization predicate.

Each federation runs one registration service that collapses the identity
provider and the per-organization certificate authorities: it holds the CA
private keys, issues user keypairs, and signs certificates. A certificate is
the CA's Ed25519 signature over the canonical form of
``{user-id, org, public-key}`` -- deliberately not X.509.

Roles follow organization kind: users of the single read-only organization
are consumers and can never write; users of producer organizations are
producers (or curators, which are write-equivalent). Ownership of a ledger
resource can be delegated through an explicit signed ``Permission`` grant.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from . import crypto
from .canonical import canonical_bytes
from .errors import DuplicateUserError, UnknownOrgError

ORG_PRODUCER = "producer"
ORG_CONSUMER = "consumer-read-only"

ROLE_PRODUCER = "producer"
ROLE_CURATOR = "curator"
ROLE_CONSUMER = "consumer"

CAP_UPDATE_PROVENANCE = "update-provenance"
CAP_INVALIDATE_ARTIFACT = "invalidate-artifact"
WRITE_CAPABILITIES = (CAP_UPDATE_PROVENANCE, CAP_INVALIDATE_ARTIFACT)

KEYDIR_ENV = "FEDPROV_KEYDIR"


@dataclass(frozen=True)
class Organization:
    """A federation member; ``ca_public_key`` anchors all its identities."""

    name: str
    kind: str
    ca_public_key: str

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "ca-public-key": self.ca_public_key,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Organization":
        return cls(
            name=data["name"],
            kind=data["kind"],
            ca_public_key=data["ca-public-key"],
        )


def validate_organizations(orgs: Iterable[Organization]) -> None:
    """Enforce federation-level invariants on the organization set."""
    orgs = list(orgs)
    names = [o.name for o in orgs]
    if len(set(names)) != len(names):
        raise UnknownOrgError("organization names must be unique")
    readonly = [o for o in orgs if o.kind == ORG_CONSUMER]
    if len(readonly) != 1:
        raise UnknownOrgError(
            f"federation needs exactly one read-only organization, found {len(readonly)}"
        )
    for org in orgs:
        if org.kind not in (ORG_PRODUCER, ORG_CONSUMER):
            raise UnknownOrgError(f"unknown organization kind: {org.kind!r}")


@dataclass(frozen=True)
class Identity:
    """A user identity: CA-certified public key bound to an organization."""

    user_id: str
    org: str
    public_key: str
    certificate: str
    role: str = ROLE_PRODUCER

    def certificate_payload(self) -> bytes:
        return certificate_payload(self.user_id, self.org, self.public_key)

    def to_dict(self) -> dict:
        return {
            "user-id": self.user_id,
            "org": self.org,
            "public-key": self.public_key,
            "certificate": self.certificate,
        }

    @classmethod
    def from_dict(cls, data: Mapping, orgs: Mapping[str, Organization] | None = None) -> "Identity":
        org_name = data["org"]
        role = ROLE_PRODUCER
        if orgs is not None and org_name in orgs:
            role = ROLE_CONSUMER if orgs[org_name].kind == ORG_CONSUMER else ROLE_PRODUCER
        return cls(
            user_id=data["user-id"],
            org=org_name,
            public_key=data["public-key"],
            certificate=data["certificate"],
            role=data.get("role", role),
        )


def certificate_payload(user_id: str, org: str, public_key: str) -> bytes:
    return canonical_bytes({"org": org, "public-key": public_key, "user-id": user_id})


def verify_identity(identity: Identity, orgs: Mapping[str, Organization]) -> bool:
    """True iff the certificate verifies under the claimed org's CA."""
    org = orgs.get(identity.org)
    if org is None:
        return False
    return crypto.verify(
        org.ca_public_key, identity.certificate, identity.certificate_payload()
    )


@dataclass(frozen=True)
class Permission:
    """An owner-signed grant of one write capability on one PID.

    Grants carry the grantor's own certified key material so they can be
    verified by any node without a directory lookup. There is no expiry or
    revocation; a grant is valid for as long as the grantor stays an owner.
    """

    subject: str
    grantee: str
    capability: str
    grantor: str
    grantor_org: str
    grantor_public_key: str
    grantor_certificate: str
    signature: str

    def payload(self) -> bytes:
        return canonical_bytes(
            {
                "capability": self.capability,
                "grantee": self.grantee,
                "grantor": self.grantor,
                "grantor-org": self.grantor_org,
                "grantor-public-key": self.grantor_public_key,
                "subject": self.subject,
            }
        )

    def to_dict(self) -> dict:
        return {
            "subject": self.subject,
            "grantee": self.grantee,
            "capability": self.capability,
            "grantor": self.grantor,
            "grantor-org": self.grantor_org,
            "grantor-public-key": self.grantor_public_key,
            "grantor-certificate": self.grantor_certificate,
            "signature": self.signature,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Permission":
        return cls(
            subject=data["subject"],
            grantee=data["grantee"],
            capability=data["capability"],
            grantor=data["grantor"],
            grantor_org=data["grantor-org"],
            grantor_public_key=data["grantor-public-key"],
            grantor_certificate=data["grantor-certificate"],
            signature=data["signature"],
        )


def grant_permission(
    subject: str,
    grantee: str,
    capability: str,
    grantor: Identity,
    grantor_private_key: str,
) -> Permission:
    """Create a signed grant. Validity is decided later by ``check_auth``."""
    grant = Permission(
        subject=subject,
        grantee=grantee,
        capability=capability,
        grantor=grantor.user_id,
        grantor_org=grantor.org,
        grantor_public_key=grantor.public_key,
        grantor_certificate=grantor.certificate,
        signature="",
    )
    signature = crypto.sign(grantor_private_key, grant.payload())
    return Permission(**{**grant.__dict__, "signature": signature})


def check_auth(
    pid: str,
    capability: str,
    caller: Identity,
    owners: list[str] | None,
    orgs: Mapping[str, Organization],
    permission: Permission | None = None,
) -> bool:
    """Authorization predicate consumed by every write operation.

    True iff the caller is an owner of *pid* or presents a valid grant for
    (pid, caller, capability) signed by an owner. Consumer-role callers are
    always refused. ``owners=None`` means the resource has no readable state
    yet; authorization then defers to the caller's role so the operation can
    report resource-not-found instead.
    """
    org = orgs.get(caller.org)
    if org is None or not verify_identity(caller, orgs):
        return False
    if org.kind == ORG_CONSUMER or caller.role == ROLE_CONSUMER:
        return False
    if owners is None:
        return True
    if caller.user_id in owners:
        return True
    if permission is None:
        return False
    if (
        permission.subject != pid
        or permission.grantee != caller.user_id
        or permission.capability != capability
    ):
        return False
    if permission.grantor not in owners:
        return False
    grantor_org = orgs.get(permission.grantor_org)
    if grantor_org is None or grantor_org.kind == ORG_CONSUMER:
        return False
    cert_payload = certificate_payload(
        permission.grantor, permission.grantor_org, permission.grantor_public_key
    )
    if not crypto.verify(grantor_org.ca_public_key, permission.grantor_certificate, cert_payload):
        return False
    return crypto.verify(permission.grantor_public_key, permission.signature, permission.payload())


@dataclass
class RegistrationService:
    """Local CA + identity provider for one federation.

    Issues keypairs and certificates, persists public identity records under
    ``identities_dir`` (one JSON file per user, schema
    ``{user-id, org, public-key, certificate}``) and private material under a
    per-user key directory (``$FEDPROV_KEYDIR`` overrides the default).
    Identity records are immutable once issued; writes are serialized.
    """

    ca_keys: dict[str, str]
    organizations: dict[str, Organization]
    identities_dir: Path
    keys_dir: Path
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @classmethod
    def create(
        cls,
        org_specs: Iterable[tuple[str, str]],
        ca_dir: Path,
        identities_dir: Path,
        keys_dir: Path,
    ) -> "RegistrationService":
        """Generate a CA per organization and persist private keys to *ca_dir*."""
        ca_dir = Path(ca_dir)
        ca_dir.mkdir(parents=True, exist_ok=True)
        orgs: dict[str, Organization] = {}
        ca_keys: dict[str, str] = {}
        for name, kind in org_specs:
            private_hex, public_hex = crypto.generate_keypair()
            orgs[name] = Organization(name=name, kind=kind, ca_public_key=public_hex)
            ca_keys[name] = private_hex
            (ca_dir / f"{name}.key").write_text(private_hex)
        validate_organizations(orgs.values())
        service = cls(
            ca_keys=ca_keys,
            organizations=orgs,
            identities_dir=Path(identities_dir),
            keys_dir=Path(keys_dir),
        )
        service.identities_dir.mkdir(parents=True, exist_ok=True)
        service.keys_dir.mkdir(parents=True, exist_ok=True)
        return service

    @classmethod
    def load(
        cls,
        organizations: Iterable[Organization],
        ca_dir: Path,
        identities_dir: Path,
        keys_dir: Path,
    ) -> "RegistrationService":
        """Reopen a service from persisted CA keys and an org list."""
        orgs = {o.name: o for o in organizations}
        ca_keys = {}
        for name in orgs:
            key_path = Path(ca_dir) / f"{name}.key"
            if key_path.exists():
                ca_keys[name] = key_path.read_text().strip()
        return cls(
            ca_keys=ca_keys,
            organizations=orgs,
            identities_dir=Path(identities_dir),
            keys_dir=Path(keys_dir),
        )

    def register_user(self, org: str, user_id: str, role: str | None = None) -> tuple[Identity, str]:
        """Issue a fresh keypair and certificate; returns (identity, private_key).

        Raises ``UnknownOrgError`` for orgs outside the federation and
        ``DuplicateUserError`` if the user id is taken within the org.
        """
        with self._lock:
            organization = self.organizations.get(org)
            if organization is None or org not in self.ca_keys:
                raise UnknownOrgError(f"organization not in federation: {org!r}")
            record_path = self._record_path(user_id, org)
            if record_path.exists():
                raise DuplicateUserError(f"user already registered: {user_id!r} in {org!r}")
            if organization.kind == ORG_CONSUMER:
                resolved_role = ROLE_CONSUMER
            elif role in (None, ROLE_PRODUCER):
                resolved_role = ROLE_PRODUCER
            elif role == ROLE_CURATOR:
                resolved_role = ROLE_CURATOR
            else:
                raise UnknownOrgError(f"role {role!r} not available in a {organization.kind} org")
            private_hex, public_hex = crypto.generate_keypair()
            certificate = crypto.sign(
                self.ca_keys[org], certificate_payload(user_id, org, public_hex)
            )
            identity = Identity(
                user_id=user_id,
                org=org,
                public_key=public_hex,
                certificate=certificate,
                role=resolved_role,
            )
            record_path.write_text(json.dumps(identity.to_dict(), indent=2, sort_keys=True))
            user_dir = self._user_key_dir(user_id)
            user_dir.mkdir(parents=True, exist_ok=True)
            (user_dir / "key").write_text(private_hex)
            (user_dir / "identity.json").write_text(
                json.dumps(identity.to_dict(), indent=2, sort_keys=True)
            )
            return identity, private_hex

    def _record_path(self, user_id: str, org: str) -> Path:
        return self.identities_dir / f"{user_id}@{org}.json"

    def _user_key_dir(self, user_id: str) -> Path:
        override = os.environ.get(KEYDIR_ENV)
        base = Path(override) if override else self.keys_dir
        return base / user_id


def load_identity(path: Path, orgs: Mapping[str, Organization] | None = None) -> Identity:
    with open(path, "r", encoding="utf-8") as fh:
        return Identity.from_dict(json.load(fh), orgs)


def load_identity_directory(
    identities_dir: Path, orgs: Mapping[str, Organization] | None = None
) -> dict[str, Identity]:
    """All issued identities keyed by user id (used for owner/org lookups)."""
    out: dict[str, Identity] = {}
    directory = Path(identities_dir)
    if not directory.is_dir():
        return out
    for path in sorted(directory.glob("*.json")):
        identity = load_identity(path, orgs)
        out[identity.user_id] = identity
    return out


def user_credentials(keys_base: Path, user_id: str) -> tuple[Identity, str]:
    """Load (identity, private_key) from a per-user key directory.

    ``keys_base`` is the directory holding one subdirectory per user; the
    ``FEDPROV_KEYDIR`` environment variable overrides it.
    """
    override = os.environ.get(KEYDIR_ENV)
    base = Path(override) if override else Path(keys_base)
    user_dir = base / user_id
    identity_path = user_dir / "identity.json"
    key_path = user_dir / "key"
    if not identity_path.exists() or not key_path.exists():
        raise UnknownOrgError(f"no identity material for user {user_id!r} under {base}")
    return load_identity(identity_path), key_path.read_text().strip()
