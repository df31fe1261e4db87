"""fedprov: command-line client and federation harness.

Machine-readable output is always a single JSON object on stdout; human
diagnostics go to stderr (suppressed by --json). The client signs every
transaction locally and talks to the organization nodes directly -- queries
fail over across nodes, so a dead replica does not take the client down.

Verbs
    publish       hash + store a file, mint PIDs, commit create transactions
    update-prov   atomic provenance-record update (classify/store/mint/link/commit)
    verify        recompute checksums against the ledger, print version history
    invalidate    flag an artifact invalid; optionally cascade to descendants
    trace         lineage paths with checksum-verified attesting documents
    federation    init | start-node | verify-chain | status

Exit codes
    0   postconditions achieved
    1   unclassified error
    2   usage error
    3   configuration error
    10  unknown or unresolvable PID
    11  unauthorized
    12  ledger rejected (endorsement policy, divergence, conflict)
    13  illegal update (original content altered)
    14  integrity mismatch (checksum or tamper evidence)
    15  invalid provenance document
    16  node or service unreachable
    17  duplicate resource / version chain conflict
    18  cascade refused: source not invalidated
    19  file I/O error
    20  derivation cycle detected
"""

from __future__ import annotations

import argparse
import json
import signal
import sys
import time
from dataclasses import dataclass
from pathlib import Path

from . import __version__, clock, identity as identity_mod
from .errors import (
    BrokenChainError,
    ChecksumMismatchError,
    ConfigError,
    CycleError,
    DocumentNotFoundError,
    DuplicateUserError,
    FedprovError,
    IllegalUpdateError,
    InvalidDocumentError,
    KindMismatchError,
    LedgerRejectedError,
    NotInvalidatedError,
    RegistryUnavailableError,
    SuccessorExistsError,
    TransportError,
    UnauthorizedError,
    UnknownPIDError,
)
from .federation import FederationConfig, init_federation, load_node_credentials
from .ledger.chaincode import (
    MSG_ARTIFACT_UPDATE,
    MSG_EXISTS,
    MSG_NOT_FOUND,
    MSG_PROV_INVALIDATE,
    MSG_UNAUTHORIZED,
)
from .ledger.client import LedgerClient
from .ledger.node import OrgNode
from .ledger.ordering import OrderingService
from .lineage import (
    POLICY_FLAG_AND_NOTIFY,
    build_graph,
    collect_documents,
    invalidate_cascade,
    trace_lineage,
    verify_trace_soundness,
)
from .pid_registry import KIND_ARTIFACT, KIND_PROVENANCE, PIDRegistry
from .prov import ProvDocument, validate_document
from .prov_store import ProvStore
from .services import NodeService, RegistryClient, RegistryService, serve_node, serve_registry
from .transport import TcpTransport
from .updates import AtomicUpdater

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_UNKNOWN_PID = 10
EXIT_UNAUTHORIZED = 11
EXIT_LEDGER_REJECTED = 12
EXIT_ILLEGAL_UPDATE = 13
EXIT_MISMATCH = 14
EXIT_INVALID_DOCUMENT = 15
EXIT_UNREACHABLE = 16
EXIT_DUPLICATE = 17
EXIT_NOT_INVALIDATED = 18
EXIT_IO = 19
EXIT_CYCLE = 20

_ERROR_EXITS: list[tuple[type, int]] = [
    (ConfigError, EXIT_CONFIG),
    (UnknownPIDError, EXIT_UNKNOWN_PID),
    (BrokenChainError, EXIT_UNKNOWN_PID),
    (UnauthorizedError, EXIT_UNAUTHORIZED),
    (IllegalUpdateError, EXIT_ILLEGAL_UPDATE),
    (ChecksumMismatchError, EXIT_MISMATCH),
    (DocumentNotFoundError, EXIT_MISMATCH),
    (InvalidDocumentError, EXIT_INVALID_DOCUMENT),
    (TransportError, EXIT_UNREACHABLE),
    (RegistryUnavailableError, EXIT_UNREACHABLE),
    (DuplicateUserError, EXIT_DUPLICATE),
    (SuccessorExistsError, EXIT_DUPLICATE),
    (KindMismatchError, EXIT_DUPLICATE),
    (NotInvalidatedError, EXIT_NOT_INVALIDATED),
    (CycleError, EXIT_CYCLE),
    (LedgerRejectedError, EXIT_LEDGER_REJECTED),
    (OSError, EXIT_IO),
    (FedprovError, EXIT_ERROR),
]

_RECEIPT_EXITS = {
    MSG_UNAUTHORIZED: EXIT_UNAUTHORIZED,
    MSG_NOT_FOUND: EXIT_UNKNOWN_PID,
    MSG_EXISTS: EXIT_DUPLICATE,
    MSG_ARTIFACT_UPDATE: EXIT_DUPLICATE,
    MSG_PROV_INVALIDATE: EXIT_DUPLICATE,
}


class CommandFailure(FedprovError):
    """Carries an exit code plus a partial result body for stdout."""

    def __init__(self, code: int, message: str, body: dict | None = None):
        super().__init__(message)
        self.code = code
        self.body = body or {}


def exit_code_for(exc: Exception) -> int:
    for exc_type, code in _ERROR_EXITS:
        if isinstance(exc, exc_type):
            return code
    return EXIT_ERROR


# ---------------------------------------------------------------------------
# Client context
# ---------------------------------------------------------------------------


@dataclass
class ClientContext:
    """Everything a command needs: config, credentials, service transports."""

    config: FederationConfig
    identity: identity_mod.Identity | None = None
    private_key: str | None = None

    @classmethod
    def build(cls, config_path: str, user_id: str | None) -> "ClientContext":
        config = FederationConfig.load(Path(config_path))
        config.require_cas()
        identity = private_key = None
        if user_id:
            identity, private_key = identity_mod.user_credentials(config.keys_dir, user_id)
        return cls(config=config, identity=identity, private_key=private_key)

    def require_identity(self) -> identity_mod.Identity:
        if self.identity is None or self.private_key is None:
            raise ConfigError("this command needs --identity <user-id>")
        return self.identity

    def ledger(self) -> LedgerClient:
        identity = self.require_identity()
        return LedgerClient(
            identity=identity,
            private_key=self.private_key,
            peer_transports=self._peer_transports(),
            orderer_transport=TcpTransport(self.config.orderer_org().listen_address),
            orgs=self.config.orgs_map(),
            endorsement_policy=self.config.endorsement_policy,
        )

    def reader(self) -> LedgerClient:
        """Query-only access: works without any identity."""
        anonymous = self.identity or identity_mod.Identity(
            user_id="", org="", public_key="", certificate=""
        )
        return LedgerClient(
            identity=anonymous,
            private_key=self.private_key or "",
            peer_transports=self._peer_transports(),
            orderer_transport=TcpTransport(self.config.orderer_org().listen_address),
            orgs=self.config.orgs_map(),
            endorsement_policy=self.config.endorsement_policy,
        )

    def registry(self) -> RegistryClient:
        return RegistryClient(
            TcpTransport(self.config.registry_address), self.identity, self.private_key
        )

    def store(self) -> ProvStore:
        return ProvStore(self.config.store_root)

    def updater(self) -> AtomicUpdater:
        return AtomicUpdater(
            store=self.store(),
            registry=self.registry(),
            ledger=self.ledger(),
            journal_path=self.config.base_dir / "journal" / "updates.jsonl",
        )

    def owner_org(self, user_id: str) -> str:
        directory = identity_mod.load_identity_directory(
            self.config.identities_dir, self.config.orgs_map()
        )
        identity = directory.get(user_id)
        return identity.org if identity else "unknown"

    def _peer_transports(self) -> dict[str, TcpTransport]:
        return {
            org.name: TcpTransport(org.listen_address)
            for org in self.config.organizations
        }


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def publish_artifact(
    ctx: ClientContext, file_path: str, doc_path: str, entity_id: str | None = None
) -> dict:
    """Publish a file plus its provenance document; returns both PIDs."""
    identity = ctx.require_identity()
    if identity.role == identity_mod.ROLE_CONSUMER:
        raise UnauthorizedError("consumer identities cannot publish")
    payload = Path(file_path).read_bytes()
    doc = _load_document(doc_path)

    store = ctx.store()
    registry = ctx.registry()
    ledger = ctx.ledger()

    artifact_uri, artifact_checksum, _ = store.store_bytes(payload)
    artifact_record = registry.mint(KIND_ARTIFACT, artifact_uri, artifact_checksum)
    artifact_pid = artifact_record["pid"]

    doc = _attach_artifact(doc, artifact_pid, artifact_checksum, entity_id)
    _require_resolvable_entities(doc, registry)
    doc_uri, doc_checksum, _ = store.store_document(doc)
    prov_record = registry.mint(KIND_PROVENANCE, doc_uri, doc_checksum)
    prov_pid = prov_record["pid"]

    timestamp = clock.now_iso()
    artifact_receipt = ledger.hlf_create(
        artifact_pid, artifact_uri, artifact_checksum, [identity.user_id],
        KIND_ARTIFACT, timestamp,
    )
    _require_committed(artifact_receipt, {"artifact_pid": artifact_pid})
    prov_receipt = ledger.hlf_create(
        prov_pid, doc_uri, doc_checksum, [identity.user_id], KIND_PROVENANCE, timestamp
    )
    _require_committed(prov_receipt, {"artifact_pid": artifact_pid, "prov_pid": prov_pid})

    return {
        "artifact_pid": artifact_pid,
        "prov_pid": prov_pid,
        "artifact_checksum": artifact_checksum,
        "doc_checksum": doc_checksum,
        "receipts": {
            "artifact": artifact_receipt.to_dict(),
            "provenance": prov_receipt.to_dict(),
        },
    }


def update_provenance(
    ctx: ClientContext, prov_pid: str, doc_path: str, grant_path: str | None = None
) -> dict:
    identity = ctx.require_identity()
    new_doc = _load_document(doc_path)
    permission = _load_grant(grant_path)
    result = ctx.updater().update(prov_pid, new_doc, identity, permission)
    return result.to_dict()


def verify_pid(ctx: ClientContext, pid: str) -> dict:
    """Recompute content checksums against the ledger record for *pid*."""
    registry = ctx.registry()
    ledger = ctx.reader()
    store = ctx.store()

    record = registry.resolve(pid)
    chain = registry.version_history(pid)
    if record["object_kind"] == KIND_PROVENANCE:
        ledger_pid = chain[0]["pid"]
        wanted_version = record["version_number"]
    else:
        ledger_pid = pid
        wanted_version = None

    value = ledger.hlf_read(ledger_pid)
    if value is None:
        raise UnknownPIDError(f"{pid} has no committed ledger record")
    history = ledger.get_history(ledger_pid)

    if wanted_version is None:
        attested_uri, attested_checksum = value.uri, value.checksum
    else:
        entry = next(
            (h for h in history if h["value"]["version"] == wanted_version), None
        )
        if entry is None:
            raise UnknownPIDError(f"version {wanted_version} of {pid} not on ledger")
        attested_uri = entry["value"]["uri"]
        attested_checksum = entry["value"]["checksum"]

    mismatches = []
    if record["checksum"] and record["checksum"] != attested_checksum:
        mismatches.append("registry checksum differs from ledger checksum")
    try:
        store.fetch_bytes(attested_uri, attested_checksum)
    except (ChecksumMismatchError, DocumentNotFoundError) as exc:
        mismatches.append(str(exc))

    body = {
        "pid": pid,
        "result": "VERIFIED" if not mismatches else "MISMATCH",
        "mismatches": mismatches,
        "status": value.status,
        "ledger_version": value.version,
        "version_history": chain,
        "ledger_history": [
            {
                "height": h["height"],
                "kind": h["kind"],
                "version": h["value"]["version"],
                "status": h["value"]["status"],
                "timestamp": h["timestamp"],
            }
            for h in history
        ],
    }
    if mismatches:
        raise CommandFailure(EXIT_MISMATCH, "integrity mismatch", body)
    return body


def invalidate_artifact(
    ctx: ClientContext,
    pid: str,
    reason: str,
    cascade: bool,
    grant_path: str | None = None,
) -> dict:
    identity = ctx.require_identity()
    ledger = ctx.ledger()
    permission = _load_grant(grant_path)
    receipt = ledger.hlf_invalidate(pid, reason=reason, permission=permission)
    _require_committed(receipt, {"pid": pid})

    body = {"pid": pid, "receipt": receipt.to_dict(), "affected": []}
    if cascade:
        store = ctx.store()
        state = ledger.state_dump()
        graph = build_graph(collect_documents(state, store), state)
        flagged = invalidate_cascade(
            pid,
            graph,
            POLICY_FLAG_AND_NOTIFY,
            ledger=ledger,
            outbox_dir=ctx.config.outbox_dir,
            owner_org=ctx.owner_org,
        )
        body["affected"] = [{"pid": p, "status": s} for p, s in flagged]
    return body


def trace_artifact(ctx: ClientContext, pid: str, include_dot: bool = False) -> dict:
    ledger = ctx.reader()
    store = ctx.store()
    state = ledger.state_dump()
    graph = build_graph(collect_documents(state, store), state)
    paths = trace_lineage(pid, graph)
    verify_trace_soundness(paths, store)
    body = {"pid": pid, "paths": [p.to_dict() for p in paths]}
    if include_dot:
        body["dot"] = graph.to_dot()
    return body


# ---------------------------------------------------------------------------
# Federation actions
# ---------------------------------------------------------------------------


def federation_init(config_path: str) -> dict:
    config = init_federation(Path(config_path))
    return {
        "initialized": True,
        "organizations": [o.name for o in config.organizations],
        "orderer": config.orderer_org().name,
        "registry_address": config.registry_address,
    }


def federation_status(config_path: str) -> dict:
    config = FederationConfig.load(Path(config_path))
    nodes = {}
    reachable = 0
    for org in config.organizations:
        transport = TcpTransport(org.listen_address, timeout=3.0)
        try:
            height = transport("QUERY", {"op": "height"})
            digest = transport("QUERY", {"op": "state_digest"})
            nodes[org.name] = {
                "reachable": True,
                "height": height["height"],
                "tip_hash": height["tip_hash"],
                "state_digest": digest["digest"],
            }
            reachable += 1
        except TransportError as exc:
            nodes[org.name] = {"reachable": False, "error": str(exc)}
    body = {"nodes": nodes, "consistent": _digests_agree(nodes)}
    if reachable == 0:
        raise CommandFailure(EXIT_UNREACHABLE, "no node reachable", body)
    return body


def federation_verify_chain(config_path: str) -> dict:
    config = FederationConfig.load(Path(config_path))
    nodes = {}
    clean = True
    reachable = 0
    for org in config.organizations:
        transport = TcpTransport(org.listen_address, timeout=10.0)
        try:
            report = transport("QUERY", {"op": "verify_chain"})["report"]
            digest = transport("QUERY", {"op": "state_digest"})["digest"]
            nodes[org.name] = {"reachable": True, "report": report, "state_digest": digest}
            reachable += 1
            clean = clean and report["ok"]
        except TransportError as exc:
            nodes[org.name] = {"reachable": False, "error": str(exc)}
    body = {"nodes": nodes, "all_clear": clean and reachable > 0,
            "consistent": _digests_agree(nodes)}
    if reachable == 0:
        raise CommandFailure(EXIT_UNREACHABLE, "no node reachable", body)
    if not body["all_clear"] or not body["consistent"]:
        raise CommandFailure(EXIT_MISMATCH, "chain verification found divergence", body)
    return body


def federation_start_node(config_path: str, org_name: str) -> dict:
    """Run one organization node in the foreground (plus orderer/registry on
    the orderer org). Blocks until interrupted."""
    config = FederationConfig.load(Path(config_path))
    org = config.org_entry(org_name)
    orgs_map = config.orgs_map()
    node_identity, node_key = load_node_credentials(config, org_name)
    node = OrgNode(
        org_name=org_name,
        node_identity=node_identity,
        node_private_key=node_key,
        orgs=orgs_map,
        endorsement_policy=config.endorsement_policy,
        ledger_path=config.ledger_path(org_name),
    )
    service = NodeService(node)
    servers = []
    orderer = None
    try:
        servers.append(serve_node(service, org.listen_address))
        if config.orderer_org().name == org_name:
            orderer = OrderingService(
                peers={
                    o.name: TcpTransport(o.listen_address)
                    for o in config.organizations
                },
                tip_height=node.height(),
                tip_hash=node.tip_hash(),
                max_block_txs=config.max_block_txs,
                block_timeout_ms=config.block_timeout_ms,
                max_clock_skew_ms=config.max_clock_skew_ms,
            )
            service.orderer = orderer
            registry_service = RegistryService(
                PIDRegistry(config.registry_root, config.pid_prefix), orgs_map
            )
            servers.append(serve_registry(registry_service, config.registry_address))
    except TransportError:
        for server in servers:
            server.stop()
        raise

    stop = {"requested": False}

    def _handle(signum, frame):
        stop["requested"] = True

    signal.signal(signal.SIGTERM, _handle)
    signal.signal(signal.SIGINT, _handle)
    print(
        json.dumps({"serving": org_name, "address": org.listen_address}),
        flush=True,
    )
    try:
        while not stop["requested"]:
            time.sleep(0.2)
    finally:
        if orderer is not None:
            orderer.close()
        for server in servers:
            server.stop()
    return {"stopped": org_name}


def _digests_agree(nodes: dict) -> bool:
    digests = {
        info["state_digest"] for info in nodes.values() if info.get("reachable")
    }
    return len(digests) <= 1


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _load_document(path: str) -> ProvDocument:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except ValueError as exc:
        raise InvalidDocumentError([f"{path}: not valid JSON ({exc})"]) from exc
    doc = ProvDocument.from_dict(data)
    violations = validate_document(doc)
    if violations:
        raise InvalidDocumentError(violations)
    return doc


def _load_grant(path: str | None) -> identity_mod.Permission | None:
    if path is None:
        return None
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return identity_mod.Permission.from_dict(data)


def _attach_artifact(
    doc: ProvDocument,
    artifact_pid: str,
    checksum: str,
    entity_id: str | None = None,
) -> ProvDocument:
    """Fill the entity standing for the published file with its PID.

    Preference order: an explicitly named entity, an entity already carrying
    the file's checksum, the only unset entity, or the only unset entity
    that the document declares as generated.
    """
    from dataclasses import replace as dc_replace

    from .prov import REL_GENERATED

    if entity_id is not None:
        named = [e for e in doc.entities if e.local_id == entity_id]
        if not named:
            raise InvalidDocumentError([f"no entity with local_id {entity_id!r}"])
        target = named[0]
    else:
        by_checksum = [e for e in doc.entities if e.checksum == checksum]
        unset = [e for e in doc.entities if e.artifact_pid is None and e.checksum is None]
        generated_ids = {
            r.source for r in doc.relations if r.kind == REL_GENERATED
        }
        unset_generated = [e for e in unset if e.local_id in generated_ids]
        if by_checksum:
            target = by_checksum[0]
        elif len(unset) == 1:
            target = unset[0]
        elif len(unset_generated) == 1:
            target = unset_generated[0]
        else:
            raise InvalidDocumentError(
                [
                    "cannot determine which entity stands for the published file; "
                    "pass --entity <local-id>"
                ]
            )
    if target.artifact_pid is not None:
        raise InvalidDocumentError(
            [f"entity {target.local_id!r} already references {target.artifact_pid!r}"]
        )
    filled = dc_replace(target, artifact_pid=artifact_pid, checksum=checksum)
    return doc.with_entity(filled)


def _require_resolvable_entities(doc: ProvDocument, registry: RegistryClient) -> None:
    violations = []
    for entity in doc.entities:
        if entity.artifact_pid is None:
            continue
        try:
            registry.resolve(entity.artifact_pid)
        except UnknownPIDError:
            violations.append(
                f"entity {entity.local_id!r}: artifact PID {entity.artifact_pid!r} "
                "does not resolve"
            )
    if violations:
        raise InvalidDocumentError(violations)


def _require_committed(receipt, partial_body: dict) -> None:
    if receipt.ok:
        return
    code = _RECEIPT_EXITS.get(receipt.message, EXIT_LEDGER_REJECTED)
    raise CommandFailure(code, receipt.message, {**partial_body, "receipt": receipt.to_dict()})


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedprov",
        description="Federated provenance client",
    )
    parser.add_argument("--config", required=True, help="federation config JSON")
    parser.add_argument("--identity", help="user id (keys under the federation key dir "
                                            "or $FEDPROV_KEYDIR)")
    parser.add_argument("--json", action="store_true",
                        help="suppress stderr diagnostics; stdout JSON only")
    parser.add_argument("--version", action="version", version=f"fedprov {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("publish", help="publish an artifact with its provenance document")
    p.add_argument("file", help="artifact file to publish")
    p.add_argument("document", help="provenance document (JSON)")
    p.add_argument("--entity", default=None,
                   help="local id of the entity standing for the published file")

    p = sub.add_parser("update-prov", help="atomically update a provenance record")
    p.add_argument("pid", help="PID of the newest provenance record version")
    p.add_argument("document", help="revised provenance document (JSON)")
    p.add_argument("--grant", help="signed permission grant (JSON)", default=None)

    p = sub.add_parser("verify", help="verify content integrity against the ledger")
    p.add_argument("pid")

    p = sub.add_parser("invalidate", help="invalidate an artifact")
    p.add_argument("pid")
    p.add_argument("--reason", default="")
    p.add_argument("--cascade", action="store_true",
                   help="flag all derived artifacts as affected and notify owners")
    p.add_argument("--grant", default=None)

    p = sub.add_parser("trace", help="print lineage paths for an artifact")
    p.add_argument("pid")
    p.add_argument("--dot", action="store_true",
                   help="include the whole derivation graph in DOT form")

    p = sub.add_parser("federation", help="federation lifecycle operations")
    p.add_argument("action", choices=["init", "start-node", "verify-chain", "status"])
    p.add_argument("--org", help="organization (start-node)")

    return parser


def run(argv: list[str]) -> tuple[int, dict]:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "federation":
            if args.action == "init":
                return EXIT_OK, federation_init(args.config)
            if args.action == "status":
                return EXIT_OK, federation_status(args.config)
            if args.action == "verify-chain":
                return EXIT_OK, federation_verify_chain(args.config)
            if args.action == "start-node":
                if not args.org:
                    raise ConfigError("start-node needs --org")
                return EXIT_OK, federation_start_node(args.config, args.org)

        ctx = ClientContext.build(args.config, args.identity)
        if args.command == "publish":
            return EXIT_OK, publish_artifact(ctx, args.file, args.document, args.entity)
        if args.command == "update-prov":
            return EXIT_OK, update_provenance(ctx, args.pid, args.document, args.grant)
        if args.command == "verify":
            return EXIT_OK, verify_pid(ctx, args.pid)
        if args.command == "invalidate":
            return EXIT_OK, invalidate_artifact(
                ctx, args.pid, args.reason, args.cascade, args.grant
            )
        if args.command == "trace":
            return EXIT_OK, trace_artifact(ctx, args.pid, args.dot)
        raise ConfigError(f"unknown command {args.command!r}")
    except CommandFailure as exc:
        return exc.code, {**exc.body, "error": str(exc)}
    except Exception as exc:  # mapped to the documented exit codes
        return exit_code_for(exc), {"error": str(exc), "error_type": type(exc).__name__}


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    code, body = run(argv)
    print(json.dumps(body, indent=2, sort_keys=True))
    if code != EXIT_OK and not _json_flag(argv):
        print(f"fedprov: exit {code}: {body.get('error', '')}", file=sys.stderr)
    return code


def _json_flag(argv: list[str]) -> bool:
    return "--json" in argv


if __name__ == "__main__":
    sys.exit(main())
