"""Federation harness: build and run a whole federation in one process.

Used by the test suite and the scenario scripts. ``use_tcp=True`` serves
every node and the registry on loopback sockets and wires all components
through real framed messages; the default direct mode short-circuits the
transport layer for speed while exercising the identical service handlers.
"""

from __future__ import annotations

import socket
from dataclasses import dataclass, field
from pathlib import Path

from . import identity as identity_mod
from .federation import FederationConfig, OrgEntry, init_federation, load_node_credentials
from .ledger.client import LedgerClient
from .ledger.node import OrgNode
from .ledger.ordering import OrderingService
from .ledger.policy import POLICY_ANY_ONE
from .pid_registry import PIDRegistry
from .prov_store import ProvStore
from .services import NodeService, RegistryClient, RegistryService, serve_node, serve_registry
from .transport import DirectTransport, TcpTransport
from .updates import AtomicUpdater

DEFAULT_ORGS = (("OrgA", "producer"), ("OrgB", "producer"), ("Readers", "consumer-read-only"))


def free_port() -> int:
    return free_ports(1)[0]


def free_ports(count: int) -> list[int]:
    """Distinct free loopback ports (all bound at once to avoid duplicates)."""
    sockets = []
    try:
        for _ in range(count):
            sock = socket.socket()
            sock.bind(("127.0.0.1", 0))
            sockets.append(sock)
        return [sock.getsockname()[1] for sock in sockets]
    finally:
        for sock in sockets:
            sock.close()


@dataclass
class Federation:
    config: FederationConfig
    config_path: Path
    registration: identity_mod.RegistrationService
    nodes: dict[str, OrgNode]
    services: dict[str, NodeService]
    orderer: OrderingService | None
    registry: PIDRegistry
    registry_service: RegistryService
    store: ProvStore
    use_tcp: bool
    servers: list = field(default_factory=list)

    # -- construction -----------------------------------------------------------

    @classmethod
    def bootstrap(
        cls,
        root: Path,
        orgs: tuple[tuple[str, str], ...] = DEFAULT_ORGS,
        endorsement_policy: str = POLICY_ANY_ONE,
        use_tcp: bool = False,
        max_block_txs: int = 10,
        block_timeout_ms: int = 25,
        pid_prefix: str = "21.P",
    ) -> "Federation":
        root = Path(root)
        root.mkdir(parents=True, exist_ok=True)
        ports = free_ports(len(orgs) + 1)
        entries = [
            OrgEntry(name=name, kind=kind, listen_address=f"127.0.0.1:{port}")
            for (name, kind), port in zip(orgs, ports)
        ]
        skeleton = FederationConfig(
            organizations=entries,
            endorsement_policy=endorsement_policy,
            pid_prefix=pid_prefix,
            registry_address=f"127.0.0.1:{ports[-1]}",
            prov_store_root="store",
            max_block_txs=max_block_txs,
            block_timeout_ms=block_timeout_ms,
            base_dir=root,
        )
        config_path = root / "federation.json"
        skeleton.save(config_path)
        init_federation(config_path)
        return cls.start(config_path, use_tcp=use_tcp)

    @classmethod
    def start(cls, config_path: Path, use_tcp: bool = False) -> "Federation":
        """Bring up all components of an initialized federation."""
        config = FederationConfig.load(config_path)
        orgs_map = config.orgs_map()
        registration = identity_mod.RegistrationService.load(
            orgs_map.values(),
            ca_dir=config.ca_dir,
            identities_dir=config.identities_dir,
            keys_dir=config.keys_dir,
        )
        nodes: dict[str, OrgNode] = {}
        services: dict[str, NodeService] = {}
        for org in config.organizations:
            node_identity, node_key = load_node_credentials(config, org.name)
            node = OrgNode(
                org_name=org.name,
                node_identity=node_identity,
                node_private_key=node_key,
                orgs=orgs_map,
                endorsement_policy=config.endorsement_policy,
                ledger_path=config.ledger_path(org.name),
            )
            nodes[org.name] = node
            services[org.name] = NodeService(node)

        registry = PIDRegistry(config.registry_root, config.pid_prefix)
        registry_service = RegistryService(registry, orgs_map)
        store = ProvStore(config.store_root)

        federation = cls(
            config=config,
            config_path=Path(config_path),
            registration=registration,
            nodes=nodes,
            services=services,
            orderer=None,  # set below once peer transports exist
            registry=registry,
            registry_service=registry_service,
            store=store,
            use_tcp=use_tcp,
        )

        if use_tcp:
            for org in config.organizations:
                federation.servers.append(
                    serve_node(services[org.name], org.listen_address)
                )
            federation.servers.append(
                serve_registry(registry_service, config.registry_address)
            )

        orderer_org = config.orderer_org().name
        orderer_node = nodes[orderer_org]
        federation.orderer = OrderingService(
            peers=federation.peer_transports(),
            tip_height=orderer_node.height(),
            tip_hash=orderer_node.tip_hash(),
            max_block_txs=config.max_block_txs,
            block_timeout_ms=config.block_timeout_ms,
            max_clock_skew_ms=config.max_clock_skew_ms,
        )
        services[orderer_org].orderer = federation.orderer
        return federation

    def stop(self) -> None:
        if self.orderer is not None:
            self.orderer.close()
        for server in self.servers:
            server.stop()
        self.servers.clear()

    # -- transports --------------------------------------------------------------

    def peer_transports(self) -> dict[str, object]:
        if self.use_tcp:
            return {
                org.name: TcpTransport(org.listen_address)
                for org in self.config.organizations
            }
        return {
            name: DirectTransport(service.handle) for name, service in self.services.items()
        }

    def orderer_transport(self):
        orderer_org = self.config.orderer_org()
        if self.use_tcp:
            return TcpTransport(orderer_org.listen_address)
        return DirectTransport(self.services[orderer_org.name].handle)

    def registry_transport(self):
        if self.use_tcp:
            return TcpTransport(self.config.registry_address)
        return DirectTransport(self.registry_service.handle)

    # -- participants ---------------------------------------------------------------

    def register_user(self, org: str, user_id: str, role: str | None = None):
        return self.registration.register_user(org, user_id, role)

    def ledger_client(self, identity: identity_mod.Identity, private_key: str) -> LedgerClient:
        return LedgerClient(
            identity=identity,
            private_key=private_key,
            peer_transports=self.peer_transports(),
            orderer_transport=self.orderer_transport(),
            orgs=self.config.orgs_map(),
            endorsement_policy=self.config.endorsement_policy,
        )

    def registry_client(
        self,
        identity: identity_mod.Identity | None = None,
        private_key: str | None = None,
    ) -> RegistryClient:
        return RegistryClient(self.registry_transport(), identity, private_key)

    def updater(self, identity: identity_mod.Identity, private_key: str) -> AtomicUpdater:
        return AtomicUpdater(
            store=self.store,
            registry=self.registry_client(identity, private_key),
            ledger=self.ledger_client(identity, private_key),
            journal_path=self.config.base_dir / "journal" / "updates.jsonl",
        )

    # -- whole-system inspection -------------------------------------------------------

    def state_digests(self) -> dict[str, str]:
        return {name: node.state_digest() for name, node in self.nodes.items()}

    def system_digest(self) -> str:
        """Digest over ledger, registry, and store state (journal/outbox excluded)."""
        from .canonical import digest

        return digest(
            {
                "ledger": self.nodes[self.config.orderer_org().name].state_dump(),
                "registry": self.registry.state_digest(),
                "store": self.store.state_digest(),
            }
        )

    def identity_directory(self) -> dict[str, identity_mod.Identity]:
        return identity_mod.load_identity_directory(
            self.config.identities_dir, self.config.orgs_map()
        )
