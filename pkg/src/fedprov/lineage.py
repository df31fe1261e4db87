"""Cross-experiment derivation graph: lineage traces, invalidation cascades,
and iteration histories.

The graph is rebuilt on demand from checksum-verified provenance documents
plus the ledger's current view; an edge always points from the producing
artifact to the consuming artifact, so an invalidation cascade is exactly
forward reachability. Every edge remembers which document (PID, version,
URI, checksum) attests it, which lets traces re-verify their own evidence.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping

from . import clock
from .errors import CycleError, NotInvalidatedError, UnknownPIDError
from .ledger.values import STATUS_INVALIDATED, STATUS_VALID
from .prov import REL_DERIVED, REL_GENERATED, REL_USED, ProvDocument
from .prov_store import ProvStore, relation_pairs


@dataclass(frozen=True)
class DocumentSource:
    """A provenance document as recorded on the ledger."""

    doc_pid: str
    version: int
    uri: str
    checksum: str
    document: ProvDocument


@dataclass(frozen=True)
class EdgeAttestation:
    doc_pid: str
    doc_version: int
    uri: str
    checksum: str
    activity: str | None  # local id; None for a direct derived-from edge

    def to_dict(self) -> dict:
        return {
            "doc_pid": self.doc_pid,
            "doc_version": self.doc_version,
            "uri": self.uri,
            "checksum": self.checksum,
            "activity": self.activity,
        }


@dataclass
class DerivationGraph:
    nodes: dict[str, str] = field(default_factory=dict)  # artifact pid -> status
    edges: dict[tuple[str, str], list[EdgeAttestation]] = field(default_factory=dict)
    generators: dict[str, EdgeAttestation] = field(default_factory=dict)

    def add_node(self, pid: str, status: str = STATUS_VALID) -> None:
        self.nodes.setdefault(pid, status)

    def add_edge(self, src: str, dst: str, attestation: EdgeAttestation) -> None:
        existing = self.edges.setdefault((src, dst), [])
        if attestation not in existing:
            existing.append(attestation)

    def successors(self, pid: str) -> list[str]:
        return sorted({dst for (src, dst) in self.edges if src == pid})

    def predecessors(self, pid: str) -> list[str]:
        return sorted({src for (src, dst) in self.edges if dst == pid})

    def descendants(self, pid: str) -> set[str]:
        """All artifacts transitively derived from *pid* (excluding itself)."""
        seen: set[str] = set()
        queue = deque([pid])
        while queue:
            current = queue.popleft()
            for nxt in self.successors(current):
                if nxt not in seen:
                    seen.add(nxt)
                    queue.append(nxt)
        seen.discard(pid)
        return seen

    def attestation(self, src: str, dst: str) -> EdgeAttestation:
        return self.edges[(src, dst)][0]

    def to_dot(self) -> str:
        lines = ["digraph provenance {"]
        for pid in sorted(self.nodes):
            status = self.nodes[pid]
            lines.append(f'  "{pid}" [label="{pid}\\n{status}"];')
        for src, dst in sorted(self.edges):
            lines.append(f'  "{src}" -> "{dst}";')
        lines.append("}")
        return "\n".join(lines)


def collect_documents(
    ledger_view: Mapping[str, Mapping], store: ProvStore
) -> list[DocumentSource]:
    """Fetch and checksum-verify every provenance document on the ledger."""
    sources = []
    for pid, value in sorted(ledger_view.items()):
        if value.get("kind") != "provenance-record":
            continue
        document = store.fetch_document(value["uri"], value["checksum"])
        sources.append(
            DocumentSource(
                doc_pid=pid,
                version=int(value["version"]),
                uri=value["uri"],
                checksum=value["checksum"],
                document=document,
            )
        )
    return sources


def build_graph(
    documents: Iterable[DocumentSource], ledger_view: Mapping[str, Mapping]
) -> DerivationGraph:
    """Assemble the artifact derivation graph.

    ``used(activity, e_in)`` plus ``was-generated-by(e_out, activity)`` yields
    an edge e_in -> e_out; ``was-derived-from(new, old)`` yields old -> new.
    Node statuses come from the ledger's invalidation flags. Rejects graphs
    with cycles and documents referencing unregistered artifact PIDs.
    """
    graph = DerivationGraph()
    artifact_values = {
        pid: value for pid, value in ledger_view.items() if value.get("kind") == "artifact"
    }
    for pid, value in artifact_values.items():
        graph.add_node(pid, value.get("status", STATUS_VALID))

    for source in documents:
        pid_of: dict[str, str] = {}
        for entity in source.document.entities:
            if entity.artifact_pid is None:
                continue
            if entity.artifact_pid not in artifact_values:
                raise UnknownPIDError(
                    f"document {source.doc_pid} references unregistered artifact "
                    f"{entity.artifact_pid!r}"
                )
            pid_of[entity.local_id] = entity.artifact_pid

        for used_id, activity, generated_id in relation_pairs(source.document):
            src = pid_of.get(used_id)
            dst = pid_of.get(generated_id)
            if src is None or dst is None:
                continue
            attestation = EdgeAttestation(
                doc_pid=source.doc_pid,
                doc_version=source.version,
                uri=source.uri,
                checksum=source.checksum,
                activity=activity,
            )
            graph.add_edge(src, dst, attestation)

        for relation in source.document.relations:
            if relation.kind != REL_DERIVED:
                continue
            new_pid = pid_of.get(relation.source)
            old_pid = pid_of.get(relation.target)
            if new_pid is None or old_pid is None:
                continue
            attestation = EdgeAttestation(
                doc_pid=source.doc_pid,
                doc_version=source.version,
                uri=source.uri,
                checksum=source.checksum,
                activity=None,
            )
            graph.add_edge(old_pid, new_pid, attestation)

        for relation in source.document.relations:
            if relation.kind != REL_GENERATED:
                continue
            pid = pid_of.get(relation.source)
            if pid is not None and pid not in graph.generators:
                graph.generators[pid] = EdgeAttestation(
                    doc_pid=source.doc_pid,
                    doc_version=source.version,
                    uri=source.uri,
                    checksum=source.checksum,
                    activity=relation.target,
                )
        for local_id, pid in pid_of.items():
            # Fallback attribution for artifacts a document mentions without
            # a generated-by relation (e.g. pure derivation chains).
            graph.generators.setdefault(
                pid,
                EdgeAttestation(
                    doc_pid=source.doc_pid,
                    doc_version=source.version,
                    uri=source.uri,
                    checksum=source.checksum,
                    activity=None,
                ),
            )

    _reject_cycles(graph)
    return graph


def _reject_cycles(graph: DerivationGraph) -> None:
    colors: dict[str, int] = {}

    def visit(node: str, stack: list[str]) -> None:
        colors[node] = 1
        stack.append(node)
        for nxt in graph.successors(node):
            state = colors.get(nxt, 0)
            if state == 1:
                cycle = stack[stack.index(nxt):] + [nxt]
                raise CycleError(f"derivation cycle: {' -> '.join(cycle)}")
            if state == 0:
                visit(nxt, stack)
        stack.pop()
        colors[node] = 2

    for node in sorted(graph.nodes):
        if colors.get(node, 0) == 0:
            visit(node, [])


# ---------------------------------------------------------------------------
# Lineage traces
# ---------------------------------------------------------------------------


@dataclass
class LineagePath:
    """Alternating artifact / attested-step sequence, query node first."""

    steps: list[dict]

    def artifact_pids(self) -> list[str]:
        return [step["artifact"] for step in self.steps if "artifact" in step]

    def to_dict(self) -> dict:
        return {"steps": self.steps}


def trace_lineage(pid: str, graph: DerivationGraph) -> list[LineagePath]:
    """Every path from *pid* back to in-degree-zero ancestor artifacts."""
    if pid not in graph.nodes:
        raise UnknownPIDError(f"artifact not in derivation graph: {pid!r}")

    paths: list[LineagePath] = []

    def walk(current: str, steps: list[dict], visited: set[str]) -> None:
        parents = graph.predecessors(current)
        if not parents:
            paths.append(LineagePath(steps=list(steps)))
            return
        for parent in parents:
            if parent in visited:
                continue
            attestation = graph.attestation(parent, current)
            hop = {
                "via": attestation.activity or "derived-from",
                "attested_by": attestation.to_dict(),
            }
            steps.append(hop)
            steps.append({"artifact": parent, "status": graph.nodes.get(parent)})
            walk(parent, steps, visited | {parent})
            steps.pop()
            steps.pop()

    walk(pid, [{"artifact": pid, "status": graph.nodes.get(pid)}], {pid})
    return paths


def verify_trace_soundness(paths: Iterable[LineagePath], store: ProvStore) -> None:
    """Re-derive every hop from its attesting document, fetched by checksum.

    Raises ``ChecksumMismatchError`` for tampered documents and
    ``UnknownPIDError`` if a fetched document does not actually attest the
    edge it is cited for; a trace is only as good as its evidence.
    """
    for path in paths:
        steps = path.steps
        for index in range(1, len(steps) - 1, 2):
            hop = steps[index]
            attestation = hop.get("attested_by")
            if attestation is None:
                continue
            child = steps[index - 1]["artifact"]
            parent = steps[index + 1]["artifact"]
            document = store.fetch_document(attestation["uri"], attestation["checksum"])
            if not _document_attests_edge(document, parent, child, attestation["activity"]):
                raise UnknownPIDError(
                    f"document {attestation['doc_pid']} does not attest "
                    f"{parent} -> {child}"
                )


def _document_attests_edge(
    document: ProvDocument, parent_pid: str, child_pid: str, activity: str | None
) -> bool:
    pid_of = {
        e.local_id: e.artifact_pid for e in document.entities if e.artifact_pid
    }
    if activity is None:
        return any(
            r.kind == REL_DERIVED
            and pid_of.get(r.source) == child_pid
            and pid_of.get(r.target) == parent_pid
            for r in document.relations
        )
    used_ok = any(
        r.kind == REL_USED and r.source == activity and pid_of.get(r.target) == parent_pid
        for r in document.relations
    )
    generated_ok = any(
        r.kind == REL_GENERATED and r.target == activity and pid_of.get(r.source) == child_pid
        for r in document.relations
    )
    return used_ok and generated_ok


# ---------------------------------------------------------------------------
# Invalidation cascade
# ---------------------------------------------------------------------------

POLICY_FLAG = "flag-affected"
POLICY_FLAG_AND_NOTIFY = "flag-and-notify"


def cascade_targets(pid: str, graph: DerivationGraph) -> set[str]:
    """Pure reachability: artifacts derived (transitively) from *pid*."""
    if pid not in graph.nodes:
        raise UnknownPIDError(f"artifact not in derivation graph: {pid!r}")
    return graph.descendants(pid)


def invalidate_cascade(
    pid: str,
    graph: DerivationGraph,
    policy: str,
    *,
    ledger,
    outbox_dir: Path | None = None,
    owner_org: Callable[[str], str] | None = None,
    timestamp: str | None = None,
) -> list[tuple[str, str]]:
    """Flag every artifact derived from an invalidated *pid* as affected.

    The source must already be invalidated on the ledger (the cascade never
    invalidates anything itself -- only owners do that). Status flags are
    committed as ledger transactions so consumers querying only the ledger
    see them; under flag-and-notify, one notification per affected owner is
    appended to that owner organization's outbox.
    """
    if policy not in (POLICY_FLAG, POLICY_FLAG_AND_NOTIFY):
        raise ValueError(f"unknown cascade policy: {policy!r}")
    current = ledger.hlf_read(pid)
    if current is None:
        raise UnknownPIDError(f"not on ledger: {pid!r}")
    if current.status != STATUS_INVALIDATED:
        raise NotInvalidatedError(f"{pid} is still {current.status} on the ledger")

    flagged: list[tuple[str, str]] = []
    notifications: list[dict] = []
    for target in sorted(cascade_targets(pid, graph)):
        value = ledger.hlf_read(target)
        if value is None or value.status == STATUS_INVALIDATED:
            continue
        receipt = ledger.flag_affected(target, pid, timestamp=timestamp)
        if not receipt.ok:
            continue
        flagged.append((target, "affected"))
        for owner in value.owners:
            notifications.append(
                {
                    "pid": target,
                    "new_status": "affected",
                    "source_pid": pid,
                    "owner": owner,
                    "timestamp": timestamp or clock.now_iso(),
                }
            )
    if policy == POLICY_FLAG_AND_NOTIFY and outbox_dir is not None:
        write_notifications(notifications, outbox_dir, owner_org)
    return flagged


def write_notifications(
    notifications: Iterable[dict],
    outbox_dir: Path,
    owner_org: Callable[[str], str] | None,
) -> None:
    outbox_dir = Path(outbox_dir)
    outbox_dir.mkdir(parents=True, exist_ok=True)
    for record in notifications:
        org = owner_org(record["owner"]) if owner_org else "unknown"
        record = {**record, "org": org}
        with open(outbox_dir / f"{org}.jsonl", "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Iteration history
# ---------------------------------------------------------------------------


@dataclass
class IterationEntry:
    artifact_pid: str
    prov_pid: str | None
    prov_version: int | None
    status: str

    def to_dict(self) -> dict:
        return {
            "artifact_pid": self.artifact_pid,
            "prov_pid": self.prov_pid,
            "prov_version": self.prov_version,
            "status": self.status,
        }


def iteration_history(pid: str, graph: DerivationGraph) -> list[IterationEntry]:
    """The derivation chain of iterations through *pid*, oldest first.

    Follows direct derived-from edges backward to the first iteration, then
    forward through successive iterations; each entry carries the provenance
    record that documents it and the artifact's current status.
    """
    if pid not in graph.nodes:
        raise UnknownPIDError(f"artifact not in derivation graph: {pid!r}")

    derived_parents: dict[str, list[str]] = {}
    derived_children: dict[str, list[str]] = {}
    for (src, dst), attestations in graph.edges.items():
        if any(a.activity is None for a in attestations):
            derived_children.setdefault(src, []).append(dst)
            derived_parents.setdefault(dst, []).append(src)

    root = pid
    seen = {pid}
    while True:
        parents = sorted(p for p in derived_parents.get(root, []) if p not in seen)
        if not parents:
            break
        root = parents[0]
        seen.add(root)

    chain = [root]
    seen = {root}
    current = root
    while True:
        children = sorted(c for c in derived_children.get(current, []) if c not in seen)
        if not children:
            break
        current = children[0]
        seen.add(current)
        chain.append(current)

    entries = []
    for artifact in chain:
        generator = graph.generators.get(artifact)
        entries.append(
            IterationEntry(
                artifact_pid=artifact,
                prov_pid=generator.doc_pid if generator else None,
                prov_version=generator.doc_version if generator else None,
                status=graph.nodes.get(artifact, STATUS_VALID),
            )
        )
    return entries
