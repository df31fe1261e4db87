"""PID minting, resolution, and linear version chains."""

from __future__ import annotations

import random

import pytest
from hypothesis import given, settings, strategies as st

from fedprov import identity as identity_mod
from fedprov.errors import (
    BrokenChainError,
    KindMismatchError,
    SuccessorExistsError,
    UnauthorizedError,
    UnknownPIDError,
)
from fedprov.pid_registry import PID, PIDRegistry


@pytest.fixture()
def registry(tmp_path):
    return PIDRegistry(tmp_path / "registry", "21.P")


@pytest.fixture()
def owner(tmp_path):
    service = identity_mod.RegistrationService.create(
        [("OrgA", "producer"), ("Readers", "consumer-read-only")],
        ca_dir=tmp_path / "cas",
        identities_dir=tmp_path / "ids",
        keys_dir=tmp_path / "keys",
    )
    identity, key = service.register_user("OrgA", "alice")
    return identity


def test_first_mint_suffix(registry):
    record = registry.mint("artifact", "cas://x", "x", owner="alice")
    assert record.pid == "21.P/000001"
    assert record.version_number == 1
    assert record.predecessor is None and record.successor is None


def test_mints_are_distinct(registry):
    first = registry.mint("artifact", "cas://x", "x", owner="alice")
    second = registry.mint("artifact", "cas://y", "y", owner="alice")
    assert first.pid != second.pid


def test_mint_with_empty_uri_fillable_later(registry, owner):
    record = registry.mint("artifact", "", "", owner="alice")
    assert record.target_uri == ""
    enriched = registry.enrich(record.pid, owner, target_uri="cas://late", checksum="abc")
    assert enriched.target_uri == "cas://late"
    with pytest.raises(KindMismatchError):
        registry.enrich(record.pid, owner, target_uri="cas://other")


def test_resolve_round_trip(registry):
    record = registry.mint("artifact", "cas://x", "x", owner="alice")
    assert registry.resolve(record.pid) == record
    # Resolution stability: the resolved record answers for the queried pid.
    assert registry.resolve(record.pid).pid == record.pid


def test_resolve_malformed_pid(registry):
    with pytest.raises(UnknownPIDError):
        registry.resolve("no-slash-here")


def test_resolve_unknown_pid(registry):
    with pytest.raises(UnknownPIDError):
        registry.resolve("21.P/999999")


def test_pid_parse():
    pid = PID.parse("21.P/000001")
    assert (pid.prefix, pid.suffix) == ("21.P", "000001")
    assert str(pid) == "21.P/000001"


def test_link_builds_chain(registry, owner):
    v1 = registry.mint("provenance-record", "cas://1", "c1", owner="alice")
    v2 = registry.mint("provenance-record", "cas://2", "c2", owner="alice")
    registry.link_new_version(v1.pid, v2.pid, owner)
    assert registry.resolve(v1.pid).successor == v2.pid
    assert registry.resolve(v2.pid).predecessor == v1.pid
    assert registry.resolve(v2.pid).version_number == 2


def test_link_refuses_fork(registry, owner):
    v1 = registry.mint("provenance-record", "cas://1", "c1", owner="alice")
    v2 = registry.mint("provenance-record", "cas://2", "c2", owner="alice")
    v3 = registry.mint("provenance-record", "cas://3", "c3", owner="alice")
    registry.link_new_version(v1.pid, v2.pid, owner)
    with pytest.raises(SuccessorExistsError):
        registry.link_new_version(v1.pid, v3.pid, owner)


def test_link_refuses_artifacts(registry, owner):
    artifact = registry.mint("artifact", "cas://a", "ca", owner="alice")
    v2 = registry.mint("provenance-record", "cas://2", "c2", owner="alice")
    with pytest.raises(KindMismatchError):
        registry.link_new_version(artifact.pid, v2.pid, owner)


def test_link_requires_ownership(registry, owner, tmp_path):
    service = identity_mod.RegistrationService.create(
        [("OrgB", "producer"), ("R", "consumer-read-only")],
        ca_dir=tmp_path / "cas2", identities_dir=tmp_path / "ids2",
        keys_dir=tmp_path / "keys2",
    )
    mallory, _ = service.register_user("OrgB", "mallory")
    v1 = registry.mint("provenance-record", "cas://1", "c1", owner="alice")
    v2 = registry.mint("provenance-record", "cas://2", "c2", owner="mallory")
    with pytest.raises(UnauthorizedError):
        registry.link_new_version(v1.pid, v2.pid, mallory)


def test_version_history_from_any_member(registry, owner):
    pids = [registry.mint("provenance-record", f"cas://{i}", f"c{i}", owner="alice").pid
            for i in range(3)]
    registry.link_new_version(pids[0], pids[1], owner)
    registry.link_new_version(pids[1], pids[2], owner)
    for member in pids:
        chain = registry.version_history(member)
        assert [r.pid for r in chain] == pids
        assert [r.version_number for r in chain] == [1, 2, 3]


def test_single_version_history(registry):
    record = registry.mint("provenance-record", "cas://1", "c1", owner="alice")
    assert [r.pid for r in registry.version_history(record.pid)] == [record.pid]


def test_broken_chain_detected(registry, owner):
    v1 = registry.mint("provenance-record", "cas://1", "c1", owner="alice")
    v2 = registry.mint("provenance-record", "cas://2", "c2", owner="alice")
    v3 = registry.mint("provenance-record", "cas://3", "c3", owner="alice")
    registry.link_new_version(v1.pid, v2.pid, owner)
    registry.link_new_version(v2.pid, v3.pid, owner)
    # Delete the middle record file to simulate registry corruption.
    registry._record_path(PID.parse(v2.pid).suffix).unlink()
    with pytest.raises(BrokenChainError):
        registry.version_history(v1.pid)
    with pytest.raises(BrokenChainError):
        registry.version_history(v3.pid)


def test_registry_reopen_preserves_counter(tmp_path, owner):
    registry = PIDRegistry(tmp_path / "registry", "21.P")
    registry.mint("artifact", "cas://1", "c1", owner="alice")
    reopened = PIDRegistry(tmp_path / "registry", "21.P")
    record = reopened.mint("artifact", "cas://2", "c2", owner="alice")
    assert record.pid == "21.P/000002"


def test_rollback_link_restores_state(registry, owner):
    v1 = registry.mint("provenance-record", "cas://1", "c1", owner="alice")
    before = registry.state_digest()
    v2 = registry.mint("provenance-record", "cas://2", "c2", owner="alice")
    registry.link_new_version(v1.pid, v2.pid, owner)
    registry.rollback_link(v1.pid, v2.pid)
    assert registry.state_digest() == before
    assert registry.resolve(v1.pid).successor is None


@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=15, deadline=None)
def test_chains_stay_linear(seed, tmp_path_factory):
    """Random mint/link sequences never produce forks or divergent histories."""
    rng = random.Random(seed)
    root = tmp_path_factory.mktemp("linear")
    registry = PIDRegistry(root / "registry", "21.P")
    heads: list[str] = []
    members: list[list[str]] = []
    for _ in range(rng.randint(3, 12)):
        if heads and rng.random() < 0.6:
            index = rng.randrange(len(heads))
            new = registry.mint("provenance-record", "cas://n", "cn", owner="alice")
            try:
                registry.link_new_version(heads[index], new.pid, _OWNER_STUB)
            except SuccessorExistsError:
                continue
            heads[index] = new.pid
            members[index].append(new.pid)
        else:
            record = registry.mint("provenance-record", "cas://r", "cr", owner="alice")
            heads.append(record.pid)
            members.append([record.pid])
    for chain_members in members:
        histories = [
            [r.pid for r in registry.version_history(member)]
            for member in chain_members
        ]
        assert all(h == histories[0] for h in histories)
        versions = [r.version_number for r in registry.version_history(chain_members[0])]
        assert versions == list(range(1, len(versions) + 1))


_OWNER_STUB = identity_mod.Identity(
    user_id="alice", org="OrgA", public_key="", certificate=""
)
