"""Endorsement policies: which organizations' endorsements suffice.

The read-only organization never counts toward any rule.
"""

from __future__ import annotations

from typing import Iterable, Mapping

from .. import identity as identity_mod

POLICY_ANY_ONE = "any-one-producer-org"
POLICY_MAJORITY = "majority-producer-orgs"
POLICY_ALL = "all-producer-orgs"
POLICIES = (POLICY_ANY_ONE, POLICY_MAJORITY, POLICY_ALL)


def producer_org_names(orgs: Mapping[str, identity_mod.Organization]) -> set[str]:
    return {
        name for name, org in orgs.items() if org.kind == identity_mod.ORG_PRODUCER
    }


def policy_satisfied(
    endorsing_orgs: Iterable[str],
    orgs: Mapping[str, identity_mod.Organization],
    policy: str,
) -> bool:
    producers = producer_org_names(orgs)
    endorsing_producers = set(endorsing_orgs) & producers
    if policy == POLICY_ANY_ONE:
        return len(endorsing_producers) >= 1
    if policy == POLICY_MAJORITY:
        return len(endorsing_producers) * 2 > len(producers)
    if policy == POLICY_ALL:
        return endorsing_producers == producers and len(producers) > 0
    raise ValueError(f"unknown endorsement policy: {policy!r}")
