"""Federated provenance tracking on a permissioned, hash-chained ledger.

The package wires together five cooperating subsystems:

* ``identity``     -- per-federation PKI: organizations, user identities,
  signed permission grants, and the authorization predicate used by the
  ledger.
* ``ledger``       -- an append-only, hash-chained ledger replicated across
  organization nodes with an endorse/order/commit pipeline.
* ``pid_registry`` -- a handle-style persistent identifier service with
  linear version chains.
* ``prov_store``   -- immutable, content-addressed storage of provenance
  documents plus the update classifier and the atomic update coordinator.
* ``lineage``      -- the cross-experiment derivation graph: lineage traces,
  invalidation cascades, and iteration histories.

``cli`` exposes the whole system as the ``fedprov`` command; ``scenarios``
contains executable end-to-end walkthroughs that double as integration
fixtures.
"""

__version__ = "0.1.0"
