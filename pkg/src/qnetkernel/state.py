"""Per-node internal state: forwarding tables, entanglement inventory, hints.

Each node actor owns exactly one InternalState; all mutation happens inside
the single-threaded simulation loop.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any

from .core import Address, EntanglementResource
from .errors import DuplicateEntId, Expired, ForeignResource, NotFound
from .fidelity import decayed_fidelity

HINT_PARALLEL_GEN = "allow_parallel_gen"
HINT_PRIORITY = "priority_class"
KNOWN_HINTS = frozenset({HINT_PARALLEL_GEN, HINT_PRIORITY})


@dataclass
class ClassicalForwardingTable:
    """Static next-hop map toward every reachable destination."""

    next_hop: dict[Address, Address] = field(default_factory=dict)

    def lookup(self, dst: Address) -> Address | None:
        return self.next_hop.get(dst)


@dataclass
class Hints:
    """Advisory policy knobs; removing them never changes what is legal."""

    entries: dict[str, Any] = field(default_factory=dict)

    def allow_parallel_gen(self) -> bool:
        return bool(self.entries.get(HINT_PARALLEL_GEN, False))

    def priority_class(self) -> int:
        value = self.entries.get(HINT_PRIORITY, 0)
        return int(value) if isinstance(value, (int, float)) else 0


@dataclass
class QuantumForwardingTable:
    """Entanglement inventory of one node, keyed by resource id."""

    owner: Address
    entries: dict[str, EntanglementResource] = field(default_factory=dict)


@dataclass
class InternalState:
    ftc: ClassicalForwardingTable = field(default_factory=ClassicalForwardingTable)
    ftq: QuantumForwardingTable | None = None
    hints: Hints = field(default_factory=Hints)
    lamport: int = 0

    def tick(self) -> int:
        self.lamport += 1
        return self.lamport

    def merge_clock(self, received: int) -> int:
        self.lamport = lamport_merge(self.lamport, received)
        return self.lamport


def lamport_merge(local: int, received: int) -> int:
    """Clock merge on receipt: strictly after both sender and receiver."""
    assert local >= 0 and received >= 0
    return max(local, received) + 1


def fidelity_at(resource: EntanglementResource, now: float) -> float:
    """Current fidelity under the exponential decay model."""
    return decayed_fidelity(resource.fidelity, now - resource.created_at, resource.t_coh)


def ftq_insert(ftq: QuantumForwardingTable, resource: EntanglementResource) -> None:
    if ftq.owner not in resource.endpoints:
        raise ForeignResource(
            f"{resource.ent_id} endpoints {sorted(resource.endpoints)} "
            f"do not include owner {ftq.owner}"
        )
    if resource.ent_id in ftq.entries:
        raise DuplicateEntId(resource.ent_id)
    ftq.entries[resource.ent_id] = resource


def ftq_consume(ftq: QuantumForwardingTable, ent_id: str, now: float) -> EntanglementResource:
    resource = ftq.entries.get(ent_id)
    if resource is None:
        raise NotFound(ent_id)
    if resource.expired(now):
        raise Expired(f"{ent_id} expired at {resource.expires_at} (now {now})")
    del ftq.entries[ent_id]
    return resource


def ftq_discard(ftq: QuantumForwardingTable, ent_id: str) -> None:
    """Drop an entry if present (used when a remote commit consumed it)."""
    ftq.entries.pop(ent_id, None)


def best_resource(
    ftq: QuantumForwardingTable, peer: Address, f_min: float, now: float
) -> EntanglementResource | None:
    """Best unexpired pair shared with ``peer`` at or above ``f_min``.

    Highest current fidelity wins; ties break toward the lexicographically
    smallest ent_id so the pick is deterministic.
    """
    best: EntanglementResource | None = None
    best_f = -1.0
    for ent_id in sorted(ftq.entries):
        resource = ftq.entries[ent_id]
        if peer not in resource.endpoints or resource.expired(now):
            continue
        f = fidelity_at(resource, now)
        if f < f_min:
            continue
        if f > best_f:
            best, best_f = resource, f
    return best


def decay_sweep(ftq: QuantumForwardingTable, now: float) -> None:
    """Evict expired entries and rebase survivor fidelities to ``now``.

    Rebasing is exact because exponential decay is memoryless; guards still
    re-check expiry and fidelity at use time, so correctness never depends
    on sweep granularity.
    """
    for ent_id in list(ftq.entries):
        resource = ftq.entries[ent_id]
        if resource.expired(now):
            del ftq.entries[ent_id]
            continue
        if now > resource.created_at:
            ftq.entries[ent_id] = replace(
                resource, fidelity=fidelity_at(resource, now), created_at=now
            )
