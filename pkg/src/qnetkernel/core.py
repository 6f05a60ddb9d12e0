"""Packet-level data model: intents, stamps, meta-headers, resources.

Everything here is an immutable value type. Mutation is expressed by
returning a new object, which makes the append-only and single-writer
disciplines checkable as data rather than by convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Mapping

from .errors import InvalidIntent, NonMonotone, NotHolder

# Quantum addresses are opaque, non-empty strings compared exactly.
Address = str

OUTCOME_OK = "ok"
OUTCOME_FAIL = "fail"


class ActionKind(str, Enum):
    """Vocabulary of plannable actions.

    SYN/GEN/PURIFY are the fine-grained link-preparation steps; they are
    fused into a single LINK_PR commit by the executor and never stamp on
    their own. ACT_HOLD and BSM_A are node-local soft state and never
    stamp either.
    """

    SYN = "SYN"
    GEN = "GEN"
    PURIFY = "PURIFY"
    LINK_PR = "LINK_PR"
    SWAP = "SWAP"
    ACT_FORWARD = "ACT_FORWARD"
    ACT_DELIVER = "ACT_DELIVER"
    ACT_DROP = "ACT_DROP"
    ACT_HOLD = "ACT_HOLD"
    BSM_A = "BSM_A"
    CONSUME_TP = "CONSUME_TP"


TERMINAL_KINDS = frozenset(
    {ActionKind.ACT_FORWARD, ActionKind.ACT_DELIVER, ActionKind.ACT_DROP}
)
LOCAL_ONLY_KINDS = frozenset({ActionKind.ACT_HOLD, ActionKind.BSM_A})
SERVICE_TELEPORT = "TELEPORT"

# Keys an intent must not smuggle in through its policy map: the request
# stays declarative, with no route, schedule or procedure content.
_FORBIDDEN_POLICY_KEYS = frozenset({"route", "schedule", "procedure", "next_hop", "path"})


@dataclass(frozen=True)
class ServiceIntent:
    """Declarative service request carried unmodified end to end."""

    service: str
    participants: tuple[Address, ...]
    f_min: float
    tau_min: float
    policy: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if len(self.participants) < 2:
            raise InvalidIntent("intent needs at least two participants")
        if len(set(self.participants)) != len(self.participants):
            raise InvalidIntent("participants must be distinct")
        if any(not p for p in self.participants):
            raise InvalidIntent("participant addresses must be non-empty")
        if not (0.25 <= self.f_min <= 1.0):
            raise InvalidIntent(f"f_min {self.f_min} outside [0.25, 1]")
        if self.tau_min < 0.0:
            raise InvalidIntent("tau_min must be >= 0")
        bad = _FORBIDDEN_POLICY_KEYS.intersection(self.policy)
        if bad:
            raise InvalidIntent(f"policy may not carry mechanism keys: {sorted(bad)}")

    @property
    def src(self) -> Address:
        return self.participants[0]

    @property
    def dst(self) -> Address:
        return self.participants[-1]

    def to_json(self) -> dict[str, Any]:
        return {
            "service": self.service,
            "participants": list(self.participants),
            "f_min": self.f_min,
            "tau_min": self.tau_min,
            "policy": dict(self.policy),
        }

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "ServiceIntent":
        return cls(
            service=obj["service"],
            participants=tuple(obj["participants"]),
            f_min=obj["f_min"],
            tau_min=obj["tau_min"],
            policy=dict(obj.get("policy", {})),
        )


@dataclass(frozen=True)
class EntanglementResource:
    """One shared ebit pair: who holds it, how good it is, how long it lives.

    ``fidelity`` is the value at ``created_at``; the current value follows
    the decay model and is computed on demand (see state.fidelity_at).
    """

    ent_id: str
    endpoints: frozenset[Address]
    fidelity: float
    created_at: float
    expires_at: float
    t_coh: float = float("inf")

    def __post_init__(self) -> None:
        assert len(self.endpoints) == 2, "a pair has exactly two endpoints"
        assert self.expires_at >= self.created_at
        assert 0.25 <= self.fidelity <= 1.0

    def peer_of(self, node: Address) -> Address:
        (a, b) = sorted(self.endpoints)
        return b if node == a else a

    def expired(self, now: float) -> bool:
        return self.expires_at <= now


@dataclass(frozen=True)
class Stamp:
    """Append-only certification that one action committed (or aborted).

    ``ts`` is a Lamport timestamp; ``ent_ids`` lists every resource the
    action consumed or produced; ``meta`` is an open key/value map (achieved
    fidelity, deadline, produced ids, commit stage, failure reason...).
    """

    action: ActionKind
    support: frozenset[Address]
    ts: int
    ent_ids: frozenset[str] = frozenset()
    outcome: str = OUTCOME_OK
    meta: Mapping[str, Any] = field(default_factory=dict)
    target: Address | None = None  # bound next hop for ACT_FORWARD

    def __post_init__(self) -> None:
        assert self.support, "stamp support must be non-empty"
        assert self.ts >= 0
        assert self.outcome in (OUTCOME_OK, OUTCOME_FAIL)

    @property
    def ok(self) -> bool:
        return self.outcome == OUTCOME_OK

    def produced_ids(self) -> frozenset[str]:
        return frozenset(self.meta.get("produced", ()))

    def consumed_ids(self) -> frozenset[str]:
        return self.ent_ids - self.produced_ids()

    def to_json(self) -> dict[str, Any]:
        obj: dict[str, Any] = {
            "action": self.action.value,
            "support": sorted(self.support),
            "ts": self.ts,
            "ent_ids": sorted(self.ent_ids),
            "outcome": self.outcome,
            "meta": dict(self.meta),
        }
        if self.target is not None:
            obj["target"] = self.target
        return obj

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "Stamp":
        return cls(
            action=ActionKind(obj["action"]),
            support=frozenset(obj["support"]),
            ts=obj["ts"],
            ent_ids=frozenset(obj.get("ent_ids", ())),
            outcome=obj.get("outcome", OUTCOME_OK),
            meta=dict(obj.get("meta", {})),
            target=obj.get("target"),
        )


@dataclass(frozen=True)
class MetaHeader:
    """In-band control field: the intent plus the ordered commit log.

    Exactly one node holds the header at any instant and only the holder
    may append. Stamps never get removed or edited.
    """

    intent: ServiceIntent
    stamps: tuple[Stamp, ...] = ()
    holder: Address = ""
    hid: str = ""  # run-scoped identity, stable across appends and transfers

    def last_ts(self) -> int:
        return self.stamps[-1].ts if self.stamps else -1


@dataclass(frozen=True)
class QuantumPacket:
    """A meta-header plus the ebit halves logically riding along."""

    header: MetaHeader
    payload: frozenset[str] = frozenset()


def append_stamp(header: MetaHeader, writer: Address, stamp: Stamp) -> MetaHeader:
    """Append one stamp; only the holder may write and time must advance."""
    if writer != header.holder:
        raise NotHolder(f"{writer} is not the holder ({header.holder})")
    if stamp.ts <= header.last_ts():
        raise NonMonotone(
            f"stamp ts {stamp.ts} does not exceed last ts {header.last_ts()}"
        )
    return replace(header, stamps=header.stamps + (stamp,))


def transfer_authority(header: MetaHeader, from_: Address, to: Address) -> MetaHeader:
    """Move write authority; stamps are untouched. Self-transfer is a no-op."""
    if from_ != header.holder:
        raise NotHolder(f"{from_} is not the holder ({header.holder})")
    return replace(header, holder=to)


def read_header(packet: QuantumPacket) -> tuple[ServiceIntent, tuple[Stamp, ...]]:
    """Non-perturbing read of the control field; the packet never changes."""
    return packet.header.intent, packet.header.stamps
