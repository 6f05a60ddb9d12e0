"""Micro-protocol library: the five atomic primitives and their physics.

GEN, SYN and the local quantum operations (QP) are synchronous computations;
SIG and FW schedule deliveries on whatever network object is passed in (the
simulator run implements that interface). Timing is deliberately coarse: one
generation attempt, one sync refresh and one retry backoff all cost a link's
sync period.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Any, Protocol

from .core import Address, EntanglementResource, QuantumPacket, transfer_authority
from .errors import Expired, NoClassicalRoute, NotNeighbor, ResourceMissing
from .fidelity import purify_fidelity, swap_fidelity
from .state import fidelity_at

MP_GEN = "GEN"
MP_QP = "QP"
MP_SYN = "SYN"
MP_SIG = "SIG"
MP_FW = "FW"
ALL_MPS = frozenset({MP_GEN, MP_QP, MP_SYN, MP_SIG, MP_FW})


def link_key(a: Address, b: Address) -> tuple[Address, Address]:
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class LinkConfig:
    """Per-link physics and timing parameters from the scenario."""

    a: Address
    b: Address
    p_gen: float = 1.0
    f_gen: float = 1.0
    tau_budget: float = 1.0
    t_coh: float = float("inf")
    sync_delay: float = 0.001
    latency: float = 0.001  # packet transfer time across the link

    @property
    def key(self) -> tuple[Address, Address]:
        return link_key(self.a, self.b)


@dataclass(frozen=True)
class MpResult:
    success: bool
    produced: EntanglementResource | None = None
    side_data: Any = None
    elapsed: float = 0.0


class Network(Protocol):
    """What SIG and FW need from the surrounding simulation."""

    def classical_latency(self, src: Address, dst: Address) -> float | None: ...

    def schedule_signal(self, src: Address, dst: Address, payload: dict, at: float) -> None: ...

    def is_quantum_neighbor(self, a: Address, b: Address) -> bool: ...

    def schedule_packet(self, src: Address, dst: Address, packet: QuantumPacket, at: float) -> None: ...


def invoke_syn(link: LinkConfig) -> MpResult:
    """Refresh the link's time/phase reference; a pure delay in this model."""
    return MpResult(success=True, elapsed=link.sync_delay)


def invoke_gen(
    link: LinkConfig, rng: random.Random, now: float, ent_id: str
) -> MpResult:
    """One link-level generation attempt; failure is a normal result."""
    elapsed = link.sync_delay
    if rng.random() >= link.p_gen:
        return MpResult(success=False, elapsed=elapsed)
    born = now + elapsed
    resource = EntanglementResource(
        ent_id=ent_id,
        endpoints=frozenset(link.key),
        fidelity=link.f_gen,
        created_at=born,
        expires_at=born + link.tau_budget,
        t_coh=link.t_coh,
    )
    return MpResult(success=True, produced=resource, elapsed=elapsed)


def qp_purify(
    kept: EntanglementResource,
    sacrificed: EntanglementResource,
    rng: random.Random,
    now: float,
    ent_id: str,
) -> MpResult:
    """Consume two same-link pairs; probabilistically yield one better pair."""
    if kept.endpoints != sacrificed.endpoints:
        raise ResourceMissing("purification inputs must share the same link")
    for r in (kept, sacrificed):
        if r.expired(now):
            raise Expired(r.ent_id)
    f_out, p_succ = purify_fidelity(fidelity_at(kept, now), fidelity_at(sacrificed, now))
    if rng.random() >= p_succ:
        return MpResult(success=False)
    survivor = EntanglementResource(
        ent_id=ent_id,
        endpoints=kept.endpoints,
        fidelity=f_out,
        created_at=now,
        expires_at=min(kept.expires_at, sacrificed.expires_at),
        t_coh=min(kept.t_coh, sacrificed.t_coh),
    )
    return MpResult(success=True, produced=survivor)


def qp_swap_bsm(
    left: EntanglementResource,
    right: EntanglementResource,
    middle: Address,
    rng: random.Random,
    now: float,
    ent_id: str,
) -> MpResult:
    """Bell-state measurement at the middle node, stitching two pairs into one.

    Consumes both inputs, emits two uniform outcome bits, and produces the
    end-to-end pair with the ideal-BSM fidelity and the tighter deadline of
    the two inputs.
    """
    for r in (left, right):
        if middle not in r.endpoints:
            raise ResourceMissing(f"{r.ent_id} is not incident at {middle}")
        if r.expired(now):
            raise Expired(r.ent_id)
    far_left = left.peer_of(middle)
    far_right = right.peer_of(middle)
    if far_left == far_right:
        raise ResourceMissing("swap inputs must reach two distinct far ends")
    bits = (rng.randrange(2), rng.randrange(2))
    produced = EntanglementResource(
        ent_id=ent_id,
        endpoints=frozenset((far_left, far_right)),
        fidelity=swap_fidelity(fidelity_at(left, now), fidelity_at(right, now)),
        created_at=now,
        expires_at=min(left.expires_at, right.expires_at),
        t_coh=min(left.t_coh, right.t_coh),
    )
    return MpResult(success=True, produced=produced, side_data=bits)


def qp_pauli(bits: tuple[int, int]) -> MpResult:
    """Apply the correction indexed by two classical bits; always succeeds."""
    assert all(b in (0, 1) for b in bits)
    return MpResult(success=True, side_data=bits)


def qp_bsm_source(rng: random.Random) -> MpResult:
    """Teleport-side measurement on the input qubit and the local ebit half."""
    bits = (rng.randrange(2), rng.randrange(2))
    return MpResult(success=True, side_data=bits)


def invoke_qp(
    sub_op: str,
    inputs: tuple[EntanglementResource, ...] = (),
    **kwargs,
) -> MpResult:
    """Dispatch a local quantum operation by name.

    purify and swap_bsm take two input pairs plus (rng, now, ent_id) and,
    for swap_bsm, the middle node; pauli takes bits; bsm takes rng.
    """
    if sub_op == "purify":
        if len(inputs) != 2:
            raise ResourceMissing(f"purification needs two pairs, got {len(inputs)}")
        return qp_purify(inputs[0], inputs[1], **kwargs)
    if sub_op == "swap_bsm":
        if len(inputs) != 2:
            raise ResourceMissing(f"swapping needs two pairs, got {len(inputs)}")
        return qp_swap_bsm(inputs[0], inputs[1], **kwargs)
    if sub_op == "pauli":
        return qp_pauli(**kwargs)
    if sub_op == "bsm":
        return qp_bsm_source(**kwargs)
    raise ResourceMissing(f"unknown quantum sub-operation {sub_op!r}")


def invoke_sig(
    net: Network, src: Address, dst: Address, payload: dict, now: float
) -> float:
    """Deliver classical side information; returns the delivery time."""
    latency = net.classical_latency(src, dst)
    if latency is None:
        raise NoClassicalRoute(f"no classical route {src} -> {dst}")
    at = now + latency
    net.schedule_signal(src, dst, payload, at)
    return at


def invoke_fw(
    net: Network,
    sender: Address,
    next_hop: Address,
    packet: QuantumPacket,
    link: LinkConfig,
    now: float,
) -> tuple[QuantumPacket, float]:
    """Hand the packet to a direct neighbor; authority moves at send time."""
    if not net.is_quantum_neighbor(sender, next_hop):
        raise NotNeighbor(f"{next_hop} is not a quantum neighbor of {sender}")
    header = transfer_authority(packet.header, sender, next_hop)
    sent = QuantumPacket(header=header, payload=packet.payload)
    at = now + link.latency
    net.schedule_packet(sender, next_hop, sent, at)
    return sent, at
