"""Deterministic discrete-event engine.

Events are totally ordered by (time, insertion sequence), every random draw
comes from one seeded generator, and all node state is touched only from
the single dispatch loop, so identical (config, seed) gives a byte-identical
trace.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field
from typing import Any

from .core import Address, EntanglementResource, MetaHeader, QuantumPacket, ServiceIntent
from .errors import InvalidIntent, LimitExceeded, UnknownNode, ValidationError
from .kernel import EngineParams, NodeRuntime, on_classical_signal, process_packet
from .mp import ALL_MPS, LinkConfig, link_key
from .state import (
    ClassicalForwardingTable,
    Hints,
    InternalState,
    QuantumForwardingTable,
    decay_sweep,
    ftq_insert,
    lamport_merge,  # noqa: F401  (re-exported engine op)
)

EV_PACKET = "packet_delivery"
EV_SIGNAL = "signal_delivery"
EV_TIMER = "timer"
EV_SWEEP = "decay_sweep"


@dataclass
class Topology:
    nodes: tuple[Address, ...]
    quantum_links: dict[tuple[Address, Address], LinkConfig]
    classical_links: dict[tuple[Address, Address], float]

    def __post_init__(self) -> None:
        known = set(self.nodes)
        for (a, b) in list(self.quantum_links) + list(self.classical_links):
            if a == b:
                raise ValidationError(f"self-link {a}-{b}")
            if a not in known or b not in known:
                raise ValidationError(f"link {a}-{b} references unknown node")

    def classical_neighbors(self, node: Address) -> list[Address]:
        out = []
        for (a, b) in self.classical_links:
            if a == node:
                out.append(b)
            elif b == node:
                out.append(a)
        return sorted(out)


def compute_ftc(topology: Topology) -> dict[Address, ClassicalForwardingTable]:
    """Static next-hop tables: BFS hop count, lexicographic tie-break."""
    tables: dict[Address, ClassicalForwardingTable] = {}
    for src in topology.nodes:
        next_hop: dict[Address, Address] = {}
        parent: dict[Address, Address] = {src: src}
        frontier = [src]
        while frontier:
            nxt: list[Address] = []
            for node in frontier:
                for nb in topology.classical_neighbors(node):
                    if nb not in parent:
                        parent[nb] = node
                        nxt.append(nb)
            frontier = sorted(nxt)
        for dst in topology.nodes:
            if dst == src or dst not in parent:
                continue
            hop = dst
            while parent[hop] != src:
                hop = parent[hop]
            next_hop[dst] = hop
        tables[src] = ClassicalForwardingTable(next_hop=next_hop)
    return tables


@dataclass(order=True)
class Event:
    at: float
    seq: int
    kind: str = field(compare=False)
    target: Address = field(compare=False)
    payload: Any = field(compare=False)


@dataclass
class SimLimits:
    max_events: int = 100_000
    max_time: float = 3600.0
    decay_period: float = 0.001


class SimRun:
    """One simulation: topology, per-node runtimes, queue, rng and trace.

    Also serves as the kernel's context and the micro-protocols' network.
    """

    def __init__(
        self,
        topology: Topology,
        seed: int = 0,
        engine: EngineParams | None = None,
        limits: SimLimits | None = None,
        hints: dict[Address, dict] | None = None,
        capabilities: dict[Address, frozenset[str]] | None = None,
        verbose: bool = False,
        scenario_name: str = "",
    ) -> None:
        self.topology = topology
        self.seed = seed
        self.rng = random.Random(seed)
        self.engine = engine or EngineParams()
        self.limits = limits or SimLimits()
        self.verbose = verbose
        self.scenario_name = scenario_name
        self.trace: list[dict] = []
        self.dispositions: dict[str, str] = {}
        self.mp_retries = 0
        self._queue: list[Event] = []
        self._seq = 0
        self._ent_counter = 0
        self._stage_counter = 0
        self._header_counter = 0
        self._submit_at: dict[str, float] = {}
        self._last_at = 0.0
        ftc = compute_ftc(topology)
        hints = hints or {}
        capabilities = capabilities or {}
        self.nodes: dict[Address, NodeRuntime] = {}
        for addr in topology.nodes:
            state = InternalState(
                ftc=ftc[addr],
                ftq=QuantumForwardingTable(owner=addr),
                hints=Hints(entries=dict(hints.get(addr, {}))),
            )
            self.nodes[addr] = NodeRuntime(
                address=addr,
                state=state,
                capabilities=capabilities.get(addr, ALL_MPS),
            )
        self.emit({"type": "run_start", "scenario": scenario_name, "seed": seed})

    # -- kernel context surface ------------------------------------------

    def node(self, address: Address) -> NodeRuntime:
        return self.nodes[address]

    def mint_ent_id(self) -> str:
        self._ent_counter += 1
        return f"e{self._ent_counter:04d}"

    def next_stage_id(self) -> int:
        self._stage_counter += 1
        return self._stage_counter

    def header_id(self, header: MetaHeader) -> str:
        return header.hid

    def link_config(self, a: Address, b: Address) -> LinkConfig | None:
        return self.topology.quantum_links.get(link_key(a, b))

    def has_quantum_link(self, a: Address, b: Address) -> bool:
        return link_key(a, b) in self.topology.quantum_links

    def is_quantum_neighbor(self, a: Address, b: Address) -> bool:
        return self.has_quantum_link(a, b)

    def classical_latency(self, src: Address, dst: Address) -> float | None:
        if src == dst:
            return 0.0
        total = 0.0
        hop = src
        visited = {src}
        while hop != dst:
            nh = self.nodes[hop].state.ftc.lookup(dst)
            if nh is None or nh in visited:
                return None
            latency = self.topology.classical_links.get(link_key(hop, nh))
            if latency is None:
                return None
            total += latency
            visited.add(nh)
            hop = nh
        return total

    def emit(self, record: dict) -> None:
        self.trace.append(record)
        if record.get("type") == "disposition":
            self.dispositions[record["header"]] = record["value"]

    def emit_debug(self, record: dict) -> None:
        if record.get("kind") == "mp_retry":
            self.mp_retries += 1
        if self.verbose:
            self.trace.append(record)

    # -- event scheduling --------------------------------------------------

    def _push(self, at: float, kind: str, target: Address, payload: Any) -> None:
        self._seq += 1
        heapq.heappush(self._queue, Event(at=at, seq=self._seq, kind=kind, target=target, payload=payload))

    def schedule_packet(self, src: Address, dst: Address, packet: QuantumPacket, at: float) -> None:
        sender_lamport = self.nodes[src].state.lamport
        self._push(at, EV_PACKET, dst, {"packet": packet, "from": src, "lamport": sender_lamport})

    def schedule_signal(self, src: Address, dst: Address, payload: dict, at: float) -> None:
        self._push(at, EV_SIGNAL, dst, payload)

    def schedule_timer(self, node: Address, payload: dict, at: float) -> None:
        self._push(at, EV_TIMER, node, payload)

    # -- public operations --------------------------------------------------

    def submit_intent(
        self,
        origin: Address,
        intent: ServiceIntent,
        payload_resources: tuple[str, ...] = (),
        at: float = 0.0,
    ) -> str:
        """Create the initial packet (empty log, held by the origin) and
        schedule the origin's first activation."""
        if origin not in self.nodes:
            raise UnknownNode(origin)
        for participant in intent.participants:
            if participant not in self.nodes:
                raise InvalidIntent(f"participant {participant} not in topology")
        self._header_counter += 1
        hid = f"h{self._header_counter}"
        header = MetaHeader(intent=intent, stamps=(), holder=origin, hid=hid)
        packet = QuantumPacket(header=header, payload=frozenset(payload_resources))
        self._submit_at[hid] = at
        self.emit(
            {
                "type": "intent",
                "header": hid,
                "origin": origin,
                "at": at,
                "intent": intent.to_json(),
            }
        )
        self.schedule_packet(origin, origin, packet, at)
        return hid

    def seed_resource(self, resource: EntanglementResource) -> None:
        """Install a pre-shared pair at both endpoints (scenario bootstrap)."""
        for endpoint in resource.endpoints:
            ftq_insert(self.nodes[endpoint].state.ftq, resource)

    def run_until_quiescent(self) -> tuple[list[dict], dict[Address, NodeRuntime]]:
        """Drain the queue in (time, sequence) order; sweeps self-reschedule
        only while other work remains, so the run actually terminates."""
        if self.limits.decay_period > 0 and self._queue:
            self._push(self.limits.decay_period, EV_SWEEP, "", None)
        processed = 0
        while self._queue:
            event = heapq.heappop(self._queue)
            assert event.at >= self._last_at - 1e-12, "event from the past"
            self._last_at = max(self._last_at, event.at)
            if event.at > self.limits.max_time:
                raise LimitExceeded(f"sim time limit {self.limits.max_time}s hit", trace=self.trace)
            processed += 1
            if processed > self.limits.max_events:
                raise LimitExceeded(f"event limit {self.limits.max_events} hit", trace=self.trace)
            self._dispatch(event)
        return self.trace, self.nodes

    # -- dispatch -----------------------------------------------------------

    def _dispatch(self, event: Event) -> None:
        if event.kind == EV_SWEEP:
            for addr in self.topology.nodes:
                decay_sweep(self.nodes[addr].state.ftq, event.at)
            if any(e.kind != EV_SWEEP for e in self._queue):
                self._push(event.at + self.limits.decay_period, EV_SWEEP, "", None)
            return
        node = self.nodes[event.target]
        if event.kind == EV_PACKET:
            node.state.merge_clock(event.payload["lamport"])
            packet = event.payload["packet"]
            outcome = process_packet(node, packet, self, event.at)
            self.emit_debug(
                {
                    "type": "debug",
                    "kind": "activation",
                    "node": node.address,
                    "header": packet.header.hid,
                    "disposition": outcome.disposition,
                    "at": event.at,
                }
            )
            return
        if event.kind == EV_SIGNAL:
            node.state.merge_clock(event.payload.get("lamport", 0))
            on_classical_signal(node, event.payload, self, event.at)
            return
        if event.kind == EV_TIMER:
            on_classical_signal(node, event.payload, self, event.at)
            return
        raise AssertionError(f"unknown event kind {event.kind}")


def build_summary(run: SimRun) -> dict:
    """Condensed per-run result: stamp counts, dispositions, latency, quality."""
    stamps = [r for r in run.trace if r.get("type") == "stamp"]
    headers: dict[str, list[dict]] = {}
    for record in stamps:
        headers.setdefault(record["header"], []).append(record)
    per_header = {}
    for hid, records in sorted(headers.items()):
        produced_by: dict[str, dict] = {}
        for r in records:
            for ent in r["meta"].get("produced", ()):
                produced_by[ent] = r
        consume = next(
            (r for r in records if r["action"] == "CONSUME_TP" and r["outcome"] == "ok"), None
        )
        final_fidelity = None
        if consume is not None:
            for ent in consume["ent_ids"]:
                if ent in produced_by:
                    final_fidelity = produced_by[ent]["meta"].get("fidelity")
        disposition = run.dispositions.get(hid)
        delivered_at = next(
            (r["at"] for r in run.trace
             if r.get("type") == "disposition" and r.get("header") == hid and r["value"] == "deliver"),
            None,
        )
        submit_at = run._submit_at.get(hid, 0.0)
        per_header[hid] = {
            "stamps": len(records),
            "ok_stamps": sum(1 for r in records if r["outcome"] == "ok"),
            "failed_stamps": sum(1 for r in records if r["outcome"] == "fail"),
            "disposition": disposition,
            "latency": None if delivered_at is None else delivered_at - submit_at,
            "final_fidelity": final_fidelity,
        }
    return {
        "scenario": run.scenario_name,
        "seed": run.seed,
        "stamps": len(stamps),
        "mp_retries": run.mp_retries,
        "headers": per_header,
    }
