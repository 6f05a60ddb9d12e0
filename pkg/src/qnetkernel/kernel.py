"""Per-node kernel: plan candidate actions, bind them to micro-protocol
compositions, run them, and certify commits by stamping the meta-header.

One activation handles one packet (or one resumed wait) and loops
plan -> select -> map/bind -> schedule -> run until it reaches a terminal
disposition. Retries, backoff and purification pumping stay inside the
bound compositions; only terminal outcomes ever touch the header.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Any, Callable, Protocol

from . import mp
from .core import (
    ActionKind,
    Address,
    EntanglementResource,
    LOCAL_ONLY_KINDS,
    MetaHeader,
    OUTCOME_FAIL,
    QuantumPacket,
    ServiceIntent,
    SERVICE_TELEPORT,
    Stamp,
    TERMINAL_KINDS,
    append_stamp,
    read_header,
)
from .errors import (
    CapabilityMissing,
    Expired,
    NoRoute,
    NotFound,
    UnsupportedService,
)
from .state import (
    InternalState,
    best_resource,
    fidelity_at,
    ftq_consume,
    ftq_discard,
    ftq_insert,
)

EDGE_LOGICAL = "logical"
EDGE_RESOURCE = "resource"
EDGE_VIEW = "view-induced"

# Classical signal kinds
SIG_READY_FOR_BSM = "ready_for_bsm"
SIG_BSM_BITS = "bsm_bits"
SIG_SWAP_BITS = "swap_bits"
SIG_COMPLETION_ACK = "completion_ack"
SIG_CONSUME_TIMEOUT = "consume_timeout"

_MAX_ROUNDS = 64

REQUIRED_MPS: dict[ActionKind, frozenset[str]] = {
    ActionKind.LINK_PR: frozenset({mp.MP_SYN, mp.MP_GEN, mp.MP_QP}),
    ActionKind.SWAP: frozenset({mp.MP_QP, mp.MP_SIG}),
    ActionKind.ACT_FORWARD: frozenset({mp.MP_FW}),
    ActionKind.CONSUME_TP: frozenset({mp.MP_SIG, mp.MP_QP}),
    ActionKind.ACT_DELIVER: frozenset(),
    ActionKind.ACT_DROP: frozenset(),
    ActionKind.ACT_HOLD: frozenset(),
}


@dataclass(frozen=True)
class Action:
    """One candidate step in a node-local plan."""

    id: str
    kind: ActionKind
    link: tuple[Address, Address] | None = None
    triple: tuple[Address, Address, Address] | None = None  # (src, middle, next)
    toward: Address | None = None  # routing goal of a forward placeholder
    target: Address | None = None  # bound next hop, filled by the executor
    f_min: float = 0.25
    tau_min: float = 0.0
    note: str | None = None  # human-readable cause for planner-chosen drops

    @property
    def local_only(self) -> bool:
        return self.kind in LOCAL_ONLY_KINDS

    @property
    def terminal(self) -> bool:
        return self.kind in TERMINAL_KINDS


@dataclass
class PoA:
    """Node-local DAG of candidate actions with tagged dependency edges."""

    actions: dict[str, Action] = field(default_factory=dict)
    edges: set[tuple[str, str, str]] = field(default_factory=set)

    def add(self, action: Action) -> Action:
        self.actions[action.id] = action
        return action

    def link(self, u: Action | str, w: Action | str, tag: str) -> None:
        uid = u if isinstance(u, str) else u.id
        wid = w if isinstance(w, str) else w.id
        assert uid in self.actions and wid in self.actions
        self.edges.add((uid, wid, tag))

    def predecessors(self, action_id: str) -> set[str]:
        return {u for (u, w, _tag) in self.edges if w == action_id}

    def topo_order(self) -> list[Action]:
        """Deterministic topological order (ready set resolved by id)."""
        indeg = {aid: 0 for aid in self.actions}
        for (_u, w, _tag) in self.edges:
            indeg[w] += 1
        ready = sorted(aid for aid, d in indeg.items() if d == 0)
        order: list[Action] = []
        while ready:
            aid = ready.pop(0)
            order.append(self.actions[aid])
            changed = False
            for (u, w, _tag) in self.edges:
                if u == aid:
                    indeg[w] -= 1
                    if indeg[w] == 0:
                        ready.append(w)
                        changed = True
            if changed:
                ready.sort()
        if len(order) != len(self.actions):
            raise ValueError("plan contains a dependency cycle")
        return order

    def to_json(self) -> dict[str, Any]:
        return {
            "actions": [a.id for a in self.topo_order()],
            "edges": sorted(self.edges),
        }


@dataclass(frozen=True)
class MeP:
    """A committable unit of work: one action bound to a run of MPs."""

    action: Action
    steps: tuple[str, ...]
    member_ids: tuple[str, ...]  # planner action ids this unit covers
    max_retries: int = 16
    timeout: float | None = None


@dataclass(frozen=True)
class KernelOutcome:
    disposition: str  # forward | deliver | drop | hold
    packet: QuantumPacket
    next_hop: Address | None = None


@dataclass
class EngineParams:
    max_retries: int = 16
    signal_timeout: float = 1.0
    link_pr_composer: str = "pump"


@dataclass
class ParkedConsume:
    """A consumption waiting for measurement bits from the far side.

    The pair is reserved: its local half leaves the forwarding table when
    the wait starts, so a concurrent intent cannot book the same resource.
    A timed-out reservation is lost, not returned (the far side may already
    have measured its half)."""

    packet: QuantumPacket
    mep: MeP
    pair: EntanglementResource
    deadline: float


@dataclass
class NodeRuntime:
    """Everything one node owns: state, capabilities, and soft state."""

    address: Address
    state: InternalState
    capabilities: frozenset[str] = mp.ALL_MPS
    holds: dict[str, str] = field(default_factory=dict)  # header id -> status
    parked: dict[str, ParkedConsume] = field(default_factory=dict)
    bsm_done: set[str] = field(default_factory=set)


class KernelContext(Protocol):
    """Services a kernel activation needs from the surrounding run."""

    rng: random.Random
    engine: EngineParams
    verbose: bool

    def mint_ent_id(self) -> str: ...

    def node(self, address: Address) -> NodeRuntime: ...

    def link_config(self, a: Address, b: Address) -> mp.LinkConfig | None: ...

    def has_quantum_link(self, a: Address, b: Address) -> bool: ...

    def next_stage_id(self) -> int: ...

    def header_id(self, header: MetaHeader) -> str: ...

    def emit(self, record: dict) -> None: ...

    def emit_debug(self, record: dict) -> None: ...

    # mp.Network surface
    def classical_latency(self, src: Address, dst: Address) -> float | None: ...

    def schedule_signal(self, src: Address, dst: Address, payload: dict, at: float) -> None: ...

    def is_quantum_neighbor(self, a: Address, b: Address) -> bool: ...

    def schedule_packet(self, src: Address, dst: Address, packet: QuantumPacket, at: float) -> None: ...

    def schedule_timer(self, node: Address, payload: dict, at: float) -> None: ...


# --------------------------------------------------------------------------
# Planner
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PlannerView:
    """Snapshot a planner is allowed to see: local state at one instant."""

    node: Address
    state: InternalState
    now: float
    has_qlink: Callable[[Address, Address], bool]
    hold_installed: bool = False


PlannerFn = Callable[[ServiceIntent, tuple[Stamp, ...], PlannerView], PoA]
_PLANNERS: dict[str, PlannerFn] = {}


def register_planner(service: str, fn: PlannerFn) -> None:
    _PLANNERS[service] = fn


def plan_poa(intent: ServiceIntent, stamps: tuple[Stamp, ...], view: PlannerView) -> PoA:
    """Build the node-local action DAG for whatever this intent still needs."""
    planner = _PLANNERS.get(intent.service)
    if planner is None:
        raise UnsupportedService(intent.service)
    return planner(intent, stamps, view)


def origin_of(stamps: tuple[Stamp, ...], fallback: Address) -> Address:
    """The initiator: support of the first forward, else wherever we are.

    Until a packet is forwarded it has never left its origin, so the first
    ACT_FORWARD stamp (support = the forwarding node) pins the initiator.
    """
    for s in stamps:
        if s.action is ActionKind.ACT_FORWARD and s.ok:
            (node,) = tuple(s.support)
            return node
    return fallback


def _usable(view: PlannerView, peer: Address, f_min: float) -> bool:
    ftq = view.state.ftq
    return ftq is not None and best_resource(ftq, peer, f_min, view.now) is not None


def _prep_branch(poa: PoA, link: tuple[Address, Address], f_min: float, tau_min: float) -> tuple[Action, Action, Action]:
    """SYN -> GEN -> PURIFY chain for one link that still needs preparing."""
    a, b = mp.link_key(*link)
    tag = f"{a}-{b}"
    syn = poa.add(Action(id=f"SYN:{tag}", kind=ActionKind.SYN, link=(a, b), f_min=f_min, tau_min=tau_min))
    gen = poa.add(Action(id=f"GEN:{tag}", kind=ActionKind.GEN, link=(a, b), f_min=f_min, tau_min=tau_min))
    pur = poa.add(Action(id=f"PURIFY:{tag}", kind=ActionKind.PURIFY, link=(a, b), f_min=f_min, tau_min=tau_min))
    poa.link(syn, gen, EDGE_LOGICAL)
    poa.link(gen, pur, EDGE_LOGICAL)
    return syn, gen, pur


def _serialize_branches(poa: PoA, branches: list[tuple[Action, Action, Action]]) -> None:
    """Conservative cross-branch ordering when parallel generation is not hinted."""
    for (_, gen1, pur1), (syn2, gen2, _) in zip(branches, branches[1:]):
        poa.link(gen1, gen2, EDGE_VIEW)
        poa.link(pur1, syn2, EDGE_VIEW)


def plan_teleport(intent: ServiceIntent, stamps: tuple[Stamp, ...], view: PlannerView) -> PoA:
    """Teleportation planning at one node.

    Works from committed milestones first (never re-plans a stamped action),
    then from the entanglement inventory. The destination consumes and
    delivers; everyone else prepares whatever adjacent pairs are missing,
    swaps when it holds both sides, and forwards the header onward. The
    initiator additionally installs a local hold because the terminal commit
    belongs to the destination.
    """
    v = view.node
    src, dst = intent.src, intent.dst
    f_min, tau_min = intent.f_min, intent.tau_min
    ok_stamps = [s for s in stamps if s.ok]
    poa = PoA()

    def drop(reason: str) -> PoA:
        poa.add(Action(id="DROP", kind=ActionKind.ACT_DROP, f_min=f_min,
                       tau_min=tau_min, note=reason))
        return poa

    if any(s.action is ActionKind.ACT_DELIVER for s in ok_stamps):
        return poa  # fulfilled; nothing to plan

    if v == dst:
        consumed = any(s.action is ActionKind.CONSUME_TP for s in ok_stamps)
        deliver = poa.add(Action(id="DELIVER", kind=ActionKind.ACT_DELIVER, f_min=f_min, tau_min=tau_min))
        if consumed:
            return poa
        consume = poa.add(
            Action(id="CONSUME", kind=ActionKind.CONSUME_TP, link=mp.link_key(src, dst), f_min=f_min, tau_min=tau_min)
        )
        poa.link(consume, deliver, EDGE_LOGICAL)
        pair = None
        if view.state.ftq is not None:
            pair = best_resource(view.state.ftq, src, f_min, view.now)
        if pair is not None and (pair.expires_at - view.now) < tau_min:
            # the residual-lifetime target can only get worse; be decisive
            poa.actions.clear()
            poa.edges.clear()
            return drop("end-to-end pair cannot meet the residual coherence target")
        if pair is None:
            if view.has_qlink(src, dst):
                branch = _prep_branch(poa, (src, dst), f_min, tau_min)
                poa.link(branch[2], consume, EDGE_RESOURCE)
            else:
                poa.actions.clear()
                poa.edges.clear()
                return drop("no usable end-to-end pair at destination")
        return poa

    nh = view.state.ftc.lookup(dst)
    if nh is None:
        return drop("no route toward destination")

    forward = poa.add(
        Action(id="FWD", kind=ActionKind.ACT_FORWARD, toward=dst, f_min=f_min, tau_min=tau_min)
    )
    if v == origin_of(stamps, v):
        poa.add(Action(id="HOLD", kind=ActionKind.ACT_HOLD, f_min=f_min, tau_min=tau_min))

    swap_done = any(
        s.action is ActionKind.SWAP and s.support == frozenset((src, v, nh)) for s in ok_stamps
    )
    if swap_done:
        return poa

    branches: list[tuple[Action, Action, Action]] = []
    if v != src and not _usable(view, src, f_min):
        if not view.has_qlink(src, v):
            poa.actions.clear()
            poa.edges.clear()
            return drop("upstream pair lost and not locally recoverable")
        branches.append(_prep_branch(poa, (src, v), f_min, tau_min))
    if not _usable(view, nh, f_min):
        branches.append(_prep_branch(poa, (v, nh), f_min, tau_min))
    branches.sort(key=lambda br: br[0].id)
    if not view.state.hints.allow_parallel_gen():
        _serialize_branches(poa, branches)

    if v == src:
        for branch in branches:
            poa.link(branch[2], forward, EDGE_RESOURCE)
    else:
        swap = poa.add(
            Action(id=f"SWAP:{src}-{v}-{nh}", kind=ActionKind.SWAP, triple=(src, v, nh), f_min=f_min, tau_min=tau_min)
        )
        for branch in branches:
            poa.link(branch[2], swap, EDGE_RESOURCE)
        poa.link(swap, forward, EDGE_LOGICAL)
    return poa


register_planner(SERVICE_TELEPORT, plan_teleport)


# --------------------------------------------------------------------------
# Executor: selection, mapping/binding, scheduling
# --------------------------------------------------------------------------

def _is_satisfied(action: Action, view: PlannerView) -> bool:
    if action.kind in (ActionKind.SYN, ActionKind.GEN, ActionKind.PURIFY):
        a, b = action.link
        peer = b if view.node == a else a
        return _usable(view, peer, action.f_min)
    if action.kind is ActionKind.ACT_HOLD:
        return view.hold_installed
    return False


def _guard_ok(action: Action, view: PlannerView) -> bool:
    ftq = view.state.ftq
    now = view.now
    if action.kind is ActionKind.PURIFY:
        # needs raw material on the link, whatever its quality
        a, b = action.link
        peer = b if view.node == a else a
        if ftq is None:
            return False
        return any(
            peer in r.endpoints and not r.expired(now) for r in ftq.entries.values()
        )
    if action.kind is ActionKind.SWAP:
        src, v, nh = action.triple
        return _usable(view, src, action.f_min) and _usable(view, nh, action.f_min)
    if action.kind is ActionKind.CONSUME_TP:
        a, b = action.link
        peer = b if view.node == a else a
        if ftq is None:
            return False
        pair = best_resource(ftq, peer, action.f_min, now)
        return pair is not None and (pair.expires_at - now) >= action.tau_min
    return True


def select_feasible(poa: PoA, view: PlannerView) -> list[Action]:
    """Actions runnable now: dependency-closed, guard-passing, not already met."""
    satisfied = {a.id for a in poa.actions.values() if _is_satisfied(a, view)}
    selected: list[Action] = []
    selected_ids: set[str] = set()
    for action in poa.topo_order():
        if action.id in satisfied:
            continue
        preds = poa.predecessors(action.id)
        if not preds.issubset(satisfied | selected_ids):
            continue
        if not _guard_ok(action, view):
            continue
        selected.append(action)
        selected_ids.add(action.id)
    return selected


def map_and_bind(
    selected: list[Action],
    poa: PoA,
    node: NodeRuntime,
    params: EngineParams,
) -> list[MeP]:
    """Fuse prep chains into link-preparation units and bind parameters.

    SYN/GEN/PURIFY on one link become a single LINK_PR unit whose pump loop
    owns every retry; a forward placeholder gets its concrete next hop from
    the classical table here, not at planning time.
    """
    meps: list[MeP] = []
    prep_groups: dict[tuple[Address, Address], list[Action]] = {}
    for action in selected:
        if action.kind in (ActionKind.SYN, ActionKind.GEN, ActionKind.PURIFY):
            prep_groups.setdefault(action.link, []).append(action)

    def check_caps(kind: ActionKind) -> None:
        missing = REQUIRED_MPS.get(kind, frozenset()) - node.capabilities
        if missing:
            raise CapabilityMissing(f"{node.address} lacks {sorted(missing)} for {kind.value}")

    for link in sorted(prep_groups):
        group = prep_groups[link]
        if not any(a.kind is ActionKind.GEN for a in group):
            continue  # generation is the anchor; a blocked branch waits
        check_caps(ActionKind.LINK_PR)
        proto = group[0]
        members = tuple(
            aid for aid in (f"SYN:{link[0]}-{link[1]}", f"GEN:{link[0]}-{link[1]}", f"PURIFY:{link[0]}-{link[1]}")
            if aid in poa.actions
        )
        composite = Action(
            id=f"LINK_PR:{link[0]}-{link[1]}",
            kind=ActionKind.LINK_PR,
            link=link,
            f_min=proto.f_min,
            tau_min=proto.tau_min,
        )
        meps.append(
            MeP(
                action=composite,
                steps=(mp.MP_SYN, f"{mp.MP_GEN}*", f"{mp.MP_QP}(purify)*"),
                member_ids=members,
                max_retries=params.max_retries,
            )
        )

    for action in selected:
        if action.kind in (ActionKind.SYN, ActionKind.GEN, ActionKind.PURIFY):
            continue
        check_caps(action.kind)
        if action.kind is ActionKind.SWAP:
            meps.append(
                MeP(
                    action=action,
                    steps=(f"{mp.MP_QP}(bsm)", f"{mp.MP_SIG}(bits)"),
                    member_ids=(action.id,),
                    max_retries=params.max_retries,
                )
            )
        elif action.kind is ActionKind.ACT_FORWARD:
            nh = node.state.ftc.lookup(action.toward)
            if nh is None:
                raise NoRoute(f"{node.address} has no next hop toward {action.toward}")
            bound = Action(
                id=action.id,
                kind=action.kind,
                toward=action.toward,
                target=nh,
                f_min=action.f_min,
                tau_min=action.tau_min,
            )
            meps.append(MeP(action=bound, steps=(mp.MP_FW,), member_ids=(action.id,)))
        elif action.kind is ActionKind.CONSUME_TP:
            meps.append(
                MeP(
                    action=action,
                    steps=(f"{mp.MP_SIG}(ready)", "await-bits", f"{mp.MP_QP}(pauli)"),
                    member_ids=(action.id,),
                    timeout=params.signal_timeout,
                )
            )
        else:  # DELIVER / DROP / HOLD
            meps.append(MeP(action=action, steps=(), member_ids=(action.id,)))
    return meps


def make_schedule(meps: list[MeP], poa: PoA) -> list[list[MeP]]:
    """Stage the bound units by dependency depth.

    Units in one stage have no edges between them and run as one commit
    batch; local soft-state installs sort ahead of everything else so a
    hold is in place before the terminal forward fires.
    """
    owner: dict[str, int] = {}
    for i, unit in enumerate(meps):
        for aid in unit.member_ids:
            owner[aid] = i
    depth = [0] * len(meps)
    changed = True
    iterations = 0
    while changed:
        changed = False
        iterations += 1
        assert iterations <= len(meps) + 1, "cycle in bound schedule"
        for (u, w, _tag) in poa.edges:
            iu, iw = owner.get(u), owner.get(w)
            if iu is None or iw is None or iu == iw:
                continue
            if depth[iw] < depth[iu] + 1:
                depth[iw] = depth[iu] + 1
                changed = True
    stages: dict[int, list[MeP]] = {}
    for i, unit in enumerate(meps):
        stages.setdefault(depth[i], []).append(unit)
    ordered = []
    for level in sorted(stages):
        stage = stages[level]
        stage.sort(key=lambda m: (not m.action.local_only, m.action.terminal, m.action.id))
        ordered.append(stage)
    return ordered


# --------------------------------------------------------------------------
# Engine
# --------------------------------------------------------------------------

@dataclass
class _MepRun:
    status: str  # ok | parked | abort
    elapsed: float = 0.0
    retries: int = 0
    produced: list[EntanglementResource] = field(default_factory=list)
    consumed: list[EntanglementResource] = field(default_factory=list)
    meta: dict[str, Any] = field(default_factory=dict)
    reason: str = ""


ComposerFn = Callable[[MeP, NodeRuntime, "KernelContext", float], _MepRun]
LINK_PR_COMPOSERS: dict[str, ComposerFn] = {}


def register_link_pr_composer(name: str, fn: ComposerFn) -> None:
    LINK_PR_COMPOSERS[name] = fn


def _run_link_pr_pump(unit: MeP, node: NodeRuntime, ctx: KernelContext, t0: float) -> _MepRun:
    """Sync once, then pump: generate, and purify against fresh raws until
    the survivor clears the target fidelity or the retry budget runs out.

    Raw pairs live only inside this unit; on abort they are simply lost, so
    the node inventory is untouched by a failed attempt.
    """
    cfg = ctx.link_config(*unit.action.link)
    assert cfg is not None, "planner only plans existing links"
    t = t0 + mp.invoke_syn(cfg).elapsed
    retries = 0
    survivor: EntanglementResource | None = None

    def retry(label: str) -> bool:
        nonlocal retries, t
        retries += 1
        t += cfg.sync_delay  # fixed backoff of one sync period
        ctx.emit_debug(
            {
                "type": "debug",
                "kind": "mp_retry",
                "node": node.address,
                "unit": unit.action.id,
                "step": label,
                "retries": retries,
                "at": t,
            }
        )
        return retries <= unit.max_retries

    while True:
        if survivor is None:
            result = mp.invoke_gen(cfg, ctx.rng, t, ctx.mint_ent_id())
            t += result.elapsed
            if result.success:
                survivor = result.produced
            elif not retry("GEN"):
                return _MepRun(status="abort", elapsed=t - t0, retries=retries, reason="generation budget exhausted")
            continue
        if fidelity_at(survivor, t) >= unit.action.f_min:
            return _MepRun(status="ok", elapsed=t - t0, retries=retries, produced=[survivor])
        result = mp.invoke_gen(cfg, ctx.rng, t, ctx.mint_ent_id())
        t += result.elapsed
        if not result.success:
            if not retry("GEN"):
                return _MepRun(status="abort", elapsed=t - t0, retries=retries, reason="generation budget exhausted")
            continue
        outcome = mp.qp_purify(survivor, result.produced, ctx.rng, t, ctx.mint_ent_id())
        if outcome.success:
            survivor = outcome.produced
        else:
            survivor = None  # both raws lost in the failed round
            if not retry("QP(purify)"):
                return _MepRun(status="abort", elapsed=t - t0, retries=retries, reason="purification budget exhausted")


register_link_pr_composer("pump", _run_link_pr_pump)


def _run_swap(unit: MeP, node: NodeRuntime, ctx: KernelContext, t0: float, hid: str) -> _MepRun:
    src, v, nh = unit.action.triple
    ftq = node.state.ftq
    left = best_resource(ftq, src, unit.action.f_min, t0)
    right = best_resource(ftq, nh, unit.action.f_min, t0)
    if left is None or right is None:
        return _MepRun(status="abort", reason="swap inputs unavailable")
    result = mp.qp_swap_bsm(left, right, v, ctx.rng, t0, ctx.mint_ent_id())
    bits = result.side_data
    mp.invoke_sig(
        ctx,
        v,
        nh,
        {
            "kind": SIG_SWAP_BITS,
            "header": hid,
            "ent_id": result.produced.ent_id,
            "bits": list(bits),
            "lamport": node.state.tick(),
        },
        t0,
    )
    return _MepRun(
        status="ok",
        elapsed=0.0,
        produced=[result.produced],
        consumed=[left, right],
    )


def _stamp_for(unit: MeP, node: NodeRuntime, run: _MepRun, stage: int) -> Stamp:
    kind = unit.action.kind
    meta: dict[str, Any] = {"stage": stage}
    ent_ids: set[str] = set()
    target = None
    if kind is ActionKind.LINK_PR:
        support = frozenset(unit.action.link)
    elif kind is ActionKind.SWAP:
        support = frozenset(unit.action.triple)
    elif kind is ActionKind.ACT_FORWARD:
        support = frozenset((node.address,))
        target = unit.action.target
    elif kind is ActionKind.CONSUME_TP:
        support = frozenset(unit.action.link)
    else:  # DELIVER / DROP
        support = frozenset((node.address,))
    for r in run.produced:
        ent_ids.add(r.ent_id)
    for r in run.consumed:
        ent_ids.add(r.ent_id)
    if run.produced:
        meta["produced"] = sorted(r.ent_id for r in run.produced)
        meta["fidelity"] = run.produced[-1].fidelity
        meta["expires_at"] = run.produced[-1].expires_at
    if run.retries:
        meta["retries"] = run.retries
    if kind is ActionKind.ACT_DROP and unit.action.note:
        meta["reason"] = unit.action.note
    meta.update(run.meta)
    return Stamp(
        action=kind,
        support=support,
        ts=node.state.tick(),
        ent_ids=frozenset(ent_ids),
        outcome=OUTCOME_FAIL if run.status == "abort" else "ok",
        meta=meta,
        target=target,
    )


def _apply_commit(
    ctx: KernelContext,
    node: NodeRuntime,
    packet: QuantumPacket,
    stamp: Stamp,
    run: _MepRun,
    at: float,
) -> QuantumPacket:
    """Make header, payload and inventory changes visible in one step."""
    for r in run.consumed:
        for endpoint in r.endpoints:
            ftq_discard(ctx.node(endpoint).state.ftq, r.ent_id)
    for r in run.produced:
        for endpoint in r.endpoints:
            ftq_insert(ctx.node(endpoint).state.ftq, r)
    payload = set(packet.payload)
    payload -= {r.ent_id for r in run.consumed}
    payload |= {r.ent_id for r in run.produced}
    header = append_stamp(packet.header, node.address, stamp)
    updated = QuantumPacket(header=header, payload=frozenset(payload))
    hid = ctx.header_id(header)
    ctx.emit(
        {"type": "stamp", "header": hid, "holder": node.address, "at": at, **stamp.to_json()}
    )
    ctx.emit(
        {
            "type": "commit",
            "header": hid,
            "node": node.address,
            "action": stamp.action.value,
            "ts": stamp.ts,
            "at": at,
        }
    )
    return updated


def _abort(
    ctx: KernelContext,
    node: NodeRuntime,
    packet: QuantumPacket,
    unit: MeP,
    run: _MepRun,
    stage: int,
    at: float,
) -> KernelOutcome:
    """Terminal failure: exactly one failure stamp, then drop. No partial
    inventory or payload changes become visible."""
    run.produced = []
    run.consumed = []
    run.meta["reason"] = run.reason
    stamp = _stamp_for(unit, node, run, stage)
    packet = _apply_commit(ctx, node, packet, stamp, run, at)
    hid = ctx.header_id(packet.header)
    ctx.emit({"type": "disposition", "header": hid, "node": node.address, "value": "drop", "at": at})
    return KernelOutcome(disposition="drop", packet=packet)


@dataclass
class _StagesResult:
    disposition: str  # continue | forward | deliver | drop | hold
    packet: QuantumPacket
    t: float
    next_hop: Address | None = None


def _run_stages(
    stages: list[list[MeP]],
    packet: QuantumPacket,
    node: NodeRuntime,
    ctx: KernelContext,
    t: float,
) -> _StagesResult:
    hid = ctx.header_id(packet.header)
    intent = packet.header.intent
    for stage_units in stages:
        stage_id = ctx.next_stage_id()
        stage_start = t
        stage_end = t
        for unit in stage_units:
            kind = unit.action.kind
            if kind is ActionKind.ACT_HOLD:
                node.holds.setdefault(hid, "holding")
                ctx.emit_debug(
                    {"type": "debug", "kind": "hold_installed", "node": node.address, "header": hid, "at": stage_start}
                )
                continue
            if kind is ActionKind.LINK_PR:
                composer = LINK_PR_COMPOSERS[ctx.engine.link_pr_composer]
                run = composer(unit, node, ctx, stage_start)
            elif kind is ActionKind.SWAP:
                run = _run_swap(unit, node, ctx, stage_start, hid)
            elif kind is ActionKind.CONSUME_TP:
                a, b = unit.action.link
                peer = b if node.address == a else a
                pair = best_resource(node.state.ftq, peer, unit.action.f_min, stage_start)
                if pair is None:
                    run = _MepRun(status="abort", reason="consumable pair unavailable")
                else:
                    ftq_consume(node.state.ftq, pair.ent_id, stage_start)  # reserve
                    src = intent.src
                    mp.invoke_sig(
                        ctx,
                        node.address,
                        src,
                        {
                            "kind": SIG_READY_FOR_BSM,
                            "header": hid,
                            "ent_id": pair.ent_id,
                            "reply_to": node.address,
                            "lamport": node.state.tick(),
                        },
                        stage_start,
                    )
                    deadline = stage_start + (unit.timeout or 0.0)
                    node.parked[hid] = ParkedConsume(packet=packet, mep=unit, pair=pair, deadline=deadline)
                    if unit.timeout is not None:
                        ctx.schedule_timer(
                            node.address,
                            {"kind": SIG_CONSUME_TIMEOUT, "header": hid, "ent_id": pair.ent_id},
                            deadline,
                        )
                    ctx.emit_debug(
                        {"type": "debug", "kind": "consume_parked", "node": node.address, "header": hid, "at": stage_start}
                    )
                    return _StagesResult(disposition="hold", packet=packet, t=stage_start)
            elif kind is ActionKind.ACT_FORWARD:
                run = _MepRun(status="ok")
            elif kind in (ActionKind.ACT_DELIVER, ActionKind.ACT_DROP):
                run = _MepRun(status="ok")
            else:
                raise AssertionError(f"unschedulable action {kind}")

            if run.status == "abort":
                return _StagesResult(
                    disposition="drop",
                    packet=_abort(ctx, node, packet, unit, run, stage_id, stage_start).packet,
                    t=stage_start,
                )
            commit_at = stage_start + run.elapsed
            stage_end = max(stage_end, commit_at)
            stamp = _stamp_for(unit, node, run, stage_id)
            packet = _apply_commit(ctx, node, packet, stamp, run, commit_at)

            if kind is ActionKind.ACT_FORWARD:
                nh = unit.action.target
                cfg = ctx.link_config(node.address, nh)
                assert cfg is not None
                sent, _at = mp.invoke_fw(ctx, node.address, nh, packet, cfg, commit_at)
                ctx.emit(
                    {"type": "transfer", "header": hid, "from": node.address, "to": nh, "at": commit_at}
                )
                return _StagesResult(disposition="forward", packet=sent, t=commit_at, next_hop=nh)
            if kind is ActionKind.ACT_DELIVER:
                ctx.emit({"type": "disposition", "header": hid, "node": node.address, "value": "deliver", "at": commit_at})
                _send_completion_ack(ctx, node, packet, hid, commit_at)
                return _StagesResult(disposition="deliver", packet=packet, t=commit_at)
            if kind is ActionKind.ACT_DROP:
                ctx.emit({"type": "disposition", "header": hid, "node": node.address, "value": "drop", "at": commit_at})
                return _StagesResult(disposition="drop", packet=packet, t=commit_at)
        t = stage_end
    return _StagesResult(disposition="continue", packet=packet, t=t)


def _send_completion_ack(ctx: KernelContext, node: NodeRuntime, packet: QuantumPacket, hid: str, at: float) -> None:
    origin = origin_of(packet.header.stamps, node.address)
    if origin == node.address:
        return
    mp.invoke_sig(
        ctx,
        node.address,
        origin,
        {"kind": SIG_COMPLETION_ACK, "header": hid, "lamport": node.state.tick()},
        at,
    )


def execute(
    stages: list[list[MeP]],
    packet: QuantumPacket,
    node: NodeRuntime,
    ctx: KernelContext,
    now: float,
) -> KernelOutcome:
    """Run a schedule, then keep replanning until a terminal disposition.

    The first schedule is the caller's; subsequent rounds recompute the plan
    against the freshly committed state, which is how a node moves from link
    preparation to swapping to forwarding within one activation.
    """
    t = now
    for _round in range(_MAX_ROUNDS):
        result = _run_stages(stages, packet, node, ctx, t)
        packet, t = result.packet, result.t
        if result.disposition != "continue":
            return KernelOutcome(result.disposition, packet, next_hop=result.next_hop)
        prepared = _prepare_round(node, packet, ctx, t)
        if prepared is None:
            return KernelOutcome("hold", packet)
        stages = prepared
    ctx.emit_debug({"type": "debug", "kind": "round_limit", "node": node.address, "at": t})
    return KernelOutcome("hold", packet)


def _prepare_round(
    node: NodeRuntime, packet: QuantumPacket, ctx: KernelContext, now: float
) -> list[list[MeP]] | None:
    intent, stamps = read_header(packet)
    hid = ctx.header_id(packet.header)
    view = PlannerView(
        node=node.address,
        state=node.state,
        now=now,
        has_qlink=ctx.has_quantum_link,
        hold_installed=hid in node.holds,
    )
    poa = plan_poa(intent, stamps, view)
    ctx.emit_debug(
        {"type": "debug", "kind": "poa", "node": node.address, "header": hid, "at": now, **poa.to_json()}
    )
    selected = select_feasible(poa, view)
    ctx.emit_debug(
        {
            "type": "debug",
            "kind": "selected",
            "node": node.address,
            "header": hid,
            "at": now,
            "actions": [a.id for a in selected],
        }
    )
    if not selected:
        return None
    meps = map_and_bind(selected, poa, node, ctx.engine)
    if not meps:
        return None
    stages = make_schedule(meps, poa)
    ctx.emit_debug(
        {
            "type": "debug",
            "kind": "schedule",
            "node": node.address,
            "header": hid,
            "at": now,
            "stages": [[m.action.id for m in stage] for stage in stages],
        }
    )
    return stages


def process_packet(
    node: NodeRuntime, packet: QuantumPacket, ctx: KernelContext, now: float
) -> KernelOutcome:
    """Full kernel activation for an arriving (or freshly submitted) packet."""
    stages = _prepare_round(node, packet, ctx, now)
    if stages is None:
        return KernelOutcome("hold", packet)
    return execute(stages, packet, node, ctx, now)


# --------------------------------------------------------------------------
# Classical signal handling
# --------------------------------------------------------------------------

def on_classical_signal(
    node: NodeRuntime, signal: dict, ctx: KernelContext, now: float
) -> KernelOutcome | None:
    """React to side-channel traffic: wake holds, run the source-side
    measurement, resume a parked consumption, or clear soft state.

    Unknown kinds are logged and ignored; a stale wake-up after completion
    is a no-op."""
    kind = signal.get("kind")
    hid = signal.get("header", "")

    if kind == SIG_READY_FOR_BSM:
        if hid in node.bsm_done:
            ctx.emit_debug({"type": "debug", "kind": "stale_wake", "node": node.address, "header": hid, "at": now})
            return None
        ent_id = signal["ent_id"]
        try:
            ftq_consume(node.state.ftq, ent_id, now)
        except (NotFound, Expired) as exc:
            ctx.emit_debug(
                {"type": "debug", "kind": "bsm_unavailable", "node": node.address, "header": hid,
                 "reason": type(exc).__name__, "at": now}
            )
            return None
        node.bsm_done.add(hid)
        if hid in node.holds:
            node.holds[hid] = "woken"
        bits = mp.qp_bsm_source(ctx.rng).side_data
        ctx.emit_debug(
            {"type": "debug", "kind": "bsm_source", "node": node.address, "header": hid,
             "bits": list(bits), "at": now}
        )
        mp.invoke_sig(
            ctx,
            node.address,
            signal["reply_to"],
            {"kind": SIG_BSM_BITS, "header": hid, "ent_id": ent_id, "bits": list(bits),
             "lamport": node.state.tick()},
            now,
        )
        return None

    if kind == SIG_BSM_BITS:
        parked = node.parked.pop(hid, None)
        if parked is None:
            ctx.emit_debug({"type": "debug", "kind": "stale_bits", "node": node.address, "header": hid, "at": now})
            return None
        mp.qp_pauli(tuple(signal["bits"]))
        unit = parked.mep
        pair = parked.pair  # reserved at park time
        if pair.expired(now):
            run = _MepRun(status="abort", reason="pair decohered before the correction")
            return _abort(ctx, node, parked.packet, unit, run, ctx.next_stage_id(), now)
        run = _MepRun(status="ok", consumed=[pair], meta={"fidelity": fidelity_at(pair, now)})
        stage_id = ctx.next_stage_id()
        stamp = _stamp_for(unit, node, run, stage_id)
        packet = _apply_commit(ctx, node, parked.packet, stamp, run, now)
        stages = _prepare_round(node, packet, ctx, now)
        if stages is None:
            return KernelOutcome("hold", packet)
        return execute(stages, packet, node, ctx, now)

    if kind == SIG_CONSUME_TIMEOUT:
        parked = node.parked.get(hid)
        if parked is None or parked.pair.ent_id != signal.get("ent_id"):
            return None
        node.parked.pop(hid, None)
        # the reserved half is lost, not returned: the far side may have
        # measured already, which is indistinguishable from decoherence
        run = _MepRun(status="abort", reason="measurement bits not received in time")
        return _abort(ctx, node, parked.packet, parked.mep, run, ctx.next_stage_id(), now)

    if kind == SIG_SWAP_BITS:
        ctx.emit_debug(
            {"type": "debug", "kind": "pauli_frame", "node": node.address, "header": hid,
             "ent_id": signal.get("ent_id"), "bits": signal.get("bits"), "at": now}
        )
        return None

    if kind == SIG_COMPLETION_ACK:
        if node.holds.pop(hid, None) is not None:
            ctx.emit_debug(
                {"type": "debug", "kind": "hold_cleared", "node": node.address, "header": hid, "at": now}
            )
        return None

    ctx.emit_debug(
        {"type": "debug", "kind": "unknown_signal", "node": node.address, "signal": str(kind), "at": now}
    )
    return None
