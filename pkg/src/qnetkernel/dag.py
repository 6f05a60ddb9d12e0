"""Global commit graph: reconstruction from stamp logs and verification.

Vertices are committed actions (one per stamp). Edges carry only what a
trace can actually prove: the single-writer append order of each header
(batch-aware, so commits made in one parallel stage stay incomparable) and
resource producer/consumer links derived by ent_id matching. Planner edges
never leave their node, so they never show up here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from .core import ActionKind, LOCAL_ONLY_KINDS
from .errors import NonMonotoneLog
from .trace import TraceView, index_trace

EDGE_SEQUENCE = "sequence"
EDGE_RESOURCE = "resource"

_LOCAL_ONLY = {kind.value for kind in LOCAL_ONLY_KINDS}


@dataclass(frozen=True)
class DagVertex:
    id: str
    header: str
    index: int
    action: str
    support: tuple[str, ...]
    ts: int
    ent_ids: tuple[str, ...]
    produced: tuple[str, ...]
    outcome: str
    stage: Any = None
    target: str | None = None

    def label(self) -> str:
        support = ",".join(self.support)
        return f"{self.action}@{{{support}}}@{self.ts}"


@dataclass
class GlobalDag:
    vertices: list[DagVertex] = field(default_factory=list)
    edges: set[tuple[str, str, str]] = field(default_factory=set)

    def vertex(self, vid: str) -> DagVertex:
        return next(v for v in self.vertices if v.id == vid)

    def adjacency(self) -> dict[str, set[str]]:
        adj: dict[str, set[str]] = {v.id: set() for v in self.vertices}
        for (u, w, _tag) in self.edges:
            adj[u].add(w)
        return adj


@dataclass
class VerificationReport:
    acyclic: bool = True
    monotone: bool = True
    single_writer: bool = True
    commit_bounded: bool = True
    no_local_leak: bool = True
    violations: list[dict] = field(default_factory=list)

    @property
    def all_true(self) -> bool:
        return (
            self.acyclic
            and self.monotone
            and self.single_writer
            and self.commit_bounded
            and self.no_local_leak
        )

    def flag(self, check: str, detail: str, **extra: Any) -> None:
        setattr(self, check, False)
        self.violations.append({"check": check, "detail": detail, **extra})

    def to_json(self) -> dict:
        return {
            "acyclic": self.acyclic,
            "monotone": self.monotone,
            "single_writer": self.single_writer,
            "commit_bounded": self.commit_bounded,
            "no_local_leak": self.no_local_leak,
            "ok": self.all_true,
            "violations": self.violations,
        }


def _vertices_of(stamp_logs: dict[str, list[dict]], up_to_ts: int | None) -> list[DagVertex]:
    vertices = []
    for hid in sorted(stamp_logs):
        for i, record in enumerate(stamp_logs[hid]):
            if up_to_ts is not None and record["ts"] > up_to_ts:
                continue
            vertices.append(
                DagVertex(
                    id=f"{hid}:{i}",
                    header=hid,
                    index=i,
                    action=record["action"],
                    support=tuple(sorted(record["support"])),
                    ts=record["ts"],
                    ent_ids=tuple(sorted(record.get("ent_ids", ()))),
                    produced=tuple(sorted(record.get("meta", {}).get("produced", ()))),
                    outcome=record.get("outcome", "ok"),
                    stage=record.get("meta", {}).get("stage"),
                    target=record.get("target"),
                )
            )
    return vertices


def _batches(vertices: list[DagVertex]) -> list[list[DagVertex]]:
    """Group one header's stamps into consecutive same-stage commit batches.

    A batch is a run of stamps committed in one executor stage; stamps
    without stage metadata batch alone."""
    batches: list[list[DagVertex]] = []
    for v in vertices:
        if (
            batches
            and v.stage is not None
            and batches[-1][0].stage == v.stage
        ):
            batches[-1].append(v)
        else:
            batches.append([v])
    return batches


def build_global_dag(
    stamp_logs: dict[str, list[dict]],
    up_to_ts: int | None = None,
    strict: bool = True,
) -> GlobalDag:
    """Rebuild the emergent commit graph from per-header stamp sequences.

    Sequence edges connect each commit batch of a header to the next one;
    resource edges run from the stamp that produced an ent_id to every
    stamp that mentions it afterwards (cross-header matches included when
    intents share a pool). With strict=True a non-monotone log is rejected
    outright.
    """
    if strict:
        for hid, log in stamp_logs.items():
            for prev, cur in zip(log, log[1:]):
                if cur["ts"] <= prev["ts"]:
                    raise NonMonotoneLog(
                        f"header {hid}: ts {cur['ts']} after {prev['ts']}"
                    )
    dag = GlobalDag(vertices=_vertices_of(stamp_logs, up_to_ts))
    by_header: dict[str, list[DagVertex]] = {}
    for v in dag.vertices:
        by_header.setdefault(v.header, []).append(v)
    for vertices in by_header.values():
        vertices.sort(key=lambda v: v.index)
        batches = _batches(vertices)
        for cur, nxt in zip(batches, batches[1:]):
            for u in cur:
                for w in nxt:
                    dag.edges.add((u.id, w.id, EDGE_SEQUENCE))
    mentions: dict[str, list[DagVertex]] = {}
    for v in dag.vertices:
        for ent in v.ent_ids:
            mentions.setdefault(ent, []).append(v)
    for ent, vs in mentions.items():
        vs.sort(key=lambda v: (v.ts, v.id))
        producer = next((v for v in vs if ent in v.produced), vs[0])
        for v in vs:
            if v.id != producer.id:
                dag.edges.add((producer.id, v.id, EDGE_RESOURCE))
    return dag


def topological_order(dag: GlobalDag) -> list[str] | None:
    """Kahn's algorithm; None when a cycle blocks completion.

    Parallel sequence/resource edges between one vertex pair count once."""
    indeg = {v.id: 0 for v in dag.vertices}
    adj = dag.adjacency()
    for (_u, w) in {(u, w) for (u, w, _tag) in dag.edges}:
        indeg[w] += 1
    ready = sorted(vid for vid, d in indeg.items() if d == 0)
    order = []
    while ready:
        vid = ready.pop(0)
        order.append(vid)
        appended = False
        for w in adj[vid]:
            indeg[w] -= 1
            if indeg[w] == 0:
                ready.append(w)
                appended = True
        if appended:
            ready.sort()
    return order if len(order) == len(dag.vertices) else None


def longest_path(dag: GlobalDag) -> int:
    """Longest chain length in vertices; 0 for an empty graph."""
    order = topological_order(dag)
    if order is None:
        raise NonMonotoneLog("cycle present; longest path undefined")
    if not order:
        return 0
    adj = dag.adjacency()
    depth = {vid: 1 for vid in order}
    for vid in order:
        for w in adj[vid]:
            depth[w] = max(depth[w], depth[vid] + 1)
    return max(depth.values())


def verify(
    dag: GlobalDag,
    stamp_logs: dict[str, list[dict]],
    origins: dict[str, str] | None = None,
    transfers: dict[str, list[tuple[str, str]]] | None = None,
    commit_counts: dict[str, int] | None = None,
) -> VerificationReport:
    """Check the emergent-graph guarantees; findings are data, never raises.

    Monotonicity is per-log and per-edge; single-writer replays each
    header's holder from its origin through its forward commits; commit
    boundedness compares stamps against the action-commit count when the
    trace provides one.
    """
    report = VerificationReport()

    if topological_order(dag) is None:
        report.flag("acyclic", "commit graph contains a cycle")

    for hid, log in sorted(stamp_logs.items()):
        for prev, cur in zip(log, log[1:]):
            if cur["ts"] <= prev["ts"]:
                report.flag(
                    "monotone",
                    f"header {hid}: ts {cur['ts']} does not exceed {prev['ts']}",
                    header=hid,
                    pair=[prev["ts"], cur["ts"]],
                )
    by_id = {v.id: v for v in dag.vertices}
    for (u, w, tag) in sorted(dag.edges):
        if by_id[u].ts >= by_id[w].ts:
            report.flag(
                "monotone",
                f"edge {u}->{w} ({tag}) violates timestamp order",
                edge=[u, w],
            )

    if origins is not None:
        for hid, log in sorted(stamp_logs.items()):
            expected = origins.get(hid)
            if expected is None:
                continue
            seen_transfers: list[tuple[str, str]] = []
            for i, record in enumerate(log):
                holder = record.get("holder")
                if holder is not None and holder != expected:
                    report.flag(
                        "single_writer",
                        f"header {hid} stamp {i} appended by {holder}, holder was {expected}",
                        header=hid,
                        index=i,
                    )
                if record["action"] == ActionKind.ACT_FORWARD.value and record.get("outcome") == "ok":
                    target = record.get("target")
                    if target:
                        seen_transfers.append((expected, target))
                        expected = target
            if transfers is not None and hid in transfers:
                if transfers[hid] != seen_transfers:
                    report.flag(
                        "single_writer",
                        f"header {hid}: recorded transfers disagree with forward commits",
                        header=hid,
                    )

    if commit_counts is not None:
        for hid, log in sorted(stamp_logs.items()):
            expected = commit_counts.get(hid, 0)
            if len(log) != expected:
                report.flag(
                    "commit_bounded",
                    f"header {hid} carries {len(log)} stamps for {expected} committed actions",
                    header=hid,
                )

    for hid, log in sorted(stamp_logs.items()):
        for i, record in enumerate(log):
            if record["action"] in _LOCAL_ONLY:
                report.flag(
                    "no_local_leak",
                    f"header {hid} stamp {i} leaks local action {record['action']}",
                    header=hid,
                    index=i,
                )
    return report


def verify_trace(records: list[dict]) -> tuple[GlobalDag, VerificationReport, TraceView]:
    """One-stop verification of a raw trace record list."""
    view = index_trace(records)
    dag = build_global_dag(view.stamp_logs, strict=False)
    report = verify(
        dag,
        view.stamp_logs,
        origins=view.origins,
        transfers=view.transfers,
        commit_counts=view.commit_counts,
    )
    return dag, report, view


def collapse_transport(dag: GlobalDag) -> GlobalDag:
    """Readability view that hides pure forwarding commits.

    Resource edges between kept vertices survive as-is; the append order is
    rebuilt over the remaining stamps of each header, which bridges over
    the hidden forwards."""
    kept = [v for v in dag.vertices if v.action != ActionKind.ACT_FORWARD.value]
    kept_ids = {v.id for v in kept}
    edges = {
        (u, w, tag)
        for (u, w, tag) in dag.edges
        if tag == EDGE_RESOURCE and u in kept_ids and w in kept_ids
    }
    by_header: dict[str, list[DagVertex]] = {}
    for v in kept:
        by_header.setdefault(v.header, []).append(v)
    for vertices in by_header.values():
        vertices.sort(key=lambda v: v.index)
        batches = _batches(vertices)
        for cur, nxt in zip(batches, batches[1:]):
            for u in cur:
                for w in nxt:
                    edges.add((u.id, w.id, EDGE_SEQUENCE))
    return GlobalDag(vertices=kept, edges=edges)


def export_dot(dag: GlobalDag, title: str = "commit_dag") -> str:
    """Deterministic DOT text; solid edges for append order, dashed for
    resource dependencies."""
    lines = [f"digraph {title} {{", "  rankdir=LR;"]
    for v in sorted(dag.vertices, key=lambda v: (v.header, v.index)):
        shape = "box" if v.outcome == "ok" else "octagon"
        lines.append(f'  "{v.id}" [label="{v.label()}" shape={shape}];')
    for (u, w, tag) in sorted(dag.edges):
        style = "solid" if tag == EDGE_SEQUENCE else "dashed"
        lines.append(f'  "{u}" -> "{w}" [style={style}];')
    lines.append("}")
    return "\n".join(lines) + "\n"
