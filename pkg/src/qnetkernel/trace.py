"""Trace stream helpers: JSON-lines encoding and structured views.

A trace is an ordered list of flat JSON records. Stamp records carry the
stable field names (action, support, ts, ent_ids, outcome, meta, holder);
intent, transfer, commit and disposition records carry the bookkeeping the
verifier replays.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import ParseError


def dump_jsonl(records: list[dict]) -> str:
    lines = [json.dumps(r, sort_keys=True, separators=(",", ":")) for r in records]
    return "\n".join(lines) + ("\n" if lines else "")


def parse_jsonl(text: str) -> list[dict]:
    records = []
    for i, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"line {i}: {exc}") from exc
        if not isinstance(record, dict):
            raise ParseError(f"line {i}: expected an object")
        records.append(record)
    return records


@dataclass
class TraceView:
    """Trace indexed the way the verifier wants it."""

    stamp_logs: dict[str, list[dict]] = field(default_factory=dict)
    origins: dict[str, str] = field(default_factory=dict)
    transfers: dict[str, list[tuple[str, str]]] = field(default_factory=dict)
    commit_counts: dict[str, int] = field(default_factory=dict)
    dispositions: dict[str, str] = field(default_factory=dict)
    records: list[dict] = field(default_factory=list)


def index_trace(records: list[dict]) -> TraceView:
    view = TraceView(records=records)
    for record in records:
        kind = record.get("type")
        hid = record.get("header", "")
        if kind == "stamp":
            view.stamp_logs.setdefault(hid, []).append(record)
        elif kind == "intent":
            view.origins[hid] = record["origin"]
        elif kind == "transfer":
            view.transfers.setdefault(hid, []).append((record["from"], record["to"]))
        elif kind == "commit":
            view.commit_counts[hid] = view.commit_counts.get(hid, 0) + 1
        elif kind == "disposition":
            view.dispositions[hid] = record["value"]
    return view
