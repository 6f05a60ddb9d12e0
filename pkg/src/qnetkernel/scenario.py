"""Scenario configuration: loading, validation, generators, run assembly.

Scenarios are plain JSON. A file is either a full scenario or a generator
stub ({"generator": "chain", ...}) that expands to one; both forms validate
to the same ScenarioConfig. Bundled scenarios ship as package data.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .core import EntanglementResource, ServiceIntent
from .errors import InvalidIntent, ParseError, ValidationError
from .kernel import EngineParams
from .mp import ALL_MPS, LinkConfig, link_key
from .sim import SimLimits, SimRun, Topology

BUNDLED = ("teleport_ayb", "teleport_ayb_lossy", "teleport_branch2", "chain_n")


@dataclass
class IntentSpec:
    intent: ServiceIntent
    origin: str
    submit_at: float = 0.0
    payload: tuple[str, ...] = ()


@dataclass
class ScenarioConfig:
    name: str
    seed: int
    topology: Topology
    intents: list[IntentSpec]
    initial_ftq: list[EntanglementResource] = field(default_factory=list)
    hints: dict[str, dict] = field(default_factory=dict)
    capabilities: dict[str, frozenset[str]] = field(default_factory=dict)
    engine: EngineParams = field(default_factory=EngineParams)
    limits: SimLimits = field(default_factory=SimLimits)
    raw: dict = field(default_factory=dict)


def _require(obj: dict, key: str, types, path: str):
    if key not in obj:
        raise ValidationError(f"{path}.{key}: missing")
    value = obj[key]
    if not isinstance(value, types):
        raise ValidationError(f"{path}.{key}: expected {types}, got {type(value).__name__}")
    return value


def _num(obj: dict, key: str, path: str, default=None, lo=None, hi=None):
    if key not in obj:
        if default is None:
            raise ValidationError(f"{path}.{key}: missing")
        return default
    value = obj[key]
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ValidationError(f"{path}.{key}: expected a number")
    if lo is not None and value < lo:
        raise ValidationError(f"{path}.{key}: {value} below {lo}")
    if hi is not None and value > hi:
        raise ValidationError(f"{path}.{key}: {value} above {hi}")
    return float(value)


def _pair(obj: dict, path: str) -> tuple[str, str]:
    nodes = _require(obj, "nodes", list, path)
    if len(nodes) != 2 or not all(isinstance(n, str) and n for n in nodes):
        raise ValidationError(f"{path}.nodes: expected two node names")
    return link_key(nodes[0], nodes[1])


def _classically_connected(topology: Topology, members: set[str]) -> bool:
    if not members:
        return True
    start = sorted(members)[0]
    seen = {start}
    frontier = [start]
    while frontier:
        node = frontier.pop()
        for nb in topology.classical_neighbors(node):
            if nb not in seen:
                seen.add(nb)
                frontier.append(nb)
    return members.issubset(seen)


def parse_scenario(data: dict, name_hint: str = "scenario") -> ScenarioConfig:
    """Validate a scenario object; error messages carry the field path."""
    if not isinstance(data, dict):
        raise ValidationError("scenario: expected a JSON object")
    if "generator" in data:
        data = expand_generator(data)
    name = data.get("name", name_hint)
    seed = int(_num(data, "seed", "scenario", default=0.0))

    nodes = _require(data, "nodes", list, "scenario")
    if not nodes or not all(isinstance(n, str) and n for n in nodes):
        raise ValidationError("scenario.nodes: expected non-empty node names")
    if len(set(nodes)) != len(nodes):
        raise ValidationError("scenario.nodes: duplicate node name")

    quantum_links: dict[tuple[str, str], LinkConfig] = {}
    for i, obj in enumerate(_require(data, "quantum_links", list, "scenario")):
        path = f"scenario.quantum_links[{i}]"
        key = _pair(obj, path)
        t_coh = obj.get("t_coh")
        quantum_links[key] = LinkConfig(
            a=key[0],
            b=key[1],
            p_gen=_num(obj, "p_gen", path, default=1.0, lo=0.0, hi=1.0),
            f_gen=_num(obj, "f_gen", path, default=1.0, lo=0.25, hi=1.0),
            tau_budget=_num(obj, "tau_budget", path, default=1.0, lo=0.0),
            t_coh=float("inf") if t_coh is None else _num(obj, "t_coh", path, lo=0.0),
            sync_delay=_num(obj, "sync_delay", path, default=0.001, lo=0.0),
            latency=_num(obj, "latency", path, default=0.001, lo=0.0),
        )

    classical_links: dict[tuple[str, str], float] = {}
    for i, obj in enumerate(_require(data, "classical_links", list, "scenario")):
        path = f"scenario.classical_links[{i}]"
        key = _pair(obj, path)
        classical_links[key] = _num(obj, "latency", path, default=0.001, lo=0.0)

    try:
        topology = Topology(
            nodes=tuple(nodes), quantum_links=quantum_links, classical_links=classical_links
        )
    except ValidationError as exc:
        raise ValidationError(f"scenario.topology: {exc}") from exc

    for key in quantum_links:
        if key not in classical_links:
            raise ValidationError(
                f"scenario.classical_links: quantum link {key[0]}-{key[1]} has no "
                "classical sibling for signaling"
            )

    initial_ftq: list[EntanglementResource] = []
    for i, obj in enumerate(data.get("initial_ftq", [])):
        path = f"scenario.initial_ftq[{i}]"
        key = _pair(obj, path)
        ent_id = _require(obj, "ent_id", str, path)
        if re.fullmatch(r"e\d+", ent_id):
            raise ValidationError(
                f"{path}.ent_id: {ent_id!r} collides with the simulator's id namespace (e<digits>)"
            )
        t_coh = obj.get("t_coh")
        initial_ftq.append(
            EntanglementResource(
                ent_id=ent_id,
                endpoints=frozenset(key),
                fidelity=_num(obj, "fidelity", path, lo=0.25, hi=1.0),
                created_at=0.0,
                expires_at=_num(obj, "expires_in", path, default=3600.0, lo=0.0),
                t_coh=float("inf") if t_coh is None else _num(obj, "t_coh", path, lo=0.0),
            )
        )
    if len({r.ent_id for r in initial_ftq}) != len(initial_ftq):
        raise ValidationError("scenario.initial_ftq: duplicate ent_id")

    hints = data.get("hints", {})
    if not isinstance(hints, dict):
        raise ValidationError("scenario.hints: expected an object")
    for node in hints:
        if node not in set(nodes):
            raise ValidationError(f"scenario.hints.{node}: unknown node")

    capabilities: dict[str, frozenset[str]] = {}
    for node, caps in data.get("capabilities", {}).items():
        if node not in set(nodes):
            raise ValidationError(f"scenario.capabilities.{node}: unknown node")
        caps = frozenset(caps)
        unknown = caps - ALL_MPS
        if unknown:
            raise ValidationError(f"scenario.capabilities.{node}: unknown MPs {sorted(unknown)}")
        capabilities[node] = caps

    intents: list[IntentSpec] = []
    for i, obj in enumerate(_require(data, "intents", list, "scenario")):
        path = f"scenario.intents[{i}]"
        participants = _require(obj, "participants", list, path)
        try:
            intent = ServiceIntent(
                service=_require(obj, "service", str, path),
                participants=tuple(participants),
                f_min=_num(obj, "f_min", path, default=0.5, lo=0.25, hi=1.0),
                tau_min=_num(obj, "tau_min", path, default=0.0, lo=0.0),
                policy=obj.get("policy", {}),
            )
        except InvalidIntent as exc:
            raise ValidationError(f"{path}: {exc}") from exc
        origin = _require(obj, "origin", str, path)
        if origin not in set(nodes):
            raise ValidationError(f"{path}.origin: unknown node {origin}")
        for p in intent.participants:
            if p not in set(nodes):
                raise ValidationError(f"{path}.participants: unknown node {p}")
        members = set(intent.participants) | {origin}
        if not _classically_connected(topology, members):
            raise ValidationError(
                f"{path}: participants and origin are not classically connected "
                "(signal route missing)"
            )
        payload = tuple(obj.get("payload", ()))
        known_ids = {r.ent_id for r in initial_ftq}
        for ent in payload:
            if ent not in known_ids:
                raise ValidationError(f"{path}.payload: unknown ent_id {ent}")
        intents.append(
            IntentSpec(
                intent=intent,
                origin=origin,
                submit_at=_num(obj, "submit_at", path, default=0.0, lo=0.0),
                payload=payload,
            )
        )

    eng = data.get("engine", {})
    engine = EngineParams(
        max_retries=int(_num(eng, "max_retries", "scenario.engine", default=16.0, lo=0.0)),
        signal_timeout=_num(eng, "signal_timeout", "scenario.engine", default=1.0, lo=0.0),
        link_pr_composer=eng.get("link_pr_composer", "pump"),
    )
    limits = SimLimits(
        max_events=int(_num(eng, "max_events", "scenario.engine", default=100_000.0, lo=1.0)),
        max_time=_num(eng, "max_time", "scenario.engine", default=3600.0, lo=0.0),
        decay_period=_num(eng, "decay_period", "scenario.engine", default=0.001, lo=0.0),
    )
    return ScenarioConfig(
        name=name,
        seed=seed,
        topology=topology,
        intents=intents,
        initial_ftq=initial_ftq,
        hints={k: dict(v) for k, v in hints.items()},
        capabilities=capabilities,
        engine=engine,
        limits=limits,
        raw=data,
    )


def load_scenario(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return parse_scenario(data, name_hint=path.stem)


def bundled_scenario(name: str) -> ScenarioConfig:
    if name not in BUNDLED:
        raise ParseError(f"unknown bundled scenario {name!r}; have {list(BUNDLED)}")
    text = resources.files("qnetkernel").joinpath(f"scenarios/{name}.json").read_text()
    return parse_scenario(json.loads(text), name_hint=name)


def resolve_scenario(ref: str | Path) -> ScenarioConfig:
    """Accept a filesystem path or a bundled scenario name."""
    path = Path(ref)
    if path.exists():
        return load_scenario(path)
    if str(ref) in BUNDLED:
        return bundled_scenario(str(ref))
    raise ParseError(f"{ref}: no such file or bundled scenario")


# -- generators --------------------------------------------------------------

def make_chain_config(
    n_nodes: int,
    seed: int = 0,
    p_gen: float = 1.0,
    f_gen: float = 0.99,
    f_min: float = 0.85,
    randomize: bool = False,
    max_retries: int = 16,
) -> dict:
    """Linear repeater chain N0-...-N{k-1} with a single end-to-end teleport.

    Defaults leave enough fidelity headroom for the six swaps of an 8-node
    chain to stay above the end-to-end target. With randomize=True,
    per-link physics are drawn from a generator seeded separately from the
    run seed, so topologies vary while runs stay reproducible.
    """
    if n_nodes < 2:
        raise ValidationError("chain.n_nodes: need at least 2 nodes")
    gen = random.Random(seed ^ 0x5EED)
    names = [f"N{i}" for i in range(n_nodes)]
    qlinks = []
    clinks = []
    for a, b in zip(names, names[1:]):
        if randomize:
            link_p = min(1.0, p_gen + gen.uniform(0.0, 1.0 - p_gen))
            link_f = gen.uniform(max(f_gen, 0.99), 0.999)
            latency = gen.uniform(0.001, 0.01)
        else:
            link_p, link_f, latency = p_gen, f_gen, 0.005
        qlinks.append(
            {
                "nodes": [a, b],
                "p_gen": link_p,
                "f_gen": link_f,
                "tau_budget": 10.0,
                "t_coh": 200.0,
                "sync_delay": 0.001,
                "latency": latency,
            }
        )
        clinks.append({"nodes": [a, b], "latency": latency})
    return {
        "name": f"chain_{n_nodes}",
        "seed": seed,
        "nodes": names,
        "quantum_links": qlinks,
        "classical_links": clinks,
        "intents": [
            {
                "service": "TELEPORT",
                "participants": [names[0], names[-1]],
                "f_min": f_min,
                "tau_min": 0.0,
                "origin": names[0],
                "submit_at": 0.0,
            }
        ],
        "engine": {"max_retries": max_retries, "signal_timeout": 5.0},
    }


def expand_generator(data: dict) -> dict:
    kind = data.get("generator")
    if kind != "chain":
        raise ValidationError(f"scenario.generator: unknown generator {kind!r}")
    params = data.get("params", {})
    if not isinstance(params, dict):
        raise ValidationError("scenario.params: expected an object")
    try:
        expanded = make_chain_config(
            n_nodes=int(params.get("n_nodes", 5)),
            seed=int(params.get("seed", data.get("seed", 0))),
            p_gen=float(params.get("p_gen", 1.0)),
            f_gen=float(params.get("f_gen", 0.97)),
            f_min=float(params.get("f_min", 0.9)),
            randomize=bool(params.get("randomize", False)),
            max_retries=int(params.get("max_retries", 16)),
        )
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"scenario.params: {exc}") from exc
    for passthrough in ("name", "description"):
        if passthrough in data:
            expanded[passthrough] = data[passthrough]
    return expanded


# -- run assembly -------------------------------------------------------------

def build_run(
    config: ScenarioConfig,
    seed: int | None = None,
    no_hints: bool = False,
    verbose: bool = False,
) -> SimRun:
    """Instantiate a simulation from a validated scenario, submit its
    intents, and return it ready for run_until_quiescent()."""
    run = SimRun(
        topology=config.topology,
        seed=config.seed if seed is None else seed,
        engine=config.engine,
        limits=config.limits,
        hints={} if no_hints else config.hints,
        capabilities=config.capabilities,
        verbose=verbose,
        scenario_name=config.name,
    )
    for resource in config.initial_ftq:
        run.seed_resource(resource)
    for spec in config.intents:
        run.submit_intent(spec.origin, spec.intent, payload_resources=spec.payload, at=spec.submit_at)
    return run
