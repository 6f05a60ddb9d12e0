"""qnetkernel: deterministic simulator for commit-stamped entanglement
services over quantum network overlays, plus the emergent commit-graph
verifier, an HTTP service, and a CLI client."""

__version__ = "0.1.0"

from .core import (
    ActionKind,
    EntanglementResource,
    MetaHeader,
    QuantumPacket,
    ServiceIntent,
    Stamp,
    append_stamp,
    read_header,
    transfer_authority,
)
from .dag import GlobalDag, VerificationReport, build_global_dag, export_dot, verify, verify_trace
from .scenario import ScenarioConfig, build_run, load_scenario, make_chain_config
from .sim import SimRun, Topology, build_summary

__all__ = [
    "ActionKind",
    "EntanglementResource",
    "GlobalDag",
    "MetaHeader",
    "QuantumPacket",
    "ScenarioConfig",
    "ServiceIntent",
    "SimRun",
    "Stamp",
    "Topology",
    "VerificationReport",
    "append_stamp",
    "build_global_dag",
    "build_run",
    "build_summary",
    "export_dot",
    "load_scenario",
    "make_chain_config",
    "read_header",
    "transfer_authority",
    "verify",
    "verify_trace",
]
