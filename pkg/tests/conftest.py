import pytest
from hypothesis import settings

from qnetkernel.core import ServiceIntent
from qnetkernel.mp import LinkConfig
from qnetkernel.scenario import build_run, bundled_scenario
from qnetkernel.sim import SimRun, Topology

settings.register_profile("repo", max_examples=60, derandomize=True)
settings.load_profile("repo")


def ayb_topology(
    p_gen_ay: float = 1.0,
    p_gen_yb: float = 1.0,
    f_gen: float = 0.97,
    tau_budget: float = 2.0,
    t_coh: float = 50.0,
) -> Topology:
    links = {
        ("A", "Y"): LinkConfig(a="A", b="Y", p_gen=p_gen_ay, f_gen=f_gen,
                               tau_budget=tau_budget, t_coh=t_coh,
                               sync_delay=0.001, latency=0.005),
        ("B", "Y"): LinkConfig(a="B", b="Y", p_gen=p_gen_yb, f_gen=f_gen,
                               tau_budget=tau_budget, t_coh=t_coh,
                               sync_delay=0.001, latency=0.005),
    }
    classical = {("A", "Y"): 0.005, ("B", "Y"): 0.005}
    return Topology(nodes=("A", "B", "Y"), quantum_links=links, classical_links=classical)


def teleport_intent(f_min: float = 0.9, tau_min: float = 0.0) -> ServiceIntent:
    return ServiceIntent(service="TELEPORT", participants=("A", "B"), f_min=f_min, tau_min=tau_min)


def stamp_records(trace: list[dict]) -> list[dict]:
    return [r for r in trace if r.get("type") == "stamp"]


def stamp_tuples(trace: list[dict]) -> list[tuple]:
    """(action, support, outcome, target) in append order, for comparisons."""
    return [
        (r["action"], tuple(r["support"]), r["outcome"], r.get("target"))
        for r in stamp_records(trace)
    ]


@pytest.fixture
def golden_run() -> SimRun:
    run = build_run(bundled_scenario("teleport_ayb"))
    run.run_until_quiescent()
    return run


@pytest.fixture
def fresh_sim() -> SimRun:
    return SimRun(ayb_topology(), seed=7)
