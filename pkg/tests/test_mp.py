"""Micro-protocol primitives and their simulated physics."""

import random

import pytest

from conftest import ayb_topology
from qnetkernel.core import EntanglementResource, MetaHeader, QuantumPacket, ServiceIntent
from qnetkernel.errors import Expired, NoClassicalRoute, NotHolder, NotNeighbor, ResourceMissing
from qnetkernel.mp import (
    LinkConfig,
    invoke_fw,
    invoke_gen,
    invoke_qp,
    invoke_sig,
    invoke_syn,
    qp_pauli,
    qp_purify,
    qp_swap_bsm,
)
from qnetkernel.sim import SimRun


def cfg(p_gen=1.0, f_gen=0.95, sync_delay=0.001):
    return LinkConfig(a="A", b="Y", p_gen=p_gen, f_gen=f_gen, tau_budget=2.0,
                      t_coh=50.0, sync_delay=sync_delay, latency=0.005)


def pair(ent_id, a, b, fidelity=0.95, created=0.0, expires=10.0):
    return EntanglementResource(ent_id=ent_id, endpoints=frozenset({a, b}),
                                fidelity=fidelity, created_at=created, expires_at=expires)


class TestGen:
    def test_certain_success(self):
        rng = random.Random(0)
        for _ in range(50):
            r = invoke_gen(cfg(p_gen=1.0), rng, now=0.0, ent_id="e1")
            assert r.success and r.produced.fidelity == 0.95

    def test_certain_failure(self):
        rng = random.Random(0)
        assert not any(invoke_gen(cfg(p_gen=0.0), rng, 0.0, "e1").success for _ in range(50))

    def test_monte_carlo_rate(self):
        rng = random.Random(1234)
        hits = sum(invoke_gen(cfg(p_gen=0.5), rng, 0.0, "e").success for _ in range(10_000))
        assert abs(hits / 10_000 - 0.5) <= 0.02

    def test_deadline_from_attempt_time(self):
        r = invoke_gen(cfg(), random.Random(0), now=5.0, ent_id="e1")
        assert r.produced.created_at == pytest.approx(5.001)
        assert r.produced.expires_at == pytest.approx(5.001 + 2.0)


class TestSynAndLocalOps:
    def test_syn_is_pure_delay(self):
        assert invoke_syn(cfg(sync_delay=0.001)).elapsed == 0.001
        assert invoke_syn(cfg(sync_delay=0.0)).elapsed == 0.0

    def test_syn_elapsed_additive(self):
        total = sum(invoke_syn(cfg(sync_delay=0.002)).elapsed for _ in range(3))
        assert total == pytest.approx(0.006)

    def test_purify_requires_same_link(self):
        with pytest.raises(ResourceMissing):
            qp_purify(pair("e1", "A", "Y"), pair("e2", "Y", "B"), random.Random(0), 0.0, "e3")

    def test_purify_rejects_expired(self):
        with pytest.raises(Expired):
            qp_purify(pair("e1", "A", "Y", expires=1.0), pair("e2", "A", "Y"),
                      random.Random(0), 2.0, "e3")

    def test_purify_success_produces_better_pair(self):
        rng = random.Random(3)
        outcomes = [qp_purify(pair("e1", "A", "Y", fidelity=0.8),
                              pair("e2", "A", "Y", fidelity=0.8), rng, 0.0, "e3")
                    for _ in range(200)]
        produced = [o.produced for o in outcomes if o.success]
        assert produced, "some rounds must succeed"
        assert all(p.fidelity > 0.8 for p in produced)
        rate = len(produced) / len(outcomes)
        assert 0.6 < rate < 0.9  # p_succ(0.8, 0.8) ~ 0.72

    def test_swap_produces_far_pair_with_bits(self):
        r = qp_swap_bsm(pair("e1", "A", "Y", fidelity=0.96),
                        pair("e2", "Y", "B", fidelity=0.96),
                        "Y", random.Random(0), 0.0, "e3")
        assert r.produced.endpoints == frozenset({"A", "B"})
        assert r.produced.fidelity == pytest.approx(0.9221333333333334, abs=1e-12)
        assert tuple(r.side_data) in {(x, z) for x in (0, 1) for z in (0, 1)}

    def test_swap_needs_incident_pairs(self):
        with pytest.raises(ResourceMissing):
            qp_swap_bsm(pair("e1", "A", "Y"), pair("e2", "A", "Y"), "Y",
                        random.Random(0), 0.0, "e3")

    def test_pauli_identity_for_zero_bits(self):
        assert qp_pauli((0, 0)).success
        assert qp_pauli((1, 0)).success

    def test_qp_dispatcher(self):
        assert invoke_qp("pauli", bits=(0, 1)).success
        r = invoke_qp("bsm", rng=random.Random(0))
        assert tuple(r.side_data) in {(x, z) for x in (0, 1) for z in (0, 1)}
        with pytest.raises(ResourceMissing):
            invoke_qp("teleport_everything")

    def test_qp_purify_with_one_pair_only(self):
        with pytest.raises(ResourceMissing):
            invoke_qp("purify", inputs=(pair("e1", "A", "Y"),),
                      rng=random.Random(0), now=0.0, ent_id="e2")

    def test_qp_dispatcher_routes_swap(self):
        r = invoke_qp(
            "swap_bsm",
            inputs=(pair("e1", "A", "Y"), pair("e2", "Y", "B")),
            middle="Y", rng=random.Random(0), now=0.0, ent_id="e3",
        )
        assert r.produced.endpoints == frozenset({"A", "B"})


class TestSigAndFw:
    def test_sig_single_hop_latency(self, fresh_sim):
        at = invoke_sig(fresh_sim, "Y", "B", {"kind": "x", "lamport": 1}, now=1.0)
        assert at == pytest.approx(1.005)

    def test_sig_two_hop_latency_additive(self, fresh_sim):
        at = invoke_sig(fresh_sim, "B", "A", {"kind": "x", "lamport": 1}, now=0.0)
        assert at == pytest.approx(0.010)

    def test_sig_unreachable(self):
        topo = ayb_topology()
        run = SimRun(topo, seed=0)
        run.topology.classical_links.clear()
        with pytest.raises(NoClassicalRoute):
            invoke_sig(run, "A", "B", {"kind": "x", "lamport": 1}, now=0.0)

    def _packet(self, holder):
        intent = ServiceIntent(service="TELEPORT", participants=("A", "B"), f_min=0.9, tau_min=0.0)
        return QuantumPacket(header=MetaHeader(intent=intent, holder=holder, hid="h1"))

    def test_fw_transfers_authority_and_schedules(self, fresh_sim):
        sent, at = invoke_fw(fresh_sim, "A", "Y", self._packet("A"),
                             fresh_sim.link_config("A", "Y"), now=0.0)
        assert sent.header.holder == "Y"
        assert at == pytest.approx(0.005)
        assert len(fresh_sim._queue) == 1

    def test_fw_rejects_non_neighbor(self, fresh_sim):
        with pytest.raises(NotNeighbor):
            invoke_fw(fresh_sim, "A", "B", self._packet("A"),
                      fresh_sim.link_config("A", "Y"), now=0.0)

    def test_fw_rejects_non_holder(self, fresh_sim):
        with pytest.raises(NotHolder):
            invoke_fw(fresh_sim, "A", "Y", self._packet("Y"),
                      fresh_sim.link_config("A", "Y"), now=0.0)
