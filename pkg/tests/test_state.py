"""Node-state operations: inventory bookkeeping, decay, clocks, hints."""

import math

import pytest

from qnetkernel.core import EntanglementResource
from qnetkernel.errors import DuplicateEntId, Expired, ForeignResource, NotFound
from qnetkernel.state import (
    Hints,
    QuantumForwardingTable,
    best_resource,
    decay_sweep,
    fidelity_at,
    ftq_consume,
    ftq_insert,
    lamport_merge,
)


def pair(ent_id, a, b, fidelity=0.9, created=0.0, expires=10.0, t_coh=math.inf):
    return EntanglementResource(
        ent_id=ent_id, endpoints=frozenset({a, b}), fidelity=fidelity,
        created_at=created, expires_at=expires, t_coh=t_coh,
    )


class TestInsertConsume:
    def test_insert_then_lookup(self):
        ftq = QuantumForwardingTable(owner="A")
        ftq_insert(ftq, pair("e1", "A", "Y"))
        assert "e1" in ftq.entries

    def test_foreign_resource_rejected(self):
        ftq = QuantumForwardingTable(owner="A")
        with pytest.raises(ForeignResource):
            ftq_insert(ftq, pair("e1", "Y", "B"))

    def test_duplicate_rejected(self):
        ftq = QuantumForwardingTable(owner="A")
        ftq_insert(ftq, pair("e1", "A", "Y"))
        with pytest.raises(DuplicateEntId):
            ftq_insert(ftq, pair("e1", "A", "Y"))

    def test_consume_removes_and_returns(self):
        ftq = QuantumForwardingTable(owner="B")
        ftq_insert(ftq, pair("e1", "A", "B"))
        got = ftq_consume(ftq, "e1", now=1.0)
        assert got.ent_id == "e1"
        assert not ftq.entries

    def test_consume_unknown(self):
        with pytest.raises(NotFound):
            ftq_consume(QuantumForwardingTable(owner="B"), "nope", now=0.0)

    def test_consume_expired(self):
        ftq = QuantumForwardingTable(owner="B")
        ftq_insert(ftq, pair("e1", "A", "B", expires=1.0))
        with pytest.raises(Expired):
            ftq_consume(ftq, "e1", now=2.0)


class TestBestResource:
    def test_picks_max_fidelity_above_threshold(self):
        ftq = QuantumForwardingTable(owner="A")
        ftq_insert(ftq, pair("e1", "A", "Y", fidelity=0.8))
        ftq_insert(ftq, pair("e2", "A", "Y", fidelity=0.95))
        assert best_resource(ftq, "Y", 0.9, now=0.0).ent_id == "e2"

    def test_none_when_all_below(self):
        ftq = QuantumForwardingTable(owner="A")
        ftq_insert(ftq, pair("e1", "A", "Y", fidelity=0.8))
        assert best_resource(ftq, "Y", 0.9, now=0.0) is None

    def test_tie_breaks_to_smaller_ent_id_both_orders(self):
        for order in (("e1", "e2"), ("e2", "e1")):
            ftq = QuantumForwardingTable(owner="A")
            for ent in order:
                ftq_insert(ftq, pair(ent, "A", "Y", fidelity=0.9))
            assert best_resource(ftq, "Y", 0.5, now=0.0).ent_id == "e1"

    def test_ignores_other_peers_and_expired(self):
        ftq = QuantumForwardingTable(owner="Y")
        ftq_insert(ftq, pair("e1", "Y", "B", fidelity=0.99, expires=1.0))
        ftq_insert(ftq, pair("e2", "A", "Y", fidelity=0.99))
        assert best_resource(ftq, "B", 0.5, now=2.0) is None


class TestDecaySweep:
    def test_boundary_removal_inclusive(self):
        ftq = QuantumForwardingTable(owner="A")
        ftq_insert(ftq, pair("e1", "A", "Y", expires=10.0))
        decay_sweep(ftq, now=10.0)
        assert not ftq.entries

    def test_infinite_coherence_unchanged(self):
        ftq = QuantumForwardingTable(owner="A")
        ftq_insert(ftq, pair("e1", "A", "Y", fidelity=1.0, expires=100.0))
        decay_sweep(ftq, now=50.0)
        assert ftq.entries["e1"].fidelity == 1.0

    def test_decay_rebases_to_closed_form(self):
        ftq = QuantumForwardingTable(owner="A")
        ftq_insert(ftq, pair("e1", "A", "Y", fidelity=0.9, expires=100.0, t_coh=7.0))
        decay_sweep(ftq, now=7.0)
        want = 0.25 + 0.65 * math.exp(-1.0)
        assert ftq.entries["e1"].fidelity == pytest.approx(want, abs=1e-12)

    def test_sweep_composition_matches_direct_decay(self):
        direct = QuantumForwardingTable(owner="A")
        stepped = QuantumForwardingTable(owner="A")
        for ftq in (direct, stepped):
            ftq_insert(ftq, pair("e1", "A", "Y", fidelity=0.95, expires=1000.0, t_coh=3.0))
        for now in (1.0, 2.5, 4.0):
            decay_sweep(stepped, now=now)
        assert stepped.entries["e1"].fidelity == pytest.approx(
            fidelity_at(direct.entries["e1"], 4.0), rel=1e-12
        )

    def test_no_expired_entry_survives(self):
        ftq = QuantumForwardingTable(owner="A")
        for i, expires in enumerate((1.0, 5.0, 9.0, 20.0)):
            ftq_insert(ftq, pair(f"e{i}", "A", "Y", expires=expires))
        decay_sweep(ftq, now=9.0)
        assert all(r.expires_at > 9.0 for r in ftq.entries.values())


class TestClockAndHints:
    @pytest.mark.parametrize("local,received,want", [(3, 7, 8), (7, 3, 8), (0, 0, 1)])
    def test_lamport_merge(self, local, received, want):
        assert lamport_merge(local, received) == want

    def test_hints_default_conservative(self):
        assert not Hints().allow_parallel_gen()
        assert Hints().priority_class() == 0

    def test_unknown_hint_keys_ignored(self):
        hints = Hints(entries={"bogus": True, "allow_parallel_gen": True, "priority_class": 2})
        assert hints.allow_parallel_gen()
        assert hints.priority_class() == 2
