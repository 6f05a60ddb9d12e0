"""Fidelity algebra against the independent density-matrix oracle."""

import math
import random

import pytest
from hypothesis import given, strategies as st

from oracles import purify_oracle, swap_oracle
from qnetkernel.errors import DomainError
from qnetkernel.fidelity import decayed_fidelity, purify_fidelity, swap_fidelity

fidelities = st.floats(min_value=0.25, max_value=1.0, allow_nan=False)


class TestPurify:
    def test_perfect_pairs_stay_perfect(self):
        assert purify_fidelity(1.0, 1.0) == (1.0, 1.0)

    def test_equal_inputs_frozen_value(self):
        # expected values computed with the density-matrix oracle
        f_out, p_succ = purify_fidelity(0.7, 0.7)
        assert f_out == pytest.approx(0.7352941176470588, abs=1e-12)
        assert p_succ == pytest.approx(0.68, abs=1e-12)

    def test_mixed_floor_is_fixed_point(self):
        f_out, p_succ = purify_fidelity(0.25, 0.25)
        assert f_out == pytest.approx(0.25, abs=1e-12)
        assert p_succ == pytest.approx(0.5, abs=1e-12)

    def test_matches_oracle_on_seeded_pairs(self):
        rng = random.Random(42)
        for _ in range(20):
            f1 = rng.uniform(0.25, 1.0)
            f2 = rng.uniform(0.25, 1.0)
            got_f, got_p = purify_fidelity(f1, f2)
            want_f, want_p = purify_oracle(f1, f2)
            assert abs(got_f - want_f) <= 1e-12
            assert abs(got_p - want_p) <= 1e-12

    def test_improves_above_half(self):
        # strict gain across an even grid of symmetric inputs
        for i in range(1, 51):
            f = 0.5 + i * (1.0 - 0.5) / 52
            f_out, _ = purify_fidelity(f, f)
            assert f_out > f

    @pytest.mark.parametrize("bad", [0.0, 0.2499, 1.0001, -1.0])
    def test_domain(self, bad):
        with pytest.raises(DomainError):
            purify_fidelity(bad, 0.9)
        with pytest.raises(DomainError):
            purify_fidelity(0.9, bad)

    @given(fidelities, fidelities)
    def test_outputs_stay_in_domain(self, f1, f2):
        f_out, p_succ = purify_fidelity(f1, f2)
        assert 0.25 - 1e-12 <= f_out <= 1.0 + 1e-12
        assert 0.0 < p_succ <= 1.0 + 1e-12


class TestSwap:
    def test_perfect(self):
        assert swap_fidelity(1.0, 1.0) == 1.0

    def test_identity_absorption(self):
        for f in (0.25, 0.5, 0.82, 1.0):
            assert swap_fidelity(1.0, f) == pytest.approx(f, abs=1e-15)

    def test_frozen_value(self):
        assert swap_fidelity(0.9, 0.9) == pytest.approx(0.8133333333333334, abs=1e-12)

    def test_matches_oracle_on_seeded_pairs(self):
        rng = random.Random(7)
        for _ in range(20):
            f1 = rng.uniform(0.25, 1.0)
            f2 = rng.uniform(0.25, 1.0)
            assert abs(swap_fidelity(f1, f2) - swap_oracle(f1, f2)) <= 1e-12

    @given(fidelities, fidelities)
    def test_symmetric_and_bounded(self, f1, f2):
        out = swap_fidelity(f1, f2)
        assert out == pytest.approx(swap_fidelity(f2, f1), abs=1e-15)
        assert out <= max(f1, f2) + 1e-12
        assert out >= 0.25 - 1e-12

    def test_domain(self):
        with pytest.raises(DomainError):
            swap_fidelity(0.1, 0.9)


class TestDecay:
    def test_no_time_no_decay(self):
        assert decayed_fidelity(0.9, 0.0, 10.0) == 0.9

    def test_infinite_coherence(self):
        assert decayed_fidelity(1.0, 1e9, math.inf) == 1.0

    def test_one_coherence_time(self):
        # 0.25 + 0.65/e, evaluated independently
        want = 0.25 + 0.65 * math.exp(-1.0)
        assert decayed_fidelity(0.9, 10.0, 10.0) == pytest.approx(want, abs=1e-15)
        assert decayed_fidelity(0.9, 10.0, 10.0) == pytest.approx(0.4891216367614375, abs=1e-12)

    def test_monotone_toward_floor(self):
        values = [decayed_fidelity(0.97, dt, 5.0) for dt in (0.0, 1.0, 5.0, 50.0, 5000.0)]
        assert values == sorted(values, reverse=True)
        assert values[-1] == pytest.approx(0.25, abs=1e-9)
