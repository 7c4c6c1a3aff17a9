import itertools
import json
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import noiseless_outcome
from qss_sim.noise import ChannelModel
from qss_sim.protocol import (
    TRANSCRIPT_SCHEMA,
    PartyChoice,
    ProtocolConfig,
    RoundTranscript,
    SubsetError,
    basis_select,
    correction_c,
    distributor_key,
    execute_round,
    load_session,
    participants_key,
    round_rng,
    run_round,
    run_session,
    security_subset,
)


def choices_of(xs, ys):
    return tuple(PartyChoice(x, y) for x, y in zip(xs, ys))


def fixed_round(d, xs, ys, seed=0):
    order = tuple(range(2, len(xs) + 1))
    return execute_round(d, choices_of(xs, ys), order, np.random.default_rng(seed))


class TestBasisAndCorrection:
    @pytest.mark.parametrize("ys,d,J", [((1, 1, 0, 1), 2, 1), ((0, 2, 2), 3, 1), ((1, 2, 0), 3, 0)])
    def test_basis_select(self, ys, d, J):
        assert basis_select(ys, d) == J

    def test_correction_qubit_example(self):
        # oracle: dense Y_2 product contains exactly two surplus X_2 factors
        J, _, C_oracle = noiseless_outcome(2, (1, 0, 1, 1), (1, 1, 0, 1))
        assert (J, C_oracle) == (1, 2)
        assert correction_c((1, 1, 0, 1), 1, 2) == 2

    @pytest.mark.parametrize("ys", [(0, 0, 0), (1, 2, 2), (2, 2, 2), (1, 0, 1)])
    def test_correction_odd_is_zero(self, ys):
        assert correction_c(ys, basis_select(ys, 3), 3) == 0

    def test_correction_all_zero(self):
        assert correction_c((0, 0, 0, 0), 0, 2) == 0

    def test_correction_requires_even_total(self):
        with pytest.raises(ValueError):
            correction_c((1, 0, 0), 0, 2)


class TestKeys:
    def test_distributor_key_examples(self):
        assert distributor_key(1, 1, 2, 2) == 0
        assert distributor_key(2, 2, 0, 3) == 0
        assert distributor_key(4, 4, 0, 5) == 0

    def test_participants_key_examples(self):
        assert participants_key((0, 1, 1), 2) == 0
        assert participants_key((1, 2), 3) == 0


class TestRunRound:
    def test_qubit_example(self):
        xs, ys = (1, 0, 1, 1), (1, 1, 0, 1)
        assert noiseless_outcome(2, xs, ys) == (1, 1, 2)
        t = fixed_round(2, xs, ys)
        assert (t.J, t.C, t.a) == (1, 2, 1)
        assert t.distributor_key_dit == t.participants_key_dit == 0

    def test_qutrit_example(self):
        xs, ys = (2, 1, 2), (0, 2, 2)
        J, a, _ = noiseless_outcome(3, xs, ys)
        assert (J, a) == (1, 2)
        t = fixed_round(3, xs, ys)
        assert (t.J, t.C, t.a) == (1, 0, 2)
        assert t.distributor_key_dit == t.participants_key_dit == 0

    @pytest.mark.parametrize("d,N", [(2, 3), (3, 4), (5, 3), (7, 3)])
    def test_identity_round(self, d, N):
        t = fixed_round(d, [0] * N, [0] * N)
        assert t.a == 0 and t.J == 0 and t.C == 0

    @pytest.mark.parametrize("d,N", [(2, 4), (3, 3)])
    def test_exhaustive_against_oracle(self, d, N):
        for tup in itertools.product(range(d * d), repeat=N):
            xs = [v // d for v in tup]
            ys = [v % d for v in tup]
            J, a, C = noiseless_outcome(d, xs, ys)
            t = fixed_round(d, xs, ys)
            assert (t.J, t.a, t.C) == (J, a, C)
            assert t.distributor_key_dit == t.participants_key_dit
            assert (sum(xs) + t.C) % d == t.a
            assert t.valid

    @settings(max_examples=100, deadline=None)
    @given(d=st.sampled_from([2, 3, 5, 7]), N=st.integers(3, 8), seed=st.integers(0, 2**32))
    def test_noiseless_rounds_agree(self, d, N, seed):
        cfg = ProtocolConfig(d=d, N=N, rounds=1)
        t = run_round(cfg, np.random.default_rng(seed))
        xs = [c.x for c in t.choices]
        assert t.J == sum(c.y for c in t.choices) % d
        assert (sum(xs) + t.C) % d == t.a
        assert t.distributor_key_dit == t.participants_key_dit
        assert sorted(t.broadcast_order) == list(range(2, N + 1))

    def test_round_is_seed_deterministic(self):
        cfg = ProtocolConfig(d=3, N=5, rounds=1, channel=ChannelModel(0.9))
        assert run_round(cfg, round_rng(3, 17)) == run_round(cfg, round_rng(3, 17))


class TestSecuritySubset:
    @staticmethod
    def transcripts_with_last(lasts, N=3):
        out = []
        for last in lasts:
            others = [p for p in range(2, N + 1) if p != last]
            out.append(RoundTranscript(2, N, choices_of([0] * N, [0] * N), tuple(others + [last]), 0, 0, 0, 0, 0))
        return out

    def test_covers_every_participant(self, rng):
        ts = self.transcripts_with_last([2] * 40 + [3])
        subset = security_subset(ts, 0.1, rng)
        assert {ts[i].last_broadcaster for i in subset} == {2, 3}
        assert 40 in subset

    def test_fails_for_never_last(self, rng):
        ts = self.transcripts_with_last([2] * 30)
        with pytest.raises(SubsetError, match="participant 3") as err:
            security_subset(ts, 0.1, rng)
        assert err.value.participant == 3

    def test_size(self, rng):
        ts = self.transcripts_with_last([2, 3] * 50)
        assert len(security_subset(ts, 0.1, rng)) >= 10

    def test_too_few_rounds(self, rng):
        with pytest.raises(ValueError):
            security_subset(self.transcripts_with_last([2], N=4), 0.5, rng)

    @settings(max_examples=40, deadline=None)
    @given(N=st.integers(3, 10), seed=st.integers(0, 2**31))
    def test_subset_policy_property(self, N, seed):
        cfg = ProtocolConfig(d=2, N=N, rounds=60, seed=seed)
        ts = [run_round(cfg, round_rng(seed, i)) for i in range(60)]
        lasts = {t.last_broadcaster for t in ts}
        rng = np.random.default_rng(seed)
        if lasts == set(range(2, N + 1)):
            subset = security_subset(ts, 0.1, rng)
            assert {ts[i].last_broadcaster for i in subset} == lasts
            assert len(subset) >= math.ceil(0.1 * 60)
        else:
            with pytest.raises(SubsetError):
                security_subset(ts, 0.1, rng)


class TestSession:
    @pytest.mark.parametrize("seed", [0, 1, 99])
    def test_noiseless_keys_identical(self, seed):
        s = run_session(ProtocolConfig(d=3, N=4, rounds=200, seed=seed))
        assert s.mismatch_count == 0
        assert s.distributor_key == s.participants_key
        assert len(s.distributor_key) == 200

    def test_key_length_and_capacity(self):
        s = run_session(ProtocolConfig(d=3, N=3, rounds=100, seed=4))
        assert len(s.distributor_key) == 100
        assert len(s.distributor_key) * math.log2(3) == pytest.approx(158.496, abs=1e-3)

    def test_keys_exclude_checked_rounds(self):
        s = run_session(ProtocolConfig(d=2, N=5, rounds=150, seed=8))
        assert not set(s.checked_subset) & set(s.key_rounds)
        assert len(s.key_rounds) == len(s.distributor_key) == 150
        assert [s.transcripts[i].distributor_key_dit for i in s.key_rounds] == s.distributor_key

    def test_half_fidelity_mismatch_rate(self):
        s = run_session(ProtocolConfig(d=2, N=3, rounds=10_000, channel=ChannelModel(0.5), seed=2))
        rate = np.mean(np.array(s.distributor_key) != np.array(s.participants_key))
        assert abs(rate - 0.5) < 0.05

    def test_key_uniformity(self):
        for d in (2, 3):
            s = run_session(ProtocolConfig(d=d, N=3, rounds=10_000, seed=d))
            freq = Counter(s.distributor_key)
            for v in range(d):
                assert abs(freq[v] / 10_000 - 1 / d) < 0.02

    def test_determinism(self):
        cfg = ProtocolConfig(d=3, N=4, rounds=300, channel=ChannelModel(0.9), seed=123)
        assert run_session(cfg).dumps() == run_session(cfg).dumps()

    def test_parallel_matches_serial(self):
        cfg = ProtocolConfig(d=2, N=6, rounds=300, channel=ChannelModel(0.95), seed=5)
        with ThreadPoolExecutor(4) as pool:
            assert run_session(cfg, executor=pool).dumps() == run_session(cfg).dumps()

    def test_all_rounds_valid(self):
        s = run_session(ProtocolConfig(d=2, N=10, rounds=100, seed=1))
        assert all(t.valid for t in s.transcripts)


class TestConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [dict(N=2), dict(rounds=0), dict(d=4), dict(security_fraction=0.0), dict(security_fraction=1.0),
         dict(d=3, channel=ChannelModel(0.2))],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            ProtocolConfig(**kwargs)


class TestTranscriptJson:
    def test_schema_and_integers(self):
        s = run_session(ProtocolConfig(d=3, N=3, rounds=30, seed=3))
        doc = json.loads(s.dumps())
        assert doc["schema"] == TRANSCRIPT_SCHEMA
        assert set(doc) == {"schema", "config", "transcripts", "keys", "checks"}

        def no_floats(obj):
            if isinstance(obj, float):
                return False
            if isinstance(obj, dict):
                return all(no_floats(v) for v in obj.values())
            if isinstance(obj, list):
                return all(no_floats(v) for v in obj)
            return True

        assert all(no_floats(t) for t in doc["transcripts"])
        fields = {"d", "N", "choices", "broadcast_order", "J", "C", "a",
                  "distributor_key_dit", "participants_key_dit", "valid"}
        assert fields <= set(doc["transcripts"][0])

    def test_round_trip(self):
        s = run_session(ProtocolConfig(d=2, N=4, rounds=40, seed=9, channel=ChannelModel(0.8)))
        back = load_session(json.loads(s.dumps()))
        assert back.dumps() == s.dumps()

    def test_rejects_other_schema(self):
        with pytest.raises(ValueError):
            load_session({"schema": "other"})
