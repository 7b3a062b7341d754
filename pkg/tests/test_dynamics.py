import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from currikit.dynamics import (
    DynamicsTrace,
    compute_all,
    confidence,
    correctness,
    read_td_stats,
    variability,
    write_td_stats,
)
from currikit.trainer import EpochProbe


def trace(probs, corrects=None):
    if corrects is None:
        corrects = [False] * len(probs)
    return DynamicsTrace(example_id="e", probs=list(probs), corrects=list(corrects))


# independent brute-force evaluation, deliberately loop-based
def oracle_confidence(probs):
    total = 0.0
    for p in probs:
        total += p
    return total / len(probs)


def oracle_correctness(flags):
    n = 0
    for f in flags:
        if f:
            n += 1
    return n


def oracle_variability(probs):
    mu = oracle_confidence(probs)
    acc = 0.0
    for p in probs:
        acc += (p - mu) * (p - mu)
    return math.sqrt(acc / len(probs))


class TestConfidence:
    def test_constant(self):
        assert confidence(trace([0.5, 0.5, 0.5])) == 0.5

    def test_single_epoch(self):
        assert confidence(trace([0.37])) == 0.37

    def test_mean(self):
        assert confidence(trace([0.9, 0.8, 0.7, 0.6])) == pytest.approx(0.75)

    def test_empty(self):
        with pytest.raises(ValueError):
            confidence(trace([]))


class TestCorrectness:
    def test_all_true(self):
        assert correctness(trace([0.5] * 5, [True] * 5)) == 5

    def test_all_false(self):
        assert correctness(trace([0.5] * 5, [False] * 5)) == 0

    def test_count(self):
        assert correctness(trace([0.5] * 5, [True, False, True, True, False])) == 3


class TestVariability:
    def test_constant_is_zero(self):
        assert variability(trace([0.4, 0.4, 0.4])) == 0.0

    def test_two_points(self):
        assert variability(trace([0.2, 0.8])) == pytest.approx(0.3)

    def test_three_points(self):
        assert variability(trace([1.0, 0.0, 0.5])) == pytest.approx(0.40825, abs=1e-5)

    def test_bounded_by_half(self):
        rng = random.Random(0)
        for _ in range(100):
            probs = [rng.random() for _ in range(rng.randint(1, 12))]
            assert variability(trace(probs)) <= 0.5 + 1e-12


class TestAgainstOracle:
    def test_200_random_traces(self):
        rng = random.Random(1234)
        for _ in range(200):
            n = rng.randint(1, 12)
            probs = [rng.random() for _ in range(n)]
            flags = [rng.random() < 0.5 for _ in range(n)]
            tr = trace(probs, flags)
            assert abs(confidence(tr) - oracle_confidence(probs)) < 1e-12
            assert correctness(tr) == oracle_correctness(flags)
            assert abs(variability(tr) - oracle_variability(probs)) < 1e-12

    @given(st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=1, max_size=20),
           st.randoms())
    @settings(max_examples=100, deadline=None)
    def test_permutation_invariance(self, probs, rnd):
        flags = [p > 0.5 for p in probs]
        shuffled = list(zip(probs, flags))
        rnd.shuffle(shuffled)
        sp = [p for p, _ in shuffled]
        sf = [f for _, f in shuffled]
        assert confidence(trace(sp, sf)) == pytest.approx(
            confidence(trace(probs, flags)), abs=1e-12)
        assert correctness(trace(sp, sf)) == correctness(trace(probs, flags))
        assert variability(trace(sp, sf)) == pytest.approx(
            variability(trace(probs, flags)), abs=1e-12)

    def test_variability_zero_iff_constant(self):
        assert variability(trace([0.3, 0.3])) == 0.0
        assert variability(trace([0.3, 0.30001])) > 0.0


def probe(epoch, entries):
    return EpochProbe(
        epoch=epoch,
        gold_prob={eid: p for eid, p, _ in entries},
        correct={eid: c for eid, _, c in entries},
    )


class TestComputeAll:
    def test_single_epoch(self):
        stats = compute_all([probe(1, [("a", 0.4, False)])])
        assert stats["a"].confidence == 0.4
        assert stats["a"].correctness == 0
        assert stats["a"].variability == 0.0

    def test_mismatched_epochs_names_id(self):
        probes = [
            probe(1, [("a", 0.5, True), ("b", 0.5, True)]),
            probe(2, [("a", 0.5, True)]),
        ]
        with pytest.raises(ValueError, match="'b'"):
            compute_all(probes)

    def test_matches_oracle_on_multi_epoch_probes(self):
        rng = random.Random(77)
        ids = [f"e{i}" for i in range(50)]
        epochs = 7
        probs = {eid: [rng.random() for _ in range(epochs)] for eid in ids}
        flags = {eid: [rng.random() < 0.5 for _ in range(epochs)] for eid in ids}
        probes = [
            probe(e + 1, [(eid, probs[eid][e], flags[eid][e]) for eid in ids])
            for e in range(epochs)
        ]
        stats = compute_all(probes)
        for eid in ids:
            assert abs(stats[eid].confidence - oracle_confidence(probs[eid])) < 1e-12
            assert stats[eid].correctness == oracle_correctness(flags[eid])
            assert abs(stats[eid].variability - oracle_variability(probs[eid])) < 1e-12

    def test_round_trip(self, tmp_path):
        stats = compute_all([
            probe(1, [("a", 0.5, True), ("b", 0.25, False)]),
            probe(2, [("a", 0.75, True), ("b", 0.5, True)]),
        ])
        write_td_stats(stats, tmp_path / "stats.jsonl")
        back = read_td_stats(tmp_path / "stats.jsonl")
        assert back == stats
