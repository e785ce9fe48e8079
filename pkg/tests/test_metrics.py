import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from simulcfm.core import EmissionEvent
from simulcfm.metrics import (LatencyRecord, UndefinedLatency, bootstrap_ci, corpus_bleu, laal, mean,
                              sentence_stats)


def record(delays, total, ref_len, wall=None):
    wall = wall or delays
    return LatencyRecord(tuple(EmissionEvent(i, d, w) for i, (d, w) in enumerate(zip(delays, wall))), total, ref_len)


def laal_by_hand(delays, total, ref_len):
    r = total / max(len(delays), ref_len)
    tau = next((i for i, d in enumerate(delays, 1) if d >= total), len(delays))
    return sum(delays[i - 1] - (i - 1) * r for i in range(1, tau + 1)) / tau


def test_laal_examples():
    assert laal(record([1000, 2000, 3000, 4000], 4000, 4)) == pytest.approx(1000, abs=1e-6)
    assert laal(record([4000] * 4, 4000, 4)) == pytest.approx(4000, abs=1e-6)
    assert laal(record([2500], 2500, 1)) == pytest.approx(2500, abs=1e-6)
    assert laal(record([2500], 2500, 7)) == pytest.approx(2500, abs=1e-6)


def test_laal_uses_longer_of_hyp_and_ref():
    # short hypothesis: the reference length sets the rate
    assert laal(record([1000, 2000], 4000, 4)) == pytest.approx((1000 + 1000) / 2)
    # long hypothesis: its own length sets the rate
    assert laal(record([500, 1000, 1500, 2000], 2000, 2)) == pytest.approx((500 + 500 + 500 + 500) / 4)


def test_laal_errors_and_ca_variant():
    with pytest.raises(UndefinedLatency):
        laal(LatencyRecord((), 1000, 3))
    with pytest.raises(UndefinedLatency):
        laal(record([0], 0, 1))
    rec = record([1000, 2000], 2000, 2, wall=[1100, 2300])
    assert laal(rec, computational_aware=True) == pytest.approx((1100 + 1300) / 2)


delay_lists = st.lists(st.integers(0, 10_000), min_size=1, max_size=12).map(sorted)


@given(delay_lists, st.integers(1, 12), st.integers(1, 10_000))
def test_laal_matches_hand_formula(delays, ref_len, total):
    delays = [min(d, total) for d in delays]
    assert laal(record(delays, total, ref_len)) == pytest.approx(laal_by_hand(delays, total, ref_len))


@given(delay_lists, st.integers(1, 12), st.integers(0, 5000))
def test_laal_shift_with_pinned_tau(delays, ref_len, c):
    # total kept above every delay so the cutoff stays at the last token
    total = max(delays) + 1
    base = laal(record(delays, total, ref_len))
    r = total / max(len(delays), ref_len)
    r2 = (total + c) / max(len(delays), ref_len)
    shifted = laal(record([d + c for d in delays], total + c, ref_len))
    n = len(delays)
    expected = base + c - (r2 - r) * (n - 1) / 2
    # the shift is c, less the drift of the rate term as the source gets longer
    assert shifted == pytest.approx(expected, abs=1e-6)


@given(delay_lists, st.lists(st.integers(0, 500), min_size=12, max_size=12), st.integers(1, 12))
def test_laal_ca_at_least_ideal(delays, extra, ref_len):
    total = max(delays) + 1
    wall, acc = [], 0
    for d, e in zip(delays, extra):
        acc += e
        wall.append(d + acc)
    rec = record(delays, total, ref_len, wall=wall)
    assert laal(rec, computational_aware=True) >= laal(rec) - 1e-9


def test_bleu_examples():
    assert corpus_bleu([[1, 2, 3, 4]], [[1, 2, 3, 4]]) == pytest.approx(100.0)
    assert corpus_bleu([[1, 2, 3]], [[4, 5, 6]]) == 0.0
    a, b, c, d, e = range(10, 15)
    got = corpus_bleu([[a, b, c, d]], [[a, b, c, e]])
    assert got == pytest.approx(100 * (0.75 * (2 / 3) * 0.5 * 0.5) ** 0.25, abs=1e-9)
    assert got == pytest.approx(59.46, abs=0.01)


def test_bleu_brevity_penalty_and_errors():
    got = corpus_bleu([[1, 2, 3, 4]], [[1, 2, 3, 4, 5, 6]])
    assert got == pytest.approx(100 * math.exp(1 - 6 / 4))
    assert sentence_stats([1, 2], [1, 2, 3]).tolist()[:2] == [2, 3]
    with pytest.raises(ValueError):
        corpus_bleu([], [])
    with pytest.raises(ValueError):
        corpus_bleu([[1]], [[1], [2]])


def test_bleu_short_hypotheses_drop_missing_orders():
    # no 3- or 4-grams exist anywhere, so only two orders contribute
    assert corpus_bleu([[1, 2]], [[1, 2]]) == pytest.approx(100.0)


pairs = st.lists(st.tuples(st.lists(st.integers(2, 8), min_size=1, max_size=8),
                           st.lists(st.integers(2, 8), min_size=1, max_size=8)), min_size=1, max_size=10)


@given(pairs, st.randoms(use_true_random=False))
def test_bleu_permutation_invariant(data, rnd):
    shuffled = list(data)
    rnd.shuffle(shuffled)
    h1, r1 = zip(*data)
    h2, r2 = zip(*shuffled)
    assert corpus_bleu(h1, r1) == pytest.approx(corpus_bleu(h2, r2), abs=1e-9)


def test_ci_degenerate_cases():
    h, r = [[1, 2, 3, 4, 5]] * 20, [[1, 2, 3, 9, 5]] * 20
    point = corpus_bleu(h, r)
    assert bootstrap_ci(h, r, resamples=200) == pytest.approx((point, point))
    assert bootstrap_ci(r, r, resamples=200) == pytest.approx((100.0, 100.0))
    assert bootstrap_ci([[1, 2]], [[1, 2]], resamples=100) == pytest.approx((100.0, 100.0))
    with pytest.raises(ValueError):
        bootstrap_ci(h, r, resamples=50)
    with pytest.raises(ValueError):
        bootstrap_ci(h, r, level=1.0)


def noisy_corpus(seed, n=60):
    rnd = random.Random(seed)
    refs = [[rnd.randrange(2, 30) for _ in range(rnd.randint(4, 12))] for _ in range(n)]
    hyps = [[t if rnd.random() < 0.7 else rnd.randrange(2, 30) for t in ref] for ref in refs]
    return hyps, refs


def test_ci_is_deterministic_per_seed():
    hyps, refs = noisy_corpus(0)
    a = bootstrap_ci(hyps, refs, resamples=300, seed=7)
    assert a == bootstrap_ci(hyps, refs, resamples=300, seed=7)
    assert a != bootstrap_ci(hyps, refs, resamples=300, seed=8)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10 ** 6), st.sampled_from([0.5, 0.9, 0.95]))
def test_ci_brackets_point(seed, level):
    hyps, refs = noisy_corpus(seed, n=25)
    point = corpus_bleu(hyps, refs)
    lo, hi = bootstrap_ci(hyps, refs, resamples=100, seed=seed, level=level)
    assert 0 <= lo <= point <= hi <= 100


def test_mean_of_nothing_is_nan():
    assert math.isnan(mean([]))
    assert mean([1.0, 3.0]) == 2.0
