"""Latency (LAAL) and quality (corpus BLEU with bootstrap intervals)."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .core import EmissionEvent


class UndefinedLatency(ValueError):
    pass


@dataclass(frozen=True)
class LatencyRecord:
    events: Tuple[EmissionEvent, ...]
    source_duration_ms: float
    ref_len: int


def laal(rec: LatencyRecord, computational_aware: bool = False) -> float:
    """Length-adaptive average lagging in milliseconds.

    The oracle rate uses ``max(|hyp|, |ref|)`` and the sum stops at the first
    token emitted once the whole source has been read.
    """
    if not rec.events:
        raise UndefinedLatency("no emitted tokens")
    if rec.source_duration_ms <= 0:
        raise UndefinedLatency("source duration must be positive")
    delays = [e.wall_ms if computational_aware else e.ideal_delay_ms for e in rec.events]
    total = rec.source_duration_ms
    rate = total / max(len(delays), rec.ref_len)
    tau = len(delays)
    for i, d in enumerate(delays, 1):
        if d >= total:
            tau = i
            break
    return sum(d - i * rate for i, d in enumerate(delays[:tau])) / tau


MAX_ORDER = 4


def _ngrams(tokens: Sequence[int], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def sentence_stats(hyp: Sequence[int], ref: Sequence[int]) -> np.ndarray:
    """[hyp_len, ref_len, match_1..4, total_1..4] for one sentence pair."""
    stats = np.zeros(2 + 2 * MAX_ORDER)
    stats[0], stats[1] = len(hyp), len(ref)
    for n in range(1, MAX_ORDER + 1):
        h, r = _ngrams(hyp, n), _ngrams(ref, n)
        stats[1 + n] = sum(min(c, r[g]) for g, c in h.items())
        stats[1 + MAX_ORDER + n] = max(len(hyp) - n + 1, 0)
    return stats


def bleu_from_stats(stats: np.ndarray) -> float:
    hyp_len, ref_len = stats[0], stats[1]
    matches = stats[2:2 + MAX_ORDER]
    totals = stats[2 + MAX_ORDER:]
    if hyp_len == 0 or matches[0] == 0:
        return 0.0
    log_p = []
    for m, t in zip(matches, totals):
        if t == 0:
            # order longer than every hypothesis: drop it from the mean
            break
        log_p.append(math.log(m / t if m > 0 else 1.0 / (2.0 * t)))
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * bp * math.exp(sum(log_p) / len(log_p))


def corpus_bleu(hyps: Sequence[Sequence[int]], refs: Sequence[Sequence[int]]) -> float:
    """Corpus BLEU on token ids, 4-gram with brevity penalty.

    An n-gram order with no matches counts as ``1 / (2 * total)``; a corpus
    without a single unigram match scores 0.
    """
    if len(hyps) != len(refs):
        raise ValueError("hypothesis and reference counts differ")
    if not hyps:
        raise ValueError("empty corpus")
    stats = sum(sentence_stats(h, r) for h, r in zip(hyps, refs))
    return bleu_from_stats(stats)


def bootstrap_ci(hyps, refs, resamples: int = 1000, seed: int = 0, level: float = 0.95) -> Tuple[float, float]:
    """Bootstrap confidence interval around corpus BLEU.

    Sentences are resampled with replacement; the interval is the point
    estimate plus or minus half the width of the central ``level`` percentile
    band of the resampled scores, clipped to [0, 100].
    """
    if resamples < 100:
        raise ValueError("need at least 100 resamples")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    if len(hyps) != len(refs) or not hyps:
        raise ValueError("need equally many hypotheses and references")
    per_sent = np.stack([sentence_stats(h, r) for h, r in zip(hyps, refs)])
    point = bleu_from_stats(per_sent.sum(axis=0))
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(hyps), size=(resamples, len(hyps)))
    scores = np.array([bleu_from_stats(per_sent[row].sum(axis=0)) for row in idx])
    tail = (1.0 - level) / 2.0 * 100.0
    lo, hi = np.percentile(scores, [tail, 100.0 - tail])
    half = (hi - lo) / 2.0
    return max(point - half, 0.0), min(point + half, 100.0)


def mean(values: List[float]) -> float:
    return float(sum(values) / len(values)) if values else float("nan")
