"""Prefix-forced beam search over one chunk."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .cfm import Rescorer
from .core import ContractViolation, Hypothesis
from .model import EncoderHandle, TranslationModel


@dataclass(frozen=True)
class BeamConfig:
    beam_size: int = 5
    # None lets the engine pick a cap from the received source length
    max_new_tokens: Optional[int] = None
    length_norm_alpha: float = 1.0

    def __post_init__(self):
        if self.beam_size < 1:
            raise ValueError("beam_size must be >= 1")
        if self.max_new_tokens is not None and self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")
        if self.length_norm_alpha < 0:
            raise ValueError("length_norm_alpha must be >= 0")


def _normalized(score: float, length: int, alpha: float) -> float:
    return score / (length ** alpha) if alpha else score


def beam_decode(model: TranslationModel, handle: EncoderHandle, forced_prefix: Sequence[int],
                cfg: BeamConfig, step0_rescorer: Optional[Rescorer] = None,
                persist_rescore: bool = True, max_new_tokens: Optional[int] = None) -> Hypothesis:
    """Continue ``forced_prefix`` and return the best finished or length-capped hypothesis.

    The forced prefix is teacher-forced and scores nothing. At the first
    generated step ``step0_rescorer`` (if given) replaces the log-probabilities;
    tokens it scores ``-inf`` are never expanded. With ``persist_rescore``
    False the rescored values only decide which step-0 candidates survive.
    The returned hypothesis carries the length-normalized score.
    """
    max_new = max_new_tokens if max_new_tokens is not None else cfg.max_new_tokens
    if max_new is None or max_new < 1:
        raise ContractViolation("max_new_tokens must be >= 1")
    forced = tuple(int(t) for t in forced_prefix)
    bos, eos = model.vocab.bos, model.vocab.eos
    if not forced or forced[0] != bos:
        raise ContractViolation("forced prefix must start with BOS")
    alpha = cfg.length_norm_alpha
    k = cfg.beam_size

    live = [Hypothesis(tokens=forced, score=0.0, prefix_len=len(forced))]
    finished = []  # (normalized score, insertion index, hypothesis)

    for step in range(max_new):
        rank_rows, keep_rows, expansions = [], [], []
        for hyp in live:
            dist, attn = model.decode_step(handle, hyp.tokens)
            logp = dist.log()
            if step == 0 and step0_rescorer is not None:
                rank = np.asarray(step0_rescorer(dist), dtype=float)
                keep = rank if persist_rescore else np.where(np.isfinite(rank), logp, -np.inf)
            else:
                rank = keep = logp
            rank_rows.append(hyp.score + rank)
            keep_rows.append(hyp.score + keep)
            expansions.append((hyp, dist, attn))

        vocab_size = rank_rows[0].size
        rank_all = np.concatenate(rank_rows)
        keep_all = np.concatenate(keep_rows)
        tokens = np.tile(np.arange(vocab_size), len(live))
        order = np.arange(rank_all.size)
        finite = np.isfinite(rank_all)

        # every EOS expansion is a finished candidate
        for idx in np.flatnonzero(finite & (tokens == eos)):
            hyp, dist, attn = expansions[idx // vocab_size]
            done = hyp.extend(eos, float(keep_all[idx] - hyp.score), dist, attn, eos)
            n_new = len(done.tokens) - done.prefix_len
            finished.append((_normalized(done.score, n_new, alpha), len(finished), done))

        # best first; ties go to the lower token id, then the earlier insertion
        sel = np.lexsort((order, tokens, -rank_all))
        sel = [i for i in sel if finite[i] and tokens[i] != eos][:k]
        live = []
        for idx in sel:
            hyp, dist, attn = expansions[idx // vocab_size]
            live.append(hyp.extend(int(tokens[idx]), float(keep_all[idx] - hyp.score), dist, attn, eos))

        if not live:
            break
        if finished:
            best_done = max(f[0] for f in finished)
            n_new = step + 1
            bound = max(
                h.score / ((n_new + 1) ** alpha) if h.score >= 0 or not alpha
                else h.score / (max_new ** alpha)
                for h in live
            )
            if step + 1 < max_new and best_done >= bound:
                live = []
                break

    for hyp in live:
        n_new = len(hyp.tokens) - hyp.prefix_len
        finished.append((_normalized(hyp.score, n_new, alpha), len(finished), hyp))
    if not finished:
        raise ContractViolation("beam search produced no hypothesis")
    norm, _, best = min(finished, key=lambda f: (-f[0], f[1]))
    return Hypothesis(tokens=best.tokens, score=norm, step_dists=best.step_dists,
                      step_attn=best.step_attn, prefix_len=best.prefix_len, finished=best.finished)
