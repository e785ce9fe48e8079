"""Contrastive feedback: reuse a chunk's held-back predictions to rescore the
first decoding step of the next chunk.

The score of a candidate ``y`` at that step is

    log p_c(y) + log(p_c(y) / max(p_f(y), eps))     if y is plausible
    -inf                                            otherwise

where ``p_c`` is the new chunk's distribution, ``p_f`` the feedback
distribution, and a token is plausible when ``p_c(y) >= beta * max p_c``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, FrozenSet, Optional, Sequence, Tuple

import numpy as np

from .core import LOG_FLOOR, FeedbackState, ProbDist, mean_dist, safe_log

MEAN_FEEDBACK_POLICIES = ("alignatt", "edatt", "hold_n")
FIRST_FEEDBACK_POLICIES = ("local_agreement",)


@dataclass(frozen=True)
class CfmConfig:
    beta: float = 0.1
    feedback_floor: float = 1e-12
    enabled: bool = True
    # False: contrast only picks the step-0 survivors, beam scores keep log p_c
    persist_contrast_in_score: bool = True

    def __post_init__(self):
        if not 0 < self.beta <= 1:
            raise ValueError("beta must lie in (0, 1]")
        if self.feedback_floor <= 0:
            raise ValueError("feedback_floor must be positive")


def extract_feedback(policy_kind: str, unstable: Sequence[Tuple[int, ProbDist]]) -> FeedbackState:
    """Summarize held-back predictions into the feedback distribution.

    Local agreement keeps the first unstable prediction's distribution; the
    attention policies (and Hold-n) average over all unstable predictions.
    """
    if not unstable:
        return FeedbackState(None)
    dists = [d for _, d in unstable]
    if policy_kind in FIRST_FEEDBACK_POLICIES:
        return FeedbackState(dists[0])
    if policy_kind in MEAN_FEEDBACK_POLICIES:
        return FeedbackState(dists[0] if len(dists) == 1 else mean_dist(dists))
    raise ValueError(f"unknown policy kind {policy_kind!r}")


def plausible_mask(p_c: ProbDist, beta: float) -> np.ndarray:
    probs = p_c.probs
    return probs >= beta * probs.max()


def plausible_set(p_c: ProbDist, beta: float) -> FrozenSet[int]:
    return frozenset(np.flatnonzero(plausible_mask(p_c, beta)).tolist())


def contrast(p_c: ProbDist, p_f: ProbDist, cfg: CfmConfig = CfmConfig(),
             base: Optional[float] = None) -> np.ndarray:
    """Log-ratio reward of each token; ``-inf`` outside the plausible set."""
    ratio = safe_log(p_c.probs, LOG_FLOOR) - np.log(np.maximum(p_f.probs, cfg.feedback_floor))
    if base is not None:
        ratio = ratio / math.log(base)
    return np.where(plausible_mask(p_c, cfg.beta), ratio, -np.inf)


def cfm_score(p_c: ProbDist, p_f: ProbDist, cfg: CfmConfig = CfmConfig(),
              base: Optional[float] = None) -> np.ndarray:
    logp = safe_log(p_c.probs, LOG_FLOOR)
    if base is not None:
        logp = logp / math.log(base)
    return logp + contrast(p_c, p_f, cfg, base)


Rescorer = Callable[[ProbDist], np.ndarray]


def make_rescorer(feedback: FeedbackState, cfg: CfmConfig) -> Optional[Rescorer]:
    """Step-0 rescorer for the beam, or None when CFM does not apply."""
    if not cfg.enabled or not feedback.present:
        return None
    p_f = feedback.dist
    return lambda p_c: cfm_score(p_c, p_f, cfg)
