"""Stable-hypothesis detection: split a chunk's continuation into the part
to emit now and the part to hold back."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .core import AttentionRow, PolicyDecision, ProbDist

POLICY_KINDS = ("local_agreement", "hold_n", "edatt", "alignatt")

# parameter each policy is controlled by; lambda travels with alpha for edatt
POLICY_PARAMS = {
    "local_agreement": (),
    "hold_n": ("n",),
    "alignatt": ("f",),
    "edatt": ("alpha", "lam"),
}
POLICY_DEFAULTS = {"n": 2, "f": 8, "alpha": 0.2, "lam": 2}


class PolicyConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PolicyConfig:
    kind: str
    f: Optional[int] = None
    alpha: Optional[float] = None
    lam: Optional[int] = None
    n: Optional[int] = None

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise PolicyConfigError(f"unknown policy {self.kind!r}; expected one of {POLICY_KINDS}")
        allowed = POLICY_PARAMS[self.kind]
        for name in ("f", "alpha", "lam", "n"):
            value = getattr(self, name)
            if value is None and name in allowed:
                object.__setattr__(self, name, POLICY_DEFAULTS[name])
            elif value is not None and name not in allowed:
                raise PolicyConfigError(f"parameter {name!r} does not apply to policy {self.kind!r}")
        if self.f is not None and self.f < 0:
            raise PolicyConfigError("f must be >= 0")
        if self.alpha is not None and not 0 < self.alpha <= 1:
            raise PolicyConfigError("alpha must lie in (0, 1]")
        if self.lam is not None and self.lam < 1:
            raise PolicyConfigError("lambda must be >= 1")
        if self.n is not None and self.n < 0:
            raise PolicyConfigError("n must be >= 0")

    @property
    def param_label(self) -> str:
        names = POLICY_PARAMS[self.kind]
        return ",".join(f"{k}={getattr(self, k)}" for k in names) or "-"


def _split(tokens, dists, n_stable: int, eos: Optional[int]) -> PolicyDecision:
    tokens = list(tokens)
    if eos is not None and eos in tokens[:n_stable]:
        n_stable = tokens.index(eos)
    if dists is None:
        dists = [None] * len(tokens)
    unstable = list(zip(tokens[n_stable:], list(dists)[n_stable:]))
    return PolicyDecision(stable=tokens[:n_stable], unstable=unstable)


def local_agreement(prev_continuation: Sequence[int], curr_continuation: Sequence[int],
                    dists: Optional[Sequence[ProbDist]] = None, eos: Optional[int] = 1) -> PolicyDecision:
    """Emit the longest common prefix of two consecutive chunks' continuations."""
    n = 0
    for a, b in zip(prev_continuation, curr_continuation):
        if a != b:
            break
        n += 1
    return _split(curr_continuation, dists, n, eos)


def hold_n(continuation: Sequence[int], n: int, dists=None, eos: Optional[int] = 1) -> PolicyDecision:
    if n < 0:
        raise PolicyConfigError("n must be >= 0")
    return _split(continuation, dists, max(len(continuation) - n, 0), eos)


def alignatt(continuation: Sequence[int], attn: Sequence[AttentionRow], f: int, frames_seen: int,
             dists=None, eos: Optional[int] = 1) -> PolicyDecision:
    """Stop at the first token whose attention peak lies in the last ``f`` frames."""
    window_start = frames_seen - f
    n = len(continuation)
    for i, row in enumerate(attn[:len(continuation)]):
        if f > 0 and (len(row) == 0 or row.argmax() >= window_start):
            n = i
            break
    return _split(continuation, dists, n, eos)


def edatt(continuation: Sequence[int], attn: Sequence[AttentionRow], alpha: float, lam: int,
          frames_seen: int, dists=None, eos: Optional[int] = 1) -> PolicyDecision:
    """Stop at the first token putting more than ``alpha`` attention on the last ``lam`` frames."""
    n = len(continuation)
    for i, row in enumerate(attn[:len(continuation)]):
        if row.tail_mass(lam) > alpha:
            n = i
            break
    return _split(continuation, dists, n, eos)


def finalize_flush(continuation: Sequence[int], eos: Optional[int] = 1) -> PolicyDecision:
    tokens = list(continuation)
    if eos is not None and eos in tokens:
        tokens = tokens[:tokens.index(eos)]
    return PolicyDecision(stable=tokens, unstable=(), source_exhausted_flush=True)


def decide(cfg: PolicyConfig, continuation: Sequence[int], dists: Sequence[ProbDist],
           attn: Sequence[AttentionRow], frames_seen: int, prev_continuation: Sequence[int] = (),
           is_final: bool = False, eos: Optional[int] = 1) -> PolicyDecision:
    """Dispatch one chunk's decision; the final chunk always flushes."""
    if is_final:
        return finalize_flush(continuation, eos)
    if cfg.kind == "local_agreement":
        return local_agreement(prev_continuation, continuation, dists, eos)
    if cfg.kind == "hold_n":
        return hold_n(continuation, cfg.n, dists, eos)
    if cfg.kind == "alignatt":
        return alignatt(continuation, attn, cfg.f, frames_seen, dists, eos)
    return edatt(continuation, attn, cfg.alpha, cfg.lam, frames_seen, dists, eos)
