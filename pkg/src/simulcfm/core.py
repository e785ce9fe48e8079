"""Value types shared by the decoder, the policies and the evaluation code.

All types are frozen after construction. Probability vectors are stored in
linear space as read-only numpy arrays.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

PROB_TOL = 1e-9
ATTN_TOL = 1e-6
LOG_FLOOR = 1e-12


class InvalidDistribution(ValueError):
    """Raised when a vector is not a valid probability distribution."""


class ContractViolation(ValueError):
    """Raised when a caller breaks an operation's precondition."""


def safe_log(p, floor: float = LOG_FLOOR):
    return np.log(np.maximum(p, floor))


@dataclass(frozen=True)
class Vocabulary:
    surfaces: Tuple[str, ...]
    bos: int = 0
    eos: int = 1

    def __post_init__(self):
        object.__setattr__(self, "surfaces", tuple(self.surfaces))
        size = len(self.surfaces)
        if self.bos == self.eos:
            raise ValueError("BOS and EOS must differ")
        if not (0 <= self.bos < size and 0 <= self.eos < size):
            raise ValueError("special ids must lie inside the vocabulary")
        if len(set(self.surfaces)) != size:
            raise ValueError("token surfaces must be unique")

    def __len__(self) -> int:
        return len(self.surfaces)

    @classmethod
    def numbered(cls, size: int) -> "Vocabulary":
        """Vocabulary ``<s>, </s>, t2, t3, ...`` of the given size."""
        return cls(("<s>", "</s>") + tuple(f"t{i}" for i in range(2, size)))

    def decode(self, ids: Sequence[int]) -> str:
        return " ".join(self.surfaces[i] for i in ids)


class ProbDist:
    """A normalized distribution over the target vocabulary."""

    __slots__ = ("probs",)

    def __init__(self, probs):
        arr = np.asarray(probs, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise InvalidDistribution("distribution must be a non-empty vector")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise InvalidDistribution("negative or non-finite probability")
        if abs(arr.sum() - 1.0) > PROB_TOL:
            raise InvalidDistribution(f"probabilities sum to {arr.sum()!r}, not 1")
        if arr.flags.writeable or arr.base is not None:
            arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "probs", arr)

    def __setattr__(self, name, value):
        raise AttributeError("ProbDist is immutable")

    def __len__(self) -> int:
        return self.probs.size

    def __getitem__(self, token: int) -> float:
        return float(self.probs[token])

    def __eq__(self, other) -> bool:
        return isinstance(other, ProbDist) and np.array_equal(self.probs, other.probs)

    def __hash__(self):
        return hash(self.probs.tobytes())

    def __repr__(self) -> str:
        return f"ProbDist({np.array2string(self.probs, precision=4)})"

    def __reduce__(self):
        return (ProbDist, (self.probs.tolist(),))

    def argmax(self) -> int:
        return int(np.argmax(self.probs))

    def log(self) -> np.ndarray:
        return safe_log(self.probs)

    def tolist(self):
        return self.probs.tolist()


def normalize(raw_scores) -> ProbDist:
    """Scale non-negative scores so they sum to one.

    >>> normalize([3, 1]).tolist()
    [0.75, 0.25]
    """
    arr = np.asarray(raw_scores, dtype=float)
    if arr.size == 0 or np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise InvalidDistribution("scores must be finite and non-negative")
    total = arr.sum()
    if total <= 0:
        raise InvalidDistribution("at least one score must be positive")
    return ProbDist(arr / total)


def mean_dist(dists: Sequence[ProbDist]) -> ProbDist:
    stacked = np.stack([d.probs for d in dists])
    # mean of normalized rows is normalized up to rounding
    return normalize(stacked.mean(axis=0))


class AttentionRow:
    """Cross-attention weights of one target step over the received frames."""

    __slots__ = ("weights",)

    def __init__(self, weights):
        arr = np.asarray(weights, dtype=float)
        if arr.ndim != 1:
            raise InvalidDistribution("attention row must be a vector")
        if np.any(arr < 0) or not np.all(np.isfinite(arr)):
            raise InvalidDistribution("negative or non-finite attention weight")
        if arr.size and abs(arr.sum() - 1.0) > ATTN_TOL:
            raise InvalidDistribution(f"attention sums to {arr.sum()!r}, not 1")
        if arr.flags.writeable or arr.base is not None:
            arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "weights", arr)

    def __setattr__(self, name, value):
        raise AttributeError("AttentionRow is immutable")

    def __len__(self) -> int:
        return self.weights.size

    def __eq__(self, other) -> bool:
        return isinstance(other, AttentionRow) and np.array_equal(self.weights, other.weights)

    def __hash__(self):
        return hash(self.weights.tobytes())

    def __repr__(self) -> str:
        return f"AttentionRow(len={self.weights.size})"

    def __reduce__(self):
        return (AttentionRow, (self.weights.tolist(),))

    def argmax(self) -> int:
        if not self.weights.size:
            raise ContractViolation("argmax of an empty attention row")
        return int(np.argmax(self.weights))

    def tail_mass(self, frames: int) -> float:
        """Total weight on the last ``frames`` frames."""
        if frames <= 0:
            return 0.0
        return float(self.weights[-frames:].sum())


@dataclass(frozen=True)
class Hypothesis:
    tokens: Tuple[int, ...]
    score: float
    step_dists: Tuple[ProbDist, ...] = ()
    step_attn: Tuple[AttentionRow, ...] = ()
    prefix_len: int = 1
    finished: bool = False

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(int(t) for t in self.tokens))
        object.__setattr__(self, "step_dists", tuple(self.step_dists))
        object.__setattr__(self, "step_attn", tuple(self.step_attn))
        n_new = len(self.tokens) - self.prefix_len
        if n_new < 0:
            raise ContractViolation("hypothesis shorter than its forced prefix")
        if len(self.step_dists) != n_new or len(self.step_attn) != n_new:
            raise ContractViolation("one distribution and one attention row per generated step")

    @property
    def continuation(self) -> Tuple[int, ...]:
        return self.tokens[self.prefix_len:]

    def extend(self, token: int, step_score: float, dist: ProbDist,
               attn: AttentionRow, eos: int) -> "Hypothesis":
        if self.finished:
            raise ContractViolation("cannot extend a finished hypothesis")
        return Hypothesis(
            tokens=self.tokens + (int(token),),
            score=self.score + step_score,
            step_dists=self.step_dists + (dist,),
            step_attn=self.step_attn + (attn,),
            prefix_len=self.prefix_len,
            finished=int(token) == eos,
        )


@dataclass(frozen=True)
class PolicyDecision:
    stable: Tuple[int, ...]
    unstable: Tuple[Tuple[int, ProbDist], ...] = ()
    source_exhausted_flush: bool = False

    def __post_init__(self):
        object.__setattr__(self, "stable", tuple(int(t) for t in self.stable))
        object.__setattr__(self, "unstable", tuple((int(t), d) for t, d in self.unstable))
        if self.source_exhausted_flush and self.unstable:
            raise ContractViolation("a final flush leaves nothing unstable")

    @property
    def unstable_ids(self) -> Tuple[int, ...]:
        return tuple(t for t, _ in self.unstable)


@dataclass(frozen=True)
class FeedbackState:
    dist: Optional[ProbDist] = None

    @property
    def present(self) -> bool:
        return self.dist is not None


@dataclass(frozen=True)
class EmissionEvent:
    token: int
    ideal_delay_ms: float
    wall_ms: float

    def to_json(self) -> dict:
        return {"token": self.token, "ideal_ms": self.ideal_delay_ms, "wall_ms": self.wall_ms}

    @classmethod
    def from_json(cls, obj: dict) -> "EmissionEvent":
        return cls(int(obj["token"]), float(obj["ideal_ms"]), float(obj["wall_ms"]))


def check_events(events: Sequence[EmissionEvent], source_duration_ms: float) -> None:
    """Raise if delays go backwards or exceed the source duration."""
    prev_ideal = prev_wall = -np.inf
    for ev in events:
        if ev.ideal_delay_ms < prev_ideal or ev.wall_ms < prev_wall:
            raise ContractViolation("emission delays must be non-decreasing")
        if ev.ideal_delay_ms > source_duration_ms:
            raise ContractViolation("token emitted after the source ended")
        prev_ideal, prev_wall = ev.ideal_delay_ms, ev.wall_ms
