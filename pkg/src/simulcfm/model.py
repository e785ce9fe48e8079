"""Incremental translation-model interface consumed by the decoder."""
from __future__ import annotations

import abc
from dataclasses import dataclass
from typing import Any, Sequence, Tuple

from .core import AttentionRow, ContractViolation, ProbDist, Vocabulary


@dataclass(frozen=True)
class SourcePrefix:
    frames: Tuple[int, ...]
    frame_ms: float = 40.0

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(int(f) for f in self.frames))
        if self.frame_ms <= 0:
            raise ValueError("frame_ms must be positive")

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def duration_ms(self) -> float:
        return len(self.frames) * self.frame_ms

    def take(self, n_frames: int) -> "SourcePrefix":
        return SourcePrefix(self.frames[:n_frames], self.frame_ms)


@dataclass(frozen=True, eq=False)
class EncoderHandle:
    """Encoded source prefix. ``state`` is private to the model that made it."""

    state: Any
    frames_seen: int


class TranslationModel(abc.ABC):
    """A re-translation model: encode a source prefix, then score target steps.

    Implementations must be pure; ``decode_step`` returns the next-token
    distribution and one (layer-selected, head-averaged) cross-attention row
    whose length equals ``handle.frames_seen``.
    """

    vocab: Vocabulary

    @abc.abstractmethod
    def encode(self, prefix: SourcePrefix) -> EncoderHandle:
        ...

    @abc.abstractmethod
    def _decode(self, handle: EncoderHandle, target_prefix: Tuple[int, ...]) -> Tuple[ProbDist, AttentionRow]:
        ...

    def decode_step(self, handle: EncoderHandle, target_prefix: Sequence[int]) -> Tuple[ProbDist, AttentionRow]:
        prefix = tuple(target_prefix)
        if not prefix or prefix[0] != self.vocab.bos:
            raise ContractViolation("target prefix must start with BOS")
        return self._decode(handle, prefix)


class TableModel(TranslationModel):
    """Model backed by explicit lookup tables; handy for scripted scenarios.

    ``table`` maps ``(frames_seen, target_prefix)`` to ``(probs, attention)``;
    ``default`` is called for missing keys and may be omitted to make them an
    error. Attention may be ``None``, meaning uniform over the received frames.
    """

    def __init__(self, vocab: Vocabulary, table=None, default=None):
        self.vocab = vocab
        self.table = dict(table or {})
        self.default = default

    def encode(self, prefix: SourcePrefix) -> EncoderHandle:
        return EncoderHandle(state=prefix.frames, frames_seen=len(prefix))

    def _decode(self, handle, target_prefix):
        key = (handle.frames_seen, target_prefix)
        if key in self.table:
            probs, attn = self.table[key]
        elif self.default is not None:
            probs, attn = self.default(handle.frames_seen, target_prefix)
        else:
            raise KeyError(f"no table entry for {key}")
        n = handle.frames_seen
        if attn is None:
            attn = [1.0 / n] * n if n else []
        return ProbDist(probs), AttentionRow(attn)
