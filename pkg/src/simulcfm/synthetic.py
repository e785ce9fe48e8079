"""Seeded synthetic translation task with lookahead-ambiguous words.

Source words are spelled as ``frames_per_token`` identical frame symbols.
Most words translate to themselves. An *ambiguous* word has a default sense
(its own id, always wrong in the corpus) and an alternative sense (a
reserved target id, always correct); a *trigger* word placed 1-3 words later
disambiguates it.

The matching model is an oracle over the received words that behaves like an
over-confident neural model:

* before the trigger is heard it puts ``1 - m`` on the wrong sense and ``m``
  on the correct one (``m < 0.5`` is a per-word confidence);
* once the trigger is heard the wrong sense keeps ``sticky_prior * (1 - m)``,
  shrinking by ``context_decay`` for every further word received;
* beyond the received words it predicts end-of-sentence;
* ``noise`` of the mass is spread uniformly over the whole vocabulary.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import AttentionRow, ProbDist, Vocabulary
from .model import EncoderHandle, SourcePrefix, TranslationModel


class CorpusError(ValueError):
    """Unreadable corpus file; the message names the offending line."""


@dataclass(frozen=True)
class TaskSpec:
    seed: int = 0
    vocab_size: int = 128
    utterance_count: int = 500
    source_len_range: Tuple[int, int] = (8, 16)
    frames_per_token: int = 5
    frame_ms: int = 40
    ambiguity_rate: float = 0.3
    sticky_prior: float = 0.9
    attn_spread: float = 0.5
    confidence_range: Tuple[float, float] = (0.05, 0.45)
    context_decay: float = 0.95
    noise: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "source_len_range", tuple(int(x) for x in self.source_len_range))
        object.__setattr__(self, "confidence_range", tuple(float(x) for x in self.confidence_range))
        lo, hi = self.source_len_range
        if self.vocab_size < 8:
            raise ValueError("vocab_size must be >= 8")
        if self.frames_per_token < 1 or self.frame_ms <= 0:
            raise ValueError("frames_per_token and frame_ms must be positive")
        if not 1 <= lo <= hi:
            raise ValueError("source_len_range must satisfy 1 <= min <= max")
        if not 0 <= self.ambiguity_rate <= 1:
            raise ValueError("ambiguity_rate must lie in [0, 1]")
        if not 0 < self.sticky_prior < 1:
            raise ValueError("sticky_prior must lie in (0, 1)")
        if self.attn_spread <= 0:
            raise ValueError("attn_spread must be positive")
        m_lo, m_hi = self.confidence_range
        if not 0 < m_lo <= m_hi < 0.5:
            raise ValueError("confidence_range must lie inside (0, 0.5)")
        if not 0 < self.context_decay <= 1:
            raise ValueError("context_decay must lie in (0, 1]")
        if not 0 <= self.noise < 1:
            raise ValueError("noise must lie in [0, 1)")

    def to_json(self) -> dict:
        d = asdict(self)
        d["source_len_range"] = list(self.source_len_range)
        d["confidence_range"] = list(self.confidence_range)
        return d

    @classmethod
    def from_json(cls, obj: dict) -> "TaskSpec":
        return cls(**obj)


@dataclass(frozen=True)
class Lexicon:
    plain: Tuple[int, ...]
    triggers: Tuple[int, ...]
    # ambiguous word id -> (alternative sense id, confidence m)
    ambiguous: Dict[int, Tuple[int, float]]

    @classmethod
    def build(cls, spec: TaskSpec, rng: np.random.Generator) -> "Lexicon":
        content = rng.permutation(np.arange(2, spec.vocab_size)).tolist()
        k = max(1, len(content) // 8)
        amb, alt, trig, plain = content[:k], content[k:2 * k], content[2 * k:3 * k], content[3 * k:]
        m_lo, m_hi = spec.confidence_range
        conf = rng.uniform(m_lo, m_hi, size=k)
        ambiguous = {int(a): (int(b), round(float(m), 6)) for a, b, m in zip(amb, alt, conf)}
        return cls(tuple(sorted(plain)), tuple(sorted(trig)), ambiguous)


@dataclass(frozen=True)
class Utterance:
    id: str
    source: SourcePrefix
    reference: Tuple[int, ...]
    metadata: dict = field(default_factory=dict, compare=False)

    @property
    def words(self) -> Tuple[int, ...]:
        g = self.metadata.get("frames_per_token", 1)
        return self.source.frames[::g]

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "frames": list(self.source.frames),
            "frame_ms": self.source.frame_ms,
            "reference": list(self.reference),
            "metadata": self.metadata,
        }


def _find_trigger(words: Sequence[int], pos: int, triggers) -> Optional[int]:
    for t in range(pos + 1, min(pos + 4, len(words))):
        if words[t] in triggers:
            return t
    return None


def wrong_sense_mass(spec: TaskSpec, m: float, trigger_pos: Optional[int], n_received: int) -> float:
    """Core (pre-noise) mass on the wrong sense of an ambiguous word."""
    if trigger_pos is None or trigger_pos >= n_received:
        return 1.0 - m
    extra = n_received - 1 - trigger_pos
    return spec.sticky_prior * (1.0 - m) * spec.context_decay ** extra


def generate(spec: TaskSpec) -> List[Utterance]:
    """Deterministic corpus for ``spec``; reference length equals source length."""
    rng = np.random.default_rng(spec.seed)
    lex = Lexicon.build(spec, rng)
    amb_ids = sorted(lex.ambiguous)
    trig_set = set(lex.triggers)
    lo, hi = spec.source_len_range
    g = spec.frames_per_token
    width = len(str(max(spec.utterance_count - 1, 0)))
    task_json = spec.to_json()
    corpus = []
    for u in range(spec.utterance_count):
        length = int(rng.integers(lo, hi + 1))
        kinds = ["plain"] * length
        for i in range(length - 1):
            if kinds[i] != "plain":
                continue
            if rng.random() < spec.ambiguity_rate:
                d = min(int(rng.integers(1, 4)), length - 1 - i)
                kinds[i] = "amb"
                if kinds[i + d] == "plain":
                    kinds[i + d] = "trig"
        words, reference = [], []
        for kind in kinds:
            if kind == "amb":
                w = amb_ids[int(rng.integers(len(amb_ids)))]
                reference.append(lex.ambiguous[w][0])
            elif kind == "trig":
                w = lex.triggers[int(rng.integers(len(lex.triggers)))]
                reference.append(w)
            else:
                w = lex.plain[int(rng.integers(len(lex.plain)))]
                reference.append(w)
            words.append(w)
        ambiguous, wrong_full = [], []
        for i, w in enumerate(words):
            if w in lex.ambiguous:
                m = lex.ambiguous[w][1]
                t = _find_trigger(words, i, trig_set)
                ambiguous.append([i, t, m])
                if wrong_sense_mass(spec, m, t, length) > 0.5:
                    wrong_full.append(i)
        frames = tuple(w for w in words for _ in range(g))
        meta = {
            "ambiguous": ambiguous,
            "full_context_wrong": wrong_full,
            "frames_per_token": g,
            "task": task_json,
        }
        corpus.append(Utterance(f"utt{u:0{width}d}", SourcePrefix(frames, spec.frame_ms), tuple(reference), meta))
    return corpus


def corpus_stats(corpus: Sequence[Utterance]) -> dict:
    n_words = sum(len(u.reference) for u in corpus)
    n_amb = sum(len(u.metadata["ambiguous"]) for u in corpus)
    n_wrong = sum(len(u.metadata["full_context_wrong"]) for u in corpus)
    return {
        "utterances": len(corpus),
        "words": n_words,
        "ambiguous": n_amb,
        "ambiguous_rate": n_amb / n_words if n_words else 0.0,
        "full_context_wrong": n_wrong,
        "full_context_wrong_rate": n_wrong / n_amb if n_amb else 0.0,
    }


def write_corpus(corpus: Sequence[Utterance], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for utt in corpus:
            fh.write(json.dumps(utt.to_json(), sort_keys=True, separators=(",", ":")) + "\n")


def read_corpus(path) -> Tuple[List[Utterance], TaskSpec]:
    corpus, task = [], None
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise CorpusError(f"{path}: cannot open corpus ({exc.strerror})") from exc
    with fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                meta = obj["metadata"]
                utt_task = TaskSpec.from_json(meta["task"])
                utt = Utterance(str(obj["id"]), SourcePrefix(obj["frames"], obj["frame_ms"]),
                                tuple(int(t) for t in obj["reference"]), meta)
            except (ValueError, KeyError, TypeError) as exc:
                raise CorpusError(f"{path}:{lineno}: bad utterance record ({exc})") from exc
            if task is None:
                task = utt_task
            elif utt_task != task:
                raise CorpusError(f"{path}:{lineno}: utterance generated from a different task")
            corpus.append(utt)
    if task is None:
        raise CorpusError(f"{path}: empty corpus")
    return corpus, task


class _Encoded:
    __slots__ = ("words", "cache")

    def __init__(self, words):
        self.words = words
        self.cache = {}


class SyntheticModel(TranslationModel):
    """Oracle-style model for a :class:`TaskSpec` (see module docstring)."""

    def __init__(self, spec: TaskSpec):
        self.spec = spec
        self.vocab = Vocabulary.numbered(spec.vocab_size)
        self.lexicon = Lexicon.build(spec, np.random.default_rng(spec.seed))
        self._triggers = frozenset(self.lexicon.triggers)

    def __reduce__(self):
        return (SyntheticModel, (self.spec,))

    def encode(self, prefix: SourcePrefix) -> EncoderHandle:
        g = self.spec.frames_per_token
        n = len(prefix) // g
        words = tuple(prefix.frames[i * g] for i in range(n))
        return EncoderHandle(state=_Encoded(words), frames_seen=len(prefix))

    def target_core(self, words: Sequence[int], j: int) -> Dict[int, float]:
        """Noise-free distribution at target position ``j`` as ``{token: mass}``."""
        if j >= len(words):
            return {self.vocab.eos: 1.0}
        w = words[j]
        if w in self.lexicon.ambiguous:
            alt, m = self.lexicon.ambiguous[w]
            wrong = wrong_sense_mass(self.spec, m, _find_trigger(words, j, self._triggers), len(words))
            return {w: wrong, alt: 1.0 - wrong}
        return {w: 1.0}

    def attention(self, j: int, frames_seen: int) -> np.ndarray:
        g = self.spec.frames_per_token
        if frames_seen == 0:
            return np.zeros(0)
        center = j * g + g / 2
        sigma = self.spec.attn_spread * g
        mid = np.arange(frames_seen) + 0.5
        logw = -((mid - center) ** 2) / (2 * sigma * sigma)
        w = np.exp(logw - logw.max())
        return w / w.sum()

    def _decode(self, handle, target_prefix):
        state: _Encoded = handle.state
        j = len(target_prefix) - 1
        hit = state.cache.get(j)
        if hit is None:
            v = self.spec.vocab_size
            probs = np.full(v, self.spec.noise / v)
            for tok, mass in self.target_core(state.words, j).items():
                probs[tok] += (1.0 - self.spec.noise) * mass
            hit = (ProbDist(probs / probs.sum()), AttentionRow(self.attention(j, handle.frames_seen)))
            state.cache[j] = hit
        return hit


def expected_sense_probs(spec: TaskSpec, m: float, trigger_pos: Optional[int], n_received: int) -> Tuple[float, float]:
    """(wrong, correct) probabilities including the noise floor."""
    wrong = wrong_sense_mass(spec, m, trigger_pos, n_received)
    floor = spec.noise / spec.vocab_size
    return (1 - spec.noise) * wrong + floor, (1 - spec.noise) * (1 - wrong) + floor


def describe(spec: TaskSpec) -> str:
    lex = Lexicon.build(spec, np.random.default_rng(spec.seed))
    return (f"{len(lex.plain)} plain, {len(lex.triggers)} trigger, {len(lex.ambiguous)} ambiguous words; "
            f"{spec.frames_per_token * spec.frame_ms} ms per word")


__all__ = [
    "CorpusError", "TaskSpec", "Lexicon", "Utterance", "SyntheticModel", "generate", "corpus_stats",
    "write_corpus", "read_corpus", "wrong_sense_mass", "expected_sense_probs", "describe",
]
