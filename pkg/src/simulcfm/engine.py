"""Chunk-level simultaneous decoding loop with contrastive feedback."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

from .beam import BeamConfig, beam_decode
from .cfm import CfmConfig, extract_feedback, make_rescorer
from .core import ContractViolation, EmissionEvent, FeedbackState
from .model import SourcePrefix, TranslationModel
from .policies import PolicyConfig, decide

CLOCKS = ("ideal", "measured")


class StreamClosed(RuntimeError):
    """A chunk arrived after the final one."""


@dataclass
class StreamState:
    frame_ms: float
    frames_per_token: int = 1
    clock: str = "ideal"
    frames: List[int] = field(default_factory=list)
    emitted: List[int] = field(default_factory=list)
    feedback: FeedbackState = field(default_factory=FeedbackState)
    prev_continuation: Tuple[int, ...] = ()
    events: List[EmissionEvent] = field(default_factory=list)
    chunks: List[dict] = field(default_factory=list)
    compute_ms: float = 0.0
    closed: bool = False

    def __post_init__(self):
        if self.clock not in CLOCKS:
            raise ValueError(f"clock must be one of {CLOCKS}")

    @property
    def frames_consumed(self) -> int:
        return len(self.frames)

    @property
    def ideal_ms(self) -> float:
        return self.frames_consumed * self.frame_ms


def step_chunk(state: StreamState, new_frames: Sequence[int], model: TranslationModel,
               policy: PolicyConfig, beam: BeamConfig, cfm: CfmConfig, is_final: bool) -> StreamState:
    """Consume one chunk: re-encode, decode after the emitted prefix, apply the
    policy, refresh the feedback and log the newly committed tokens."""
    if state.closed:
        raise StreamClosed("stream already received its final chunk")
    if not new_frames and not is_final:
        raise ContractViolation("a non-final chunk must carry frames")
    started = time.perf_counter()

    state.frames.extend(int(f) for f in new_frames)
    handle = model.encode(SourcePrefix(tuple(state.frames), state.frame_ms))
    vocab = model.vocab
    rescorer = make_rescorer(state.feedback, cfm)
    max_new = beam.max_new_tokens or state.frames_consumed // state.frames_per_token + 10
    hyp = beam_decode(model, handle, (vocab.bos, *state.emitted), beam, rescorer,
                      persist_rescore=cfm.persist_contrast_in_score, max_new_tokens=max_new)
    decision = decide(policy, hyp.continuation, hyp.step_dists, hyp.step_attn,
                      handle.frames_seen, state.prev_continuation, is_final, vocab.eos)

    if is_final:
        state.feedback = FeedbackState(None)
        state.prev_continuation = ()
        state.closed = True
    else:
        state.feedback = extract_feedback(policy.kind, decision.unstable)
        state.prev_continuation = decision.unstable_ids

    if state.clock == "measured":
        state.compute_ms += (time.perf_counter() - started) * 1000.0
    wall = state.ideal_ms + (state.compute_ms if state.clock == "measured" else 0.0)
    for tok in decision.stable:
        state.emitted.append(tok)
        state.events.append(EmissionEvent(tok, state.ideal_ms, wall))
    state.chunks.append({
        "frames": state.frames_consumed,
        "hypothesis": list(hyp.continuation),
        "stable": list(decision.stable),
        "unstable": list(decision.unstable_ids),
        "cfm_applied": rescorer is not None,
        "final": is_final,
    })
    return state


def chunk_bounds(n_frames: int, chunk_frames: int) -> List[Tuple[int, int]]:
    if chunk_frames < 1:
        raise ValueError("chunk must hold at least one frame")
    bounds = [(s, min(s + chunk_frames, n_frames)) for s in range(0, n_frames, chunk_frames)]
    return bounds or [(0, 0)]


def translate(source: SourcePrefix, model: TranslationModel, policy: PolicyConfig,
              beam: BeamConfig = BeamConfig(), cfm: CfmConfig = CfmConfig(), chunk_frames: int = 25,
              frames_per_token: int = 1, clock: str = "ideal",
              state: Optional[StreamState] = None) -> StreamState:
    """Run a whole utterance through :func:`step_chunk`, one chunk at a time."""
    state = state or StreamState(frame_ms=source.frame_ms, frames_per_token=frames_per_token, clock=clock)
    bounds = chunk_bounds(len(source), chunk_frames)
    for i, (lo, hi) in enumerate(bounds):
        step_chunk(state, source.frames[lo:hi], model, policy, beam, cfm, is_final=i == len(bounds) - 1)
    return state
