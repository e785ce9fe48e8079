"""Simultaneous translation decoding with contrastive feedback from unstable predictions."""

__version__ = "0.1.0"

from .beam import BeamConfig, beam_decode
from .cfm import CfmConfig, cfm_score, contrast, extract_feedback, plausible_set
from .core import (AttentionRow, EmissionEvent, FeedbackState, Hypothesis, PolicyDecision,
                   ProbDist, Vocabulary, normalize)
from .engine import StreamState, step_chunk, translate
from .metrics import LatencyRecord, bootstrap_ci, corpus_bleu, laal
from .model import EncoderHandle, SourcePrefix, TableModel, TranslationModel
from .policies import PolicyConfig
from .synthetic import SyntheticModel, TaskSpec, generate

__all__ = [
    "BeamConfig", "beam_decode", "CfmConfig", "cfm_score", "contrast", "extract_feedback", "plausible_set",
    "AttentionRow", "EmissionEvent", "FeedbackState", "Hypothesis", "PolicyDecision", "ProbDist", "Vocabulary",
    "normalize", "StreamState", "step_chunk", "translate", "LatencyRecord", "bootstrap_ci", "corpus_bleu", "laal",
    "EncoderHandle", "SourcePrefix", "TableModel", "TranslationModel", "PolicyConfig", "SyntheticModel",
    "TaskSpec", "generate",
]
