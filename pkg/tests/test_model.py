import numpy as np
import pytest

from simulcfm.core import ContractViolation
from simulcfm.model import SourcePrefix
from simulcfm.synthetic import SyntheticModel, TaskSpec, generate

from conftest import BOS, scripted_model


@pytest.fixture(scope="module")
def synth():
    spec = TaskSpec(utterance_count=20)
    return SyntheticModel(spec), generate(spec)


def test_encode_echoes_length(synth):
    model, corpus = synth
    assert model.encode(SourcePrefix(())).frames_seen == 0
    assert model.encode(corpus[0].source.take(25)).frames_seen == 25
    assert scripted_model().encode(SourcePrefix(range(4))).frames_seen == 4


def test_decode_requires_bos(synth):
    model, corpus = synth
    h = model.encode(corpus[0].source)
    with pytest.raises(ContractViolation):
        model.decode_step(h, ())
    with pytest.raises(ContractViolation):
        model.decode_step(h, (5,))


def test_source_prefix_validation():
    with pytest.raises(ValueError):
        SourcePrefix((1, 2), frame_ms=0)
    assert SourcePrefix((1, 2, 3), 40).duration_ms == 120


def test_decode_is_pure_under_replay(synth):
    model, corpus = synth
    rng = np.random.default_rng(0)
    seen = {}
    for _ in range(1000):
        utt = corpus[int(rng.integers(len(corpus)))]
        n = int(rng.integers(0, len(utt.source) + 1))
        depth = int(rng.integers(0, len(utt.reference) + 2))
        prefix = (BOS,) + utt.reference[:depth]
        # a fresh handle each time so no cache is shared between replays
        dist, attn = model.decode_step(model.encode(utt.source.take(n)), prefix)
        assert len(attn) == n
        if n:
            assert abs(attn.weights.sum() - 1) <= 1e-6
        key = (utt.id, n, prefix)
        if key in seen:
            assert np.array_equal(seen[key][0], dist.probs)
            assert np.array_equal(seen[key][1], attn.weights)
        seen[key] = (dist.probs.copy(), attn.weights.copy())
    assert len(seen) < 1000  # some keys were replayed


def test_table_model_uniform_attention_and_missing_key():
    from simulcfm.model import TableModel
    from conftest import VOCAB6
    m = TableModel(VOCAB6, {(2, (BOS,)): ([0, 1, 0, 0, 0, 0], None)})
    dist, attn = m.decode_step(m.encode(SourcePrefix((7, 7))), (BOS,))
    assert dist.argmax() == 1 and attn.weights.tolist() == [0.5, 0.5]
    with pytest.raises(KeyError):
        m.decode_step(m.encode(SourcePrefix((7,))), (BOS,))
