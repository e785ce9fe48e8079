import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from simulcfm.beam import BeamConfig, beam_decode
from simulcfm.cfm import CfmConfig, cfm_score
from simulcfm.core import ContractViolation, ProbDist, Vocabulary
from simulcfm.model import SourcePrefix, TableModel

SRC = SourcePrefix((1, 2, 3))


def random_model(vocab_size, seed, bos_mass=True, concentration=0.5):
    rng = np.random.default_rng(seed)
    cache = {}

    def default(frames, prefix):
        if prefix not in cache:
            p = rng.dirichlet(np.full(vocab_size, concentration))
            if not bos_mass:
                p[0] = 0.0
                p /= p.sum()
            cache[prefix] = p
        return cache[prefix], None

    return TableModel(Vocabulary.numbered(vocab_size), default=default)


def enumerate_all(model, handle, forced, max_len):
    """Every continuation that ends in EOS or reaches ``max_len``, with its log score."""
    eos, out = model.vocab.eos, []

    def walk(prefix, score):
        n = len(prefix) - len(forced)
        if n == max_len or (n and prefix[-1] == eos):
            out.append((score, prefix[len(forced):]))
            return
        logp = model.decode_step(handle, prefix)[0].log()
        for t in range(len(model.vocab)):
            walk(prefix + (t,), score + logp[t])

    walk(tuple(forced), 0.0)
    return out


def test_greedy_identity():
    model = random_model(6, 0, concentration=0.3)
    h = model.encode(SRC)
    hyp = beam_decode(model, h, (0,), BeamConfig(beam_size=1, length_norm_alpha=0), max_new_tokens=5)
    prefix = (0,)
    for tok in hyp.continuation:
        assert tok == model.decode_step(h, prefix)[0].argmax() or tok == model.vocab.eos
        prefix += (tok,)


def test_forced_prefix_reappears_and_is_unscored():
    model = random_model(6, 1)
    h = model.encode(SRC)
    hyp = beam_decode(model, h, (0, 4, 2, 5), BeamConfig(), max_new_tokens=3)
    assert hyp.tokens[:4] == (0, 4, 2, 5)
    assert len(hyp.step_dists) == len(hyp.step_attn) == len(hyp.continuation)
    first = hyp.continuation[0]
    expected_step0 = model.decode_step(h, (0, 4, 2, 5))[0].log()[first]
    raw = hyp.score * len(hyp.continuation)
    steps = [d.log()[t] for d, t in zip(hyp.step_dists, hyp.continuation)]
    assert steps[0] == expected_step0
    assert raw == pytest.approx(sum(steps))


def test_contract_errors():
    model = random_model(5, 2)
    h = model.encode(SRC)
    with pytest.raises(ContractViolation):
        beam_decode(model, h, (3,), BeamConfig(), max_new_tokens=2)
    with pytest.raises(ContractViolation):
        beam_decode(model, h, (0,), BeamConfig())
    with pytest.raises(ValueError):
        BeamConfig(max_new_tokens=0)
    with pytest.raises(ValueError):
        BeamConfig(beam_size=0)


@pytest.mark.parametrize("seed", range(40))
def test_exhaustive_argmax_small_vocab(seed):
    model = random_model(4, seed, bos_mass=False)
    h = model.encode(SRC)
    hyp = beam_decode(model, h, (0,), BeamConfig(beam_size=4, length_norm_alpha=0), max_new_tokens=3)
    best_score, best = max(enumerate_all(model, h, (0,), 3), key=lambda sc: sc[0])
    assert hyp.continuation == best
    assert hyp.score == pytest.approx(best_score, abs=1e-12)


@settings(max_examples=150, deadline=None)
@given(st.integers(3, 5), st.integers(1, 4), st.integers(0, 10 ** 6), st.sampled_from([0.2, 0.5, 2.0]))
def test_no_equal_length_continuation_scores_higher(vocab_size, max_len, seed, conc):
    model = random_model(vocab_size, seed, concentration=conc)
    h = model.encode(SRC)
    hyp = beam_decode(model, h, (0,), BeamConfig(beam_size=vocab_size, length_norm_alpha=0), max_new_tokens=max_len)
    same = [s for s, c in enumerate_all(model, h, (0,), max_len) if len(c) == len(hyp.continuation)]
    assert hyp.score >= max(same) - 1e-12


@settings(max_examples=60, deadline=None)
@given(st.integers(4, 8), st.integers(0, 10 ** 6), st.integers(1, 5), st.floats(0, 2))
def test_absent_rescorer_equals_identity_rescorer(vocab_size, seed, beam, alpha):
    model = random_model(vocab_size, seed)
    h = model.encode(SRC)
    cfg = BeamConfig(beam_size=beam, length_norm_alpha=alpha)
    plain = beam_decode(model, h, (0,), cfg, max_new_tokens=4)
    ident = beam_decode(model, h, (0,), cfg, step0_rescorer=lambda d: d.log(), max_new_tokens=4)
    assert plain.tokens == ident.tokens and plain.score == ident.score


def test_eos_absorbs():
    model = random_model(5, 3, concentration=0.3)
    h = model.encode(SRC)
    for beam in (1, 3, 5):
        hyp = beam_decode(model, h, (0,), BeamConfig(beam_size=beam), max_new_tokens=6)
        cont = hyp.continuation
        if model.vocab.eos in cont:
            assert cont.index(model.vocab.eos) == len(cont) - 1 and hyp.finished


def test_rescorer_only_touches_first_step():
    v = Vocabulary.numbered(5)
    # step 0 prefers t2; feedback makes t3 the contrastive winner
    p0 = [0.0, 0.02, 0.58, 0.38, 0.02]
    later = [0.0, 0.9, 0.04, 0.03, 0.03]
    model = TableModel(v, {(3, (0,)): (p0, None)}, default=lambda n, pre: (later, None))
    h = model.encode(SRC)
    p_f = ProbDist([0.0, 0.02, 0.9, 0.06, 0.02])
    resc = lambda d: cfm_score(d, p_f, CfmConfig())
    cfg = BeamConfig(beam_size=2)
    assert beam_decode(model, h, (0,), cfg, max_new_tokens=3).continuation == (2, 1)
    on = beam_decode(model, h, (0,), cfg, resc, max_new_tokens=3)
    assert on.continuation == (3, 1)
    # selection-only: the contrast chooses the step-0 survivors, plain scores rank them
    sel = beam_decode(model, h, (0,), BeamConfig(beam_size=1), resc, persist_rescore=False, max_new_tokens=3)
    assert sel.continuation == (3, 1)
    assert sel.score == pytest.approx((np.log(0.38) + np.log(0.9)) / 2)
    assert on.score != sel.score
    both = beam_decode(model, h, (0,), cfg, resc, persist_rescore=False, max_new_tokens=3)
    assert both.continuation == (2, 1)
