import numpy as np
import pytest

from simulcfm.core import Vocabulary
from simulcfm.model import TableModel

# scripted scenario vocabulary: 0 <s>, 1 </s>, then a b c d
BOS, EOS, A, B, C, D = range(6)
VOCAB6 = Vocabulary(("<s>", "</s>", "a", "b", "c", "d"))


def peaked(size=6, **mass):
    """Distribution with the named masses; the rest spread over unnamed ids."""
    names = {"a": A, "b": B, "c": C, "d": D, "eos": EOS, "bos": BOS}
    probs = np.zeros(size)
    for k, v in mass.items():
        probs[names[k]] = v
    rest = [i for i in range(size) if probs[i] == 0]
    probs[rest] = (1.0 - probs.sum()) / len(rest)
    return probs


# Three chunks of two 100 ms frames. Chunk 1 proposes "a c", chunk 2 agrees on
# "a" and proposes "b"; in chunk 3 the plain argmax stays on "b" but the
# contrast against chunk 2's feedback moves it to "c".
SCRIPT = {
    (2, (BOS,)): peaked(a=0.6, b=0.3, eos=0.01),
    (2, (BOS, A)): peaked(c=0.9, eos=0.01),
    (2, (BOS, A, C)): peaked(eos=0.9),
    (4, (BOS,)): peaked(a=0.7, b=0.2, eos=0.01),
    (4, (BOS, A)): peaked(b=0.8, c=0.15, eos=0.01),
    (4, (BOS, A, B)): peaked(eos=0.9),
    (6, (BOS, A)): peaked(b=0.5, c=0.45, eos=0.01),
    (6, (BOS, A, B)): peaked(eos=0.9),
    (6, (BOS, A, C)): peaked(eos=0.9),
}


def scripted_model():
    return TableModel(VOCAB6, {k: (v, None) for k, v in SCRIPT.items()},
                      default=lambda n, prefix: (peaked(eos=0.9), None))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
