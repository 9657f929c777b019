import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from silt.corpus import DEFAULT_WORDS
from silt.vocab import build_joint_vocab, train_bpe

SENTENCES = [
    "time year way",
    "day man thing",
    "life hand part",
    "child eye woman",
    "place work week",
    "case point group",
    "number fact night",
    "home water room",
    "area money story",
    "month book word side house",
]


@pytest.fixture(scope="session")
def bpe_small():
    # limited merges: most words stay multi-token
    corpus = SENTENCES + [s.upper() for s in SENTENCES]
    return train_bpe(corpus, 280)


@pytest.fixture(scope="session")
def bpe_words():
    # merge to saturation: every word (and its spaced form) is one token; the
    # leading space makes even the first list entry appear in spaced form
    corpus = [" " + " ".join(DEFAULT_WORDS), " " + " ".join(w.upper() for w in DEFAULT_WORDS)]
    corpus += [w for w in DEFAULT_WORDS] + [w.upper() for w in DEFAULT_WORDS]
    return train_bpe(corpus, 4096)


@pytest.fixture(scope="session")
def vocab_small(bpe_small):
    return build_joint_vocab(bpe_small.vocab_size, 16)
