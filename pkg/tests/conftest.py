import numpy as np
import pytest

from app.corpus import EOS_ID, ParallelPair
from app.model import ModelConfig, init_params
from app.toolkit_config import ToolkitConfig
from app.treebank import Internal, Leaf

LABELS = ("S", "NP", "VP", "PP", "SBAR", "ADJP")
PLAIN_WORDS = ("Jane", "had", "a", "cat", ".", "who", "un@@", "born", "x")
ODD_WORDS = PLAIN_WORDS + ("(", ")", "\\x", "(a", ")b")

JANE_TREE = Internal("ROOT", (
    Internal("S", (
        Internal("NP", (Leaf("Jane"),)),
        Internal("VP", (Leaf("had"), Internal("NP", (Leaf("a"), Leaf("cat"))))),
        Leaf("."),
    )),
))
JANE_LINE = "(ROOT (S (NP Jane )NP (VP had (NP a cat )NP )VP . )S )ROOT"


def make_random_tree(rng: np.random.Generator, words=PLAIN_WORDS, depth: int = 0):
    if depth > 0 and (depth >= 4 or rng.random() < 0.35):
        return Leaf(words[int(rng.integers(len(words)))])
    children = tuple(make_random_tree(rng, words, depth + 1) for _ in range(int(rng.integers(1, 4))))
    return Internal(LABELS[int(rng.integers(len(LABELS)))], children)


def make_pairs(rng: np.random.Generator, count: int, src_vocab: int, tgt_vocab: int, max_len: int = 5):
    pairs = []
    for _ in range(count):
        src = [int(i) for i in rng.integers(2, src_vocab, size=int(rng.integers(1, max_len + 1)))]
        tgt = [int(i) for i in rng.integers(2, tgt_vocab, size=int(rng.integers(1, max_len + 1)))]
        pairs.append(ParallelPair(src + [EOS_ID], tgt + [EOS_ID]))
    return pairs


@pytest.fixture
def jane_tree():
    return JANE_TREE


@pytest.fixture
def random_trees():
    rng = np.random.default_rng(42)
    return [make_random_tree(rng) for _ in range(1000)]


@pytest.fixture
def tiny_config():
    return ModelConfig(src_vocab_size=9, tgt_vocab_size=7, embed_dim=4, hidden_dim=5, seed=3)


@pytest.fixture
def tiny_params(tiny_config):
    return init_params(tiny_config)


@pytest.fixture
def tiny_pairs():
    return make_pairs(np.random.default_rng(0), 6, 9, 7)


@pytest.fixture
def toolkit_config(tmp_path, monkeypatch):
    for name in ("TOOLKIT_LOG_DIR", "TOOLKIT_LOG_FILE", "TOOLKIT_LOG_LEVEL", "TOOLKIT_DEFAULT_ENCODING"):
        monkeypatch.delenv(name, raising=False)
    return ToolkitConfig(base_dir=tmp_path)
