"""Synthetic reordering corpus: verb-final source sentences, verb-medial target trees.

Every pair comes with its gold alignment between target terminals and source
positions, so the rule ``VP(x0:TER x1:NP) -> x1 x0`` can be recovered from it.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple, Union
import logging

import numpy as np

from app.aligners import Alignment
from app.analysis import write_alignments
from app.input_validators import InputValidator
from app.treebank import ConstituencyTree, Internal, Leaf, linearize, serialize_linear, tree_yield

NAMES = (("Jane", "Jane"), ("John", "Johann"), ("Mary", "Maria"), ("Peter", "Peter"), ("Anna", "Anna"))
# english, german, german indefinite accusative article, german definite dative article
NOUNS = (
    ("cat", "Katze", "eine", "der"),
    ("dog", "Hund", "einen", "dem"),
    ("book", "Buch", "ein", "dem"),
    ("car", "Auto", "ein", "dem"),
    ("apple", "Apfel", "einen", "dem"),
    ("house", "Haus", "ein", "dem"),
    ("friend", "Freund", "einen", "dem"),
)
ADJECTIVES = (("big", "grosse"), ("red", "rote"), ("old", "alte"), ("small", "kleine"))
VERBS = (("bought", "gekauft"), ("seen", "gesehen"), ("found", "gefunden"),
         ("sold", "verkauft"), ("painted", "gemalt"))


@dataclass(frozen=True)
class ToyPair:
    source: Tuple[str, ...]
    tree: ConstituencyTree
    alignment: Alignment

    @property
    def target_tokens(self) -> List[str]:
        return [str(token) for token in linearize(self.tree)]

    @property
    def surface(self) -> List[str]:
        return tree_yield(self.tree)


class _Builder:
    """Collects source words and target leaves with their links."""

    def __init__(self):
        self.source: List[str] = []
        self.links: List[Tuple[int, int]] = []
        self.leaves = 0

    def word(self, source_word: str) -> int:
        self.source.append(source_word)
        return len(self.source) - 1

    def leaf(self, text: str, source_position: int) -> Leaf:
        self.links.append((self.leaves, source_position))
        self.leaves += 1
        return Leaf(text)


def _pick(rng: np.random.Generator, table: Sequence):
    return table[int(rng.integers(len(table)))]


def _sample(rng: np.random.Generator, adjective_rate: float, pp_rate: float) -> ToyPair:
    name = _pick(rng, NAMES)
    verb = _pick(rng, VERBS)
    noun = _pick(rng, NOUNS)
    adjective = _pick(rng, ADJECTIVES) if rng.random() < adjective_rate else None
    companion = _pick(rng, NOUNS) if rng.random() < pp_rate else None

    # source order: NAME hat DET [ADJ] NOUN [mit DET NOUN] VERB .
    b = _Builder()
    s_name, s_aux, s_det = b.word(name[1]), b.word("hat"), b.word(noun[2])
    s_adj = b.word(adjective[1]) if adjective else None
    s_noun = b.word(noun[1])
    if companion:
        s_with, s_det2, s_noun2 = b.word("mit"), b.word(companion[3]), b.word(companion[1])
    s_verb, s_stop = b.word(verb[1]), b.word(".")

    # target leaves are created in yield order so their indices follow the tree
    subject = Internal("NP", (b.leaf(name[0], s_name),))
    has = b.leaf("has", s_aux)
    participle = b.leaf(verb[0], s_verb)
    object_words = [b.leaf("a", s_det)]
    if adjective:
        object_words.append(b.leaf(adjective[0], s_adj))
    object_words.append(b.leaf(noun[0], s_noun))
    inner = [participle, Internal("NP", tuple(object_words))]
    if companion:
        with_leaf = b.leaf("with", s_with)
        inner.append(Internal("PP", (with_leaf, Internal("NP", (b.leaf("the", s_det2),
                                                                 b.leaf(companion[0], s_noun2))))))
    stop = b.leaf(".", s_stop)
    verb_phrase = Internal("VP", (has, Internal("VP", tuple(inner))))
    tree = Internal("ROOT", (Internal("S", (subject, verb_phrase, stop)),))
    return ToyPair(tuple(b.source), tree, Alignment(tuple(b.links)))


def gen_toy(size: int, seed: int = 1234, adjective_rate: float = 0.3, pp_rate: float = 0.3) -> List[ToyPair]:
    size = InputValidator.validate_positive_int(size, "size")
    adjective_rate = InputValidator.validate_fraction(adjective_rate, "adjective_rate")
    pp_rate = InputValidator.validate_fraction(pp_rate, "pp_rate")
    rng = np.random.default_rng(seed)
    pairs = [_sample(rng, adjective_rate, pp_rate) for _ in range(size)]
    logging.info(f"Generated {len(pairs)} toy pairs with seed {seed}")
    return pairs


def write_toy_corpus(pairs: Sequence[ToyPair], prefix: Union[str, Path], encoding: str = "utf-8") -> List[Path]:
    """Writes <prefix>.src, .tree, .txt and .align; returns the paths."""
    prefix = str(prefix)
    paths = [Path(prefix + suffix) for suffix in (".src", ".tree", ".txt", ".align")]
    for path in paths:
        InputValidator.validate_output_path(path)
    src_path, tree_path, text_path, align_path = paths
    src_path.write_text("".join(" ".join(p.source) + "\n" for p in pairs), encoding=encoding)
    tree_path.write_text("".join(serialize_linear(linearize(p.tree)) + "\n" for p in pairs), encoding=encoding)
    text_path.write_text("".join(" ".join(p.surface) + "\n" for p in pairs), encoding=encoding)
    write_alignments((p.alignment for p in pairs), align_path, encoding)
    return paths
