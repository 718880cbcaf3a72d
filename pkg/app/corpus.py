"""Vocabularies, id encoding and training-pair preparation."""
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union
import logging

import numpy as np

from app.exceptions import LengthMismatch, TreeSyntaxError, ValidationError, VocabularyError
from app.treebank import tokenize_linear, validate

EOS = "</s>"
UNK = "<unk>"
EOS_ID = 0
UNK_ID = 1
RESERVED = (EOS, UNK)


@dataclass(frozen=True)
class Vocabulary:
    tokens: Tuple[str, ...] = RESERVED
    _index: Dict[str, int] = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if self.tokens[:len(RESERVED)] != RESERVED:
            raise VocabularyError(f"Vocabulary must start with the reserved symbols {RESERVED}")
        if len(set(self.tokens)) != len(self.tokens):
            raise VocabularyError("Vocabulary tokens must be unique")
        self._index.update({token: i for i, token in enumerate(self.tokens)})

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def id_of(self, token: str) -> int:
        return self._index.get(token, UNK_ID)

    def token_of(self, token_id: int) -> str:
        if not 0 <= token_id < len(self.tokens):
            raise VocabularyError(f"Token id {token_id} out of range for vocabulary of size {len(self)}")
        return self.tokens[token_id]


@dataclass(frozen=True)
class ParallelPair:
    source: Tuple[int, ...]
    target: Tuple[int, ...]
    target_is_tree: bool = False

    def __post_init__(self):
        object.__setattr__(self, "source", tuple(self.source))
        object.__setattr__(self, "target", tuple(self.target))
        if not self.source or not self.target:
            raise ValidationError("Both sides of a parallel pair must be nonempty")


def build_vocab(lines: Iterable[Sequence[str]], max_size: Optional[int] = None) -> Vocabulary:
    """Ranks tokens by frequency, ties broken lexicographically."""
    counts = Counter(token for line in lines for token in line if token not in RESERVED)
    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    if max_size is not None:
        ranked = ranked[:max(0, max_size - len(RESERVED))]
    vocab = Vocabulary(RESERVED + tuple(token for token, _ in ranked))
    logging.info(f"Built vocabulary of {len(vocab)} entries from {len(counts)} token types")
    return vocab


def encode(vocab: Vocabulary, tokens: Sequence[str]) -> List[int]:
    return [vocab.id_of(token) for token in tokens] + [EOS_ID]


def decode(vocab: Vocabulary, ids: Sequence[int]) -> List[str]:
    """Maps ids back to tokens, stopping at the first end-of-sequence id."""
    tokens: List[str] = []
    for token_id in ids:
        token = vocab.token_of(int(token_id))
        if token_id == EOS_ID:
            break
        tokens.append(token)
    return tokens


def prepare_pairs(src_lines: Sequence[Sequence[str]], tgt_lines: Sequence[Sequence[str]],
                  src_vocab: Vocabulary, tgt_vocab: Vocabulary,
                  max_src: int = 50, max_tgt: int = 150,
                  target_is_tree: bool = False) -> List[ParallelPair]:
    """Encodes the pairs within the length limits; tree targets must also be well-formed."""
    if len(src_lines) != len(tgt_lines):
        raise LengthMismatch(f"Source has {len(src_lines)} lines but target has {len(tgt_lines)}")
    pairs, too_long, malformed = [], 0, 0
    for src, tgt in zip(src_lines, tgt_lines):
        if len(src) > max_src or len(tgt) > max_tgt:
            too_long += 1
        elif target_is_tree and not _is_tree(tgt):
            malformed += 1
        else:
            pairs.append(ParallelPair(encode(src_vocab, src), encode(tgt_vocab, tgt), target_is_tree))
    if too_long:
        logging.warning(f"Dropped {too_long} pairs exceeding length limits ({max_src}, {max_tgt})")
    if malformed:
        logging.warning(f"Dropped {malformed} pairs whose target is not a well-formed tree")
    return pairs


def _is_tree(tokens: Sequence[str]) -> bool:
    try:
        return validate(tokenize_linear(" ".join(tokens))).valid
    except TreeSyntaxError:
        return False


def batches(pairs: Sequence[ParallelPair], batch_size: int,
            rng: np.random.Generator) -> Iterator[List[ParallelPair]]:
    """Yields contiguous windows of a shuffled ordering; the last window may be short."""
    order = rng.permutation(len(pairs))
    for start in range(0, len(order), batch_size):
        yield [pairs[i] for i in order[start:start + batch_size]]


@dataclass(frozen=True)
class PaddedBatch:
    source: np.ndarray
    source_mask: np.ndarray
    target: np.ndarray
    target_mask: np.ndarray

    @property
    def target_tokens(self) -> float:
        return float(self.target_mask.sum())


def pad_batch(pairs: Sequence[ParallelPair]) -> PaddedBatch:
    """Right-pads both sides with the end-of-sequence id."""
    if not pairs:
        raise ValidationError("Cannot pad an empty batch")
    source, source_mask = _pad([pair.source for pair in pairs])
    target, target_mask = _pad([pair.target for pair in pairs])
    return PaddedBatch(source, source_mask, target, target_mask)


def _pad(rows: Sequence[Sequence[int]]) -> Tuple[np.ndarray, np.ndarray]:
    width = max(len(row) for row in rows)
    ids = np.full((len(rows), width), EOS_ID, dtype=np.int64)
    mask = np.zeros((len(rows), width), dtype=np.float64)
    for i, row in enumerate(rows):
        ids[i, :len(row)] = row
        mask[i, :len(row)] = 1.0
    return ids, mask


def read_token_lines(path: Union[str, Path], encoding: str = "utf-8") -> List[List[str]]:
    with open(path, encoding=encoding) as handle:
        return [line.split() for line in handle]


def save_vocab(vocab: Vocabulary, path: Union[str, Path], encoding: str = "utf-8") -> None:
    body = "".join(f"{token}\n" for token in vocab.tokens[len(RESERVED):])
    Path(path).write_text(body, encoding=encoding)
    logging.info(f"Saved vocabulary of {len(vocab)} entries to {path}")


def load_vocab(path: Union[str, Path], encoding: str = "utf-8") -> Vocabulary:
    tokens = [line.rstrip("\n") for line in Path(path).read_text(encoding=encoding).splitlines()]
    return Vocabulary(RESERVED + tuple(token for token in tokens if token))
