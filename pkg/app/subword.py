"""Byte-pair encoding: learning merges, segmenting words, merging sub-words back.

Learning follows the usual subword-nmt loop over a word-frequency dictionary:
words are split into characters, the last character carries an end-of-word
sentinel, and the most frequent adjacent pair is merged until the requested
number of merges is reached or no pair occurs twice.
"""
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple, Union
import logging

from app.exceptions import ValidationError

END_OF_WORD = "</w>"
DEFAULT_MARKER = "@@"
MERGES_HEADER = "#version: 0.2"

Pair = Tuple[str, str]


@dataclass(frozen=True)
class BpeModel:
    merges: Tuple[Pair, ...] = ()
    continuation_marker: str = DEFAULT_MARKER
    _ranks: Dict[Pair, int] = field(default_factory=dict, init=False, repr=False, compare=False)
    _cache: Dict[str, Tuple[str, ...]] = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "merges", tuple(tuple(pair) for pair in self.merges))
        if not self.continuation_marker or any(ch.isspace() for ch in self.continuation_marker):
            raise ValidationError("continuation_marker must be nonempty and contain no whitespace")
        if len(set(self.merges)) != len(self.merges):
            raise ValidationError("BPE merges must be pairwise distinct")
        self._ranks.update({pair: rank for rank, pair in enumerate(self.merges)})

    def segment_word(self, word: str) -> Tuple[str, ...]:
        if word not in self._cache:
            self._cache[word] = self._segment(word)
        return self._cache[word]

    def _segment(self, word: str) -> Tuple[str, ...]:
        if not word:
            return ()
        _check_word(word, self.continuation_marker)
        symbols = _word_symbols(word)
        while len(symbols) > 1:
            ranked = [(self._ranks[pair], pair) for pair in zip(symbols, symbols[1:]) if pair in self._ranks]
            if not ranked:
                break
            _, best = min(ranked)
            symbols = _merge_symbols(symbols, best)
        pieces = [symbol + self.continuation_marker for symbol in symbols[:-1]]
        pieces.append(symbols[-1][:-len(END_OF_WORD)])
        return tuple(pieces)


def _check_word(word: str, continuation_marker: str) -> None:
    if word.endswith(continuation_marker):
        raise ValidationError(f"Word {word!r} ends with the continuation marker {continuation_marker!r}")


def _word_symbols(word: str) -> Tuple[str, ...]:
    return tuple(word[:-1]) + (word[-1] + END_OF_WORD,)


def _merge_symbols(symbols: Tuple[str, ...], pair: Pair) -> Tuple[str, ...]:
    merged: List[str] = []
    i = 0
    while i < len(symbols):
        if i < len(symbols) - 1 and (symbols[i], symbols[i + 1]) == pair:
            merged.append(symbols[i] + symbols[i + 1])
            i += 2
        else:
            merged.append(symbols[i])
            i += 1
    return tuple(merged)


def _pair_counts(vocab: Dict[Tuple[str, ...], int]) -> Counter:
    counts: Counter = Counter()
    for symbols, freq in vocab.items():
        for pair in zip(symbols, symbols[1:]):
            counts[pair] += freq
    return counts


def learn_bpe(corpus: Iterable[Sequence[str]], num_merges: int,
              continuation_marker: str = DEFAULT_MARKER) -> BpeModel:
    """Learns up to ``num_merges`` merges from token lines.

    Frequency ties are broken by the lexicographically smallest pair.
    """
    if num_merges < 0:
        raise ValidationError(f"num_merges must not be negative: {num_merges}")
    word_counts = Counter(word for line in corpus for word in line)
    for word in word_counts:
        _check_word(word, continuation_marker)
    vocab = {_word_symbols(word): freq for word, freq in word_counts.items()}
    merges: List[Pair] = []
    while len(merges) < num_merges:
        counts = _pair_counts(vocab)
        if not counts:
            break
        best, freq = min(counts.items(), key=lambda item: (-item[1], item[0]))
        if freq < 2:
            break
        merges.append(best)
        vocab = {_merge_symbols(symbols, best): count for symbols, count in vocab.items()}
    logging.info(f"Learned {len(merges)} BPE merges from {len(word_counts)} word types")
    return BpeModel(merges=tuple(merges), continuation_marker=continuation_marker)


def apply_bpe(model: BpeModel, line: Sequence[str]) -> List[str]:
    return [piece for word in line for piece in model.segment_word(word)]


def revert_bpe(tokens: Sequence[str], continuation_marker: str = DEFAULT_MARKER) -> List[str]:
    words: List[str] = []
    pending = ""
    for token in tokens:
        if token.endswith(continuation_marker):
            pending += token[:-len(continuation_marker)]
        else:
            words.append(pending + token)
            pending = ""
    if pending:
        words.append(pending)
    return words


def save_merges(model: BpeModel, path: Union[str, Path], encoding: str = "utf-8") -> None:
    lines = [MERGES_HEADER] + [f"{left} {right}" for left, right in model.merges]
    Path(path).write_text("\n".join(lines) + "\n", encoding=encoding)
    logging.info(f"Saved {len(model.merges)} merges to {path}")


def load_merges(path: Union[str, Path], continuation_marker: str = DEFAULT_MARKER,
                encoding: str = "utf-8") -> BpeModel:
    merges: List[Pair] = []
    for number, line in enumerate(Path(path).read_text(encoding=encoding).splitlines(), start=1):
        if not line.strip() or (number == 1 and line.startswith("#version")):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValidationError(f"Malformed merge on line {number} of {path}: {line!r}")
        merges.append((parts[0], parts[1]))
    return BpeModel(merges=tuple(merges), continuation_marker=continuation_marker)
