from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from app.corpus import EOS
from app.decoding import AttentionRecord
from app.input_validators import InputValidator
from app.treebank import is_bracket

DEFAULT_THRESHOLD = 0.5


@dataclass(frozen=True)
class Alignment:
    """Hard links as (target index, source index), sorted, 0-based."""
    pairs: Tuple[Tuple[int, int], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(sorted((int(t), int(s)) for t, s in self.pairs)))

    def source_positions(self) -> List[int]:
        """a(i) for the aligned target positions in order."""
        return [s for _, s in self.pairs]

    def targets(self) -> List[int]:
        return sorted({t for t, _ in self.pairs})

    def __len__(self) -> int:
        return len(self.pairs)


def scored_rows(record: AttentionRecord, terminal_only: bool = False) -> List[int]:
    """Target rows that take part in alignment; the end-of-sequence row never does."""
    rows = []
    for i, token in enumerate(record.tgt_tokens):
        if token == EOS:
            continue
        if terminal_only and is_bracket(token):
            continue
        rows.append(i)
    return rows


def scored_columns(record: AttentionRecord) -> int:
    """Source columns open to alignment; a trailing end-of-sequence column is left out."""
    columns = len(record.src_tokens)
    if columns > 1 and record.src_tokens[-1] == EOS:
        return columns - 1
    return columns


class Aligner(ABC):
    @abstractmethod
    def align(self, record: AttentionRecord) -> Alignment:
        pass

    def __str__(self) -> str:
        return self.__class__.__name__


class ArgmaxAligner(Aligner):
    """Each included target row links to its highest-weighted source column."""

    def __init__(self, terminal_only: bool = False):
        self.terminal_only = terminal_only

    def align(self, record: AttentionRecord) -> Alignment:
        columns = scored_columns(record)
        # np.argmax returns the first maximum, so ties go to the lowest column
        return Alignment(tuple((i, int(np.argmax(record.weights[i, :columns])))
                               for i in scored_rows(record, self.terminal_only)))


class ThresholdAligner(Aligner):
    """Every pair whose weight is strictly above the threshold."""

    def __init__(self, threshold: float = DEFAULT_THRESHOLD, terminal_only: bool = False):
        self.threshold = InputValidator.validate_threshold(threshold)
        self.terminal_only = terminal_only

    def align(self, record: AttentionRecord) -> Alignment:
        pairs, columns = [], scored_columns(record)
        for i in scored_rows(record, self.terminal_only):
            pairs.extend((i, int(j)) for j in np.flatnonzero(record.weights[i, :columns] > self.threshold))
        return Alignment(tuple(pairs))


class AlignerFactory:
    _aligners: Dict[str, type] = {
        'argmax': ArgmaxAligner,
        'threshold': ThresholdAligner,
    }

    @classmethod
    def register_aligner(cls, name: str, aligner_class: type) -> None:
        if not issubclass(aligner_class, Aligner):
            raise TypeError("Aligner class must inherit from Aligner")
        cls._aligners[name.lower()] = aligner_class

    @classmethod
    def create_aligner(cls, aligner_type: str, **options) -> Aligner:
        aligner_class = cls._aligners.get(aligner_type.lower())
        if not aligner_class:
            raise ValueError(f"Unknown aligner: {aligner_type}")
        return aligner_class(**options)


def hard_align_argmax(record: AttentionRecord, terminal_only: bool = False) -> Alignment:
    return ArgmaxAligner(terminal_only).align(record)


def hard_align_threshold(record: AttentionRecord, threshold: float = DEFAULT_THRESHOLD) -> Alignment:
    return ThresholdAligner(threshold).align(record)
