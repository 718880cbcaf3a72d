"""Measurements over translations and their attention: distortion, pronouns,
first-bracket attention, alignment files, BLEU and report tables."""
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union
import json
import logging
import math

import pandas as pd

from app.aligners import Alignment, ThresholdAligner, hard_align_argmax, scored_columns, scored_rows
from app.corpus import Vocabulary
from app.decoding import AttentionRecord, translate_corpus
from app.exceptions import NotATree, ValidationError
from app.training import Checkpoint
from app.treebank import is_bracket

HISTOGRAM_BINS = 8
RELATIVE_PRONOUNS = ("who", "which", "that", "whom", "whose")


# -- distortion ---------------------------------------------------------------

def distortion(alignment: Union[Alignment, Sequence[int]]) -> float:
    """Mean absolute jump between source positions of consecutive target positions.

    d = (1/n) * sum_{i=2..n} |a(i) - a(i-1)|, and 0 for a single position.
    """
    if isinstance(alignment, Alignment):
        targets = [t for t, _ in alignment.pairs]
        if len(set(targets)) != len(targets):
            raise ValidationError("Distortion needs at most one source position per target position")
        positions = alignment.source_positions()
    else:
        positions = [int(p) for p in alignment]
    n = len(positions)
    if n == 0:
        raise ValidationError("Distortion is undefined for an empty alignment")
    return sum(abs(positions[i] - positions[i - 1]) for i in range(1, n)) / n


@dataclass(frozen=True)
class DistortionReport:
    scores: Tuple[float, ...]
    histogram: Tuple[int, ...]

    @property
    def mean(self) -> float:
        return sum(self.scores) / len(self.scores) if self.scores else 0.0

    def to_dataframe(self) -> pd.DataFrame:
        labels = [str(b) for b in range(HISTOGRAM_BINS - 1)] + [f"{HISTOGRAM_BINS - 1}+"]
        return pd.DataFrame({"bin": labels, "sentences": list(self.histogram)})


def distortion_histogram(scores: Iterable[float]) -> DistortionReport:
    """Bins by floor(d); the last bin is open-ended."""
    scores = tuple(float(s) for s in scores)
    histogram = [0] * HISTOGRAM_BINS
    for score in scores:
        if score < 0 or math.isnan(score):
            raise ValidationError(f"Distortion scores must be nonnegative: {score}")
        histogram[min(int(math.floor(score)), HISTOGRAM_BINS - 1)] += 1
    return DistortionReport(scores, tuple(histogram))


def sentence_distortions(records: Iterable[AttentionRecord], terminal_only: bool = True) -> List[float]:
    """Scores per record from argmax alignments; records with no scored row are skipped."""
    scores, skipped = [], 0
    for record in records:
        alignment = hard_align_argmax(record, terminal_only)
        if len(alignment):
            scores.append(distortion(alignment))
        else:
            skipped += 1
    if skipped:
        logging.warning(f"Skipped {skipped} sentences without aligned target tokens")
    return scores


def distortion_over_checkpoints(checkpoints: Sequence[Checkpoint], src_lines: Sequence[Sequence[str]],
                                src_vocab: Vocabulary, tgt_vocab: Vocabulary, beam_size: int = 12,
                                terminal_only: bool = True, target_is_tree: bool = True) -> pd.DataFrame:
    """Mean dev-set distortion after decoding with each checkpoint on its own."""
    rows = []
    for checkpoint in checkpoints:
        translations = translate_corpus(checkpoint.params, src_lines, src_vocab, tgt_vocab, beam_size,
                                        target_is_tree=target_is_tree)
        scores = sentence_distortions((t.record for t in translations), terminal_only)
        mean = sum(scores) / len(scores) if scores else 0.0
        rows.append({"updates_seen": checkpoint.updates_seen, "mean_distortion": mean})
        logging.info(f"Checkpoint at {checkpoint.updates_seen} updates: mean distortion {mean:.4f}")
    return pd.DataFrame(rows, columns=["updates_seen", "mean_distortion"])


# -- alignments ---------------------------------------------------------------

def terminal_alignment(record: AttentionRecord, threshold: float = 0.5) -> Alignment:
    """Threshold alignment over terminal rows, re-indexed by terminal position."""
    rank = {row: k for k, row in enumerate(scored_rows(record, terminal_only=True))}
    aligned = ThresholdAligner(threshold, terminal_only=True).align(record)
    return Alignment(tuple((rank[t], s) for t, s in aligned.pairs))


def format_alignment(alignment: Alignment) -> str:
    return " ".join(f"{s}-{t}" for t, s in alignment.pairs)


def parse_alignment(line: str) -> Alignment:
    pairs = []
    for item in line.split():
        source, sep, target = item.partition("-")
        if not sep:
            raise ValidationError(f"Malformed alignment pair: {item!r}")
        try:
            pairs.append((int(target), int(source)))
        except ValueError as e:
            raise ValidationError(f"Malformed alignment pair: {item!r}") from e
        if pairs[-1][0] < 0 or pairs[-1][1] < 0:
            raise ValidationError(f"Negative alignment index: {item!r}")
    return Alignment(tuple(pairs))


def write_alignments(alignments: Iterable[Alignment], path: Union[str, Path], encoding: str = "utf-8") -> None:
    with open(path, "w", encoding=encoding) as handle:
        for alignment in alignments:
            handle.write(format_alignment(alignment) + "\n")


def read_alignments(path: Union[str, Path], encoding: str = "utf-8") -> List[Alignment]:
    with open(path, encoding=encoding) as handle:
        return [parse_alignment(line) for line in handle]


# -- pronouns and first brackets ----------------------------------------------

def count_relative_pronouns(lines: Iterable[Sequence[str]]) -> Dict[str, int]:
    """Case-insensitive exact-token counts; determiner "that" is counted too."""
    counts = Counter(token.lower() for line in lines for token in line
                     if token.lower() in RELATIVE_PRONOUNS)
    return {pronoun: counts[pronoun] for pronoun in RELATIVE_PRONOUNS}


def pronoun_table(counts: Dict[str, Dict[str, int]]) -> pd.DataFrame:
    """One column per system or reference, one row per pronoun."""
    return pd.DataFrame(counts, index=list(RELATIVE_PRONOUNS)).rename_axis("pronoun").reset_index()


@dataclass(frozen=True)
class FirstBracketReport:
    source_index: int
    source_token: str
    target_index: Optional[int]
    target_token: Optional[str]


def first_bracket_report(record: AttentionRecord) -> FirstBracketReport:
    """Source word attended by the first opening bracket and the terminal most aligned to it."""
    if not record.tgt_tokens or not (is_bracket(record.tgt_tokens[0]) and record.tgt_tokens[0][0] == "("):
        raise NotATree("The first generated token is not an opening bracket")
    weights = record.weights
    source = int(weights[0, :scored_columns(record)].argmax())
    rows = scored_rows(record, terminal_only=True)
    if not rows:
        return FirstBracketReport(source, record.src_tokens[source], None, None)
    target = rows[int(weights[rows, source].argmax())]
    return FirstBracketReport(source, record.src_tokens[source], target, record.tgt_tokens[target])


# -- BLEU ---------------------------------------------------------------------

@dataclass(frozen=True)
class BleuScore:
    score: float
    precisions: Tuple[float, ...]
    brevity_penalty: float
    hypothesis_length: int
    reference_length: int


def _ngrams(tokens: Sequence[str], order: int) -> Counter:
    return Counter(tuple(tokens[i:i + order]) for i in range(len(tokens) - order + 1))


def corpus_bleu(hypotheses: Sequence[Sequence[str]], references: Sequence[Sequence[str]],
                max_order: int = 4) -> BleuScore:
    """Unsmoothed corpus BLEU on tokenized text, scaled to 0-100."""
    if len(hypotheses) != len(references):
        raise ValidationError(f"{len(hypotheses)} hypotheses but {len(references)} references")
    matches = [0] * max_order
    possible = [0] * max_order
    hyp_len = ref_len = 0
    for hypothesis, reference in zip(hypotheses, references):
        hyp_len += len(hypothesis)
        ref_len += len(reference)
        for order in range(1, max_order + 1):
            hyp_counts = _ngrams(hypothesis, order)
            ref_counts = _ngrams(reference, order)
            matches[order - 1] += sum(min(c, ref_counts[g]) for g, c in hyp_counts.items())
            possible[order - 1] += max(len(hypothesis) - order + 1, 0)
    precisions = tuple(m / p if p else 0.0 for m, p in zip(matches, possible))
    if hyp_len == 0:
        return BleuScore(0.0, precisions, 0.0, 0, ref_len)
    penalty = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    if min(precisions) == 0.0:
        return BleuScore(0.0, precisions, penalty, hyp_len, ref_len)
    log_mean = sum(math.log(p) for p in precisions) / max_order
    return BleuScore(100.0 * penalty * math.exp(log_mean), precisions, penalty, hyp_len, ref_len)


# -- reports ------------------------------------------------------------------

def write_report(frame: pd.DataFrame, path: Union[str, Path], summary: Optional[dict] = None,
                 encoding: str = "utf-8") -> Path:
    """Writes the table as text at ``path`` and as JSON next to it."""
    path = Path(path)
    text = frame.to_string(index=False)
    if summary:
        text = "\n".join(f"{key}: {value}" for key, value in summary.items()) + "\n\n" + text
    path.write_text(text + "\n", encoding=encoding)
    json_path = Path(str(path) + ".json")
    document = {"summary": summary or {}, "rows": json.loads(frame.to_json(orient="records"))}
    json_path.write_text(json.dumps(document, indent=2) + "\n", encoding=encoding)
    logging.info(f"Report written to {path} and {json_path}")
    return json_path
