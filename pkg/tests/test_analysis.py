import json
import random

import numpy as np
import pandas as pd
import pytest

from app.aligners import Alignment
from app.analysis import (
    RELATIVE_PRONOUNS, corpus_bleu, count_relative_pronouns, distortion, distortion_histogram,
    distortion_over_checkpoints, first_bracket_report, format_alignment, parse_alignment,
    pronoun_table, read_alignments, sentence_distortions, terminal_alignment, write_alignments,
    write_report,
)
from app.corpus import EOS, RESERVED, Vocabulary
from app.decoding import AttentionRecord
from app.exceptions import NotATree, ValidationError
from app.model import ModelConfig, init_params
from app.training import Checkpoint


def direct_sum(positions):
    total = 0
    for i in range(1, len(positions)):
        total += abs(positions[i] - positions[i - 1])
    return total / len(positions)


class TestDistortion:
    cases = {
        "constant": ([2, 2, 2], 0.0),
        "monotone": ([1, 2, 3, 4], 0.75),
        "one_swap": ([1, 3, 2, 4], 1.25),
        "single": ([5], 0.0),
    }

    def test_examples(self):
        for name, (positions, expected) in self.cases.items():
            assert distortion(positions) == expected, name

    def test_matches_direct_sum(self):
        rng = random.Random(0)
        for _ in range(10000):
            positions = [rng.randrange(30) for _ in range(rng.randrange(1, 20))]
            assert distortion(positions) == direct_sum(positions)

    def test_alignment_input(self):
        assert distortion(Alignment(((0, 1), (1, 3), (2, 2), (3, 4)))) == 1.25

    def test_empty_alignment(self):
        with pytest.raises(ValidationError, match="empty alignment"):
            distortion([])

    def test_several_sources_per_target(self):
        with pytest.raises(ValidationError, match="at most one source"):
            distortion(Alignment(((0, 1), (0, 2))))


class TestHistogram:
    def test_bins_by_floor(self):
        report = distortion_histogram([0.2, 1.5, 1.9])
        assert report.histogram == (1, 2, 0, 0, 0, 0, 0, 0)
        assert report.mean == pytest.approx(3.6 / 3)

    def test_empty(self):
        report = distortion_histogram([])
        assert report.histogram == (0,) * 8
        assert report.mean == 0.0

    def test_last_bin_is_open_ended(self):
        assert distortion_histogram([7.0, 9.3, 42.0]).histogram[-1] == 3

    def test_counts_sum_to_sentences(self):
        scores = np.random.default_rng(1).exponential(2.0, size=500)
        assert sum(distortion_histogram(scores).histogram) == 500

    def test_negative_score(self):
        with pytest.raises(ValidationError, match="nonnegative"):
            distortion_histogram([-0.5])

    def test_dataframe_labels(self):
        df = distortion_histogram([0.5]).to_dataframe()
        assert df["bin"].tolist() == ["0", "1", "2", "3", "4", "5", "6", "7+"]
        assert df["sentences"].sum() == 1


def tree_record():
    return AttentionRecord(
        ("eine", "Katze", EOS),
        ("(NP", "a", "cat", ")NP", EOS),
        np.array([[0.1, 0.2, 0.7],
                  [0.9, 0.05, 0.05],
                  [0.1, 0.8, 0.1],
                  [0.0, 0.0, 1.0],
                  [0.0, 0.2, 0.8]]),
    )


def test_sentence_distortions_over_terminals():
    flipped = AttentionRecord(("x", "y", EOS), ("(S", "b", "a", ")S", EOS),
                              np.array([[1, 0, 0], [0, 1, 0], [1, 0, 0], [0, 0, 1], [0, 0, 1]], dtype=float))
    assert sentence_distortions([tree_record(), flipped]) == [0.5, 0.5]
    assert sentence_distortions([tree_record()], terminal_only=False) == [(1 + 1 + 1) / 4]


def test_sentence_distortions_ignore_attention_on_end_of_sequence():
    rec = AttentionRecord(("x", "y", EOS), ("(S", "a", "b", ")S", EOS),
                          np.array([[0, 0, 1], [0.1, 0.3, 0.6], [0.4, 0.1, 0.5], [0, 0, 1], [0, 0, 1]], dtype=float))
    assert sentence_distortions([rec]) == [0.5]
    assert terminal_alignment(rec, threshold=0.25).pairs == ((0, 1), (1, 0))


def test_sentence_distortions_skip_unaligned_records():
    empty = AttentionRecord(("x", EOS), (EOS,), np.array([[0.5, 0.5]]))
    assert sentence_distortions([empty]) == []


class TestTerminalAlignment:
    def test_reindexes_terminals(self):
        assert terminal_alignment(tree_record()).pairs == ((0, 0), (1, 1))

    def test_drops_links_to_end_of_sequence(self):
        rec = AttentionRecord(("eine", "Katze", EOS), ("(NP", "a", "cat", ")NP"),
                              np.array([[0.3, 0.3, 0.4], [0.9, 0.05, 0.05], [0.1, 0.1, 0.8], [0.0, 0.0, 1.0]]))
        assert terminal_alignment(rec).pairs == ((0, 0),)


class TestAlignmentFiles:
    def test_parse_and_format(self):
        alignment = parse_alignment("1-0 3-1 2-2 4-3\n")
        assert alignment.source_positions() == [1, 3, 2, 4]
        assert format_alignment(alignment) == "1-0 3-1 2-2 4-3"
        assert distortion(alignment) == 1.25

    def test_empty_line(self):
        assert parse_alignment("") == Alignment()

    @pytest.mark.parametrize("line", ["1:0", "a-b", "1-", "-1-2"])
    def test_malformed_pairs(self, line):
        with pytest.raises(ValidationError):
            parse_alignment(line)

    def test_file_roundtrip(self, tmp_path):
        alignments = [Alignment(((0, 0), (1, 2))), Alignment(), Alignment(((0, 1),))]
        path = tmp_path / "gold.align"
        write_alignments(alignments, path)
        assert read_alignments(path) == alignments


class TestPronouns:
    def test_examples(self):
        assert count_relative_pronouns([["the", "man", "who", "left"]]) == \
            {"who": 1, "which": 0, "that": 0, "whom": 0, "whose": 0}
        assert count_relative_pronouns([["That", "that", "is", ",", "is"]])["that"] == 2
        assert count_relative_pronouns([]) == dict.fromkeys(RELATIVE_PRONOUNS, 0)

    def test_permutation_invariant_and_additive(self):
        first = [["who", "which"], ["Whose", "dog"], ["that"]]
        second = [["whom", "who"], ["nothing"]]
        both = count_relative_pronouns(first + second)
        assert both == count_relative_pronouns(list(reversed(second + first)))
        a, b = count_relative_pronouns(first), count_relative_pronouns(second)
        assert both == {p: a[p] + b[p] for p in RELATIVE_PRONOUNS}

    def test_table(self):
        table = pronoun_table({"reference": {"who": 3, "which": 1, "that": 2, "whom": 0, "whose": 0},
                               "bpe2tree": {"who": 2, "which": 1, "that": 1, "whom": 0, "whose": 1}})
        assert table["pronoun"].tolist() == list(RELATIVE_PRONOUNS)
        assert table["bpe2tree"].tolist() == [2, 1, 1, 0, 1]


class TestFirstBracket:
    def test_example(self):
        rec = AttentionRecord(("s0", "s1"), ("(ROOT", "w"), np.array([[0.9, 0.1], [0.2, 0.8]]))
        report = first_bracket_report(rec)
        assert (report.source_index, report.target_index) == (0, 1)
        assert (report.source_token, report.target_token) == ("s0", "w")

    def test_most_aligned_terminal(self):
        rec = AttentionRecord(("a", "b", EOS), ("(S", "x", "y", ")S", EOS),
                              np.array([[0.1, 0.7, 0.2], [0.6, 0.2, 0.2], [0.2, 0.6, 0.2],
                                        [0.0, 0.0, 1.0], [0.0, 0.0, 1.0]]))
        report = first_bracket_report(rec)
        assert (report.source_token, report.target_index, report.target_token) == ("b", 2, "y")

    def test_first_bracket_skips_end_of_sequence_column(self):
        rec = AttentionRecord(("a", "b", EOS), ("(S", "x", "y", ")S", EOS),
                              np.array([[0.1, 0.3, 0.6], [0.7, 0.2, 0.1], [0.2, 0.6, 0.2],
                                        [0.0, 0.0, 1.0], [0.0, 0.0, 1.0]]))
        report = first_bracket_report(rec)
        assert (report.source_token, report.target_token) == ("b", "y")

    def test_uniform_first_row(self):
        rec = AttentionRecord(("a", "b"), ("(S", "x"), np.array([[0.5, 0.5], [0.3, 0.7]]))
        assert first_bracket_report(rec).source_index == 0

    def test_plain_text_record(self):
        rec = AttentionRecord(("a",), ("w",), np.array([[1.0]]))
        with pytest.raises(NotATree):
            first_bracket_report(rec)


class TestBleu:
    def test_identical(self):
        lines = [["the", "cat", "sat", "on", "the", "mat"], ["a", "dog", "has", "a", "ball", "."]]
        assert corpus_bleu(lines, lines).score == pytest.approx(100.0)

    def test_no_overlap(self):
        assert corpus_bleu([["x", "y", "z", "w"]], [["a", "b", "c", "d"]]).score == 0.0

    def test_brevity_penalty(self):
        reference = [["a", "b", "c", "d", "e", "f", "g", "h"]]
        result = corpus_bleu([["a", "b", "c", "d"]], reference)
        assert result.brevity_penalty == pytest.approx(np.exp(1 - 8 / 4))
        assert result.score == pytest.approx(100.0 * np.exp(-1.0))

    def test_length_mismatch(self):
        with pytest.raises(ValidationError):
            corpus_bleu([["a"]], [])


def test_distortion_over_identical_checkpoints_is_constant():
    src_vocab = Vocabulary(RESERVED + ("eine", "Katze"))
    tgt_vocab = Vocabulary(RESERVED + ("(NP", ")NP", "a", "cat"))
    params = init_params(ModelConfig(len(src_vocab), len(tgt_vocab), 3, 4, seed=2))
    checkpoints = [Checkpoint(params, 200, 1.0), Checkpoint(params.copy(), 400, 0.9)]
    df = distortion_over_checkpoints(checkpoints, [["eine", "Katze"], ["Katze"]], src_vocab, tgt_vocab,
                                     beam_size=2)
    assert df["updates_seen"].tolist() == [200, 400]
    assert df["mean_distortion"].iloc[0] == df["mean_distortion"].iloc[1]


def test_write_report(tmp_path):
    frame = pd.DataFrame({"bin": ["0", "1"], "sentences": [3, 1]})
    json_path = write_report(frame, tmp_path / "hist.txt", {"system": "bpe2tree"})
    text = (tmp_path / "hist.txt").read_text(encoding="utf-8")
    assert text.startswith("system: bpe2tree")
    document = json.loads(json_path.read_text(encoding="utf-8"))
    assert document["rows"] == [{"bin": "0", "sentences": 3}, {"bin": "1", "sentences": 1}]
