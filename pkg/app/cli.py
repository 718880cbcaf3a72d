"""Command-line front end for the string-to-tree toolkit.

Exit codes: 0 success, 1 invalid data or values, 2 bad flags, 3 unknown
subcommand, 4 input/output failure. Diagnostics go to stderr, data to files
or stdout.
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence
import argparse
import logging
import sys

import pandas as pd

from app.aligners import AlignerFactory
from app.analysis import (
    corpus_bleu, count_relative_pronouns, distortion, distortion_histogram,
    distortion_over_checkpoints, first_bracket_report, pronoun_table, read_alignments,
    sentence_distortions, terminal_alignment, write_alignments, write_report,
)
from app.corpus import EOS, build_vocab, load_vocab, prepare_pairs, read_token_lines, save_vocab
from app.decoding import DEFAULT_BEAM, DEFAULT_MAX_LEN_CAP, read_attention_records, translate_corpus, \
    write_attention_records
from app.exceptions import CheckpointError, ToolkitError, TreeError, ValidationError
from app.ghkm import count_rules, extract_ghkm, group_rules, groups_to_dataframe, read_rules, \
    rule_statistics, write_rules
from app.history import CheckpointWriterObserver, LoggingObserver, TrainingHistory
from app.input_validators import InputValidator
from app.model import ModelConfig
from app.subword import DEFAULT_MARKER, apply_bpe, learn_bpe, load_merges, revert_bpe, save_merges
from app.toolkit_config import ToolkitConfig
from app.toy import gen_toy, write_toy_corpus
from app.training import TrainConfig, last_checkpoints, load_checkpoint, train
from app.treebank import (
    add_root, apply_bpe_to_tree, lexicalize, linearize, parse_linear, parse_ptb, print_ptb,
    serialize_linear, tokenize_linear, validity_rate,
)

EXIT_OK = 0
EXIT_TOOLKIT_ERROR = 1
EXIT_USAGE = 2
EXIT_UNKNOWN_COMMAND = 3
EXIT_IO_ERROR = 4
DEFAULT_SEED = 1234

# dests holding files that must exist, and files that will be written
INPUT_DESTS = {"input", "merges", "source", "target", "dev_source", "dev_target", "src_vocab",
               "tgt_vocab", "model", "records", "align", "tree_file", "alignments", "hypotheses",
               "references"}
OUTPUT_DESTS = {"output", "attn_out", "surface_out", "report"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


@dataclass
class RunConfig:
    command: str
    seed: int = DEFAULT_SEED
    inputs: Dict[str, Any] = field(default_factory=dict)
    outputs: Dict[str, Path] = field(default_factory=dict)
    options: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_namespace(cls, args: argparse.Namespace) -> 'RunConfig':
        """Validates every path before any work starts."""
        run = cls(args.command, getattr(args, "seed", DEFAULT_SEED))
        for dest, value in vars(args).items():
            if dest in ("command", "seed", "handler"):
                continue
            if dest in INPUT_DESTS and value is not None:
                if isinstance(value, list):
                    run.inputs[dest] = [InputValidator.validate_existing_file(v) for v in value]
                else:
                    run.inputs[dest] = InputValidator.validate_existing_file(value)
            elif dest in OUTPUT_DESTS and value is not None:
                run.outputs[dest] = InputValidator.validate_output_path(value)
            else:
                run.options[dest] = value
        return run


# -- subcommands --------------------------------------------------------------

def _read_lines(path: Path, config: ToolkitConfig) -> List[str]:
    with open(path, encoding=config.default_encoding) as handle:
        return [line.rstrip("\n") for line in handle]


def _write_lines(lines: Sequence[str], path: Path, config: ToolkitConfig) -> None:
    with open(path, "w", encoding=config.default_encoding) as handle:
        handle.writelines(line + "\n" for line in lines)


def _cmd_learn_bpe(run: RunConfig, config: ToolkitConfig) -> None:
    corpus = [tokens for path in run.inputs["input"] for tokens in read_token_lines(path, config.default_encoding)]
    num_merges = InputValidator.validate_non_negative_int(run.options["merges_count"], "merges")
    model = learn_bpe(corpus, num_merges, run.options["marker"])
    save_merges(model, run.outputs["output"], config.default_encoding)
    print(f"Learned {len(model.merges)} merges")


def _cmd_apply_bpe(run: RunConfig, config: ToolkitConfig) -> None:
    model = load_merges(run.inputs["merges"], run.options["marker"], config.default_encoding)
    lines = _read_lines(run.inputs["input"], config)
    if run.options["trees"]:
        output = [serialize_linear(apply_bpe_to_tree(model, tokenize_linear(line))) for line in lines]
    else:
        output = [" ".join(apply_bpe(model, line.split())) for line in lines]
    _write_lines(output, run.outputs["output"], config)


def _cmd_revert_bpe(run: RunConfig, config: ToolkitConfig) -> None:
    lines = _read_lines(run.inputs["input"], config)
    _write_lines([" ".join(revert_bpe(line.split(), run.options["marker"])) for line in lines],
                 run.outputs["output"], config)


def _cmd_lexicalize(run: RunConfig, config: ToolkitConfig) -> None:
    strict = not run.options["lenient"]
    lines = _read_lines(run.inputs["input"], config)
    _write_lines([print_ptb(lexicalize(parse_ptb(line), strict)) for line in lines if line.strip()],
                 run.outputs["output"], config)


def _cmd_linearize(run: RunConfig, config: ToolkitConfig) -> None:
    output = []
    for line in _read_lines(run.inputs["input"], config):
        if not line.strip():
            continue
        tree = parse_ptb(line)
        if run.options["lexicalize"]:
            tree = lexicalize(tree, not run.options["lenient"])
        output.append(serialize_linear(linearize(add_root(tree))))
    _write_lines(output, run.outputs["output"], config)


def _cmd_delinearize(run: RunConfig, config: ToolkitConfig) -> None:
    output, invalid = [], 0
    for line in _read_lines(run.inputs["input"], config):
        try:
            output.append(print_ptb(parse_linear(tokenize_linear(line))))
        except TreeError as e:
            logging.warning(f"Invalid tree written as an empty line: {e}")
            output.append("")
            invalid += 1
    _write_lines(output, run.outputs["output"], config)
    if invalid:
        print(f"{invalid} invalid trees", file=sys.stderr)


def _cmd_validate_trees(run: RunConfig, config: ToolkitConfig) -> None:
    valid, total = validity_rate(_read_lines(run.inputs["input"], config))
    print(f"{valid}/{total} valid")


def _cmd_build_vocab(run: RunConfig, config: ToolkitConfig) -> None:
    vocab = build_vocab(read_token_lines(run.inputs["input"], config.default_encoding), run.options["max_size"])
    save_vocab(vocab, run.outputs["output"], config.default_encoding)
    print(f"Vocabulary of {len(vocab)} entries")


def _cmd_train(run: RunConfig, config: ToolkitConfig) -> None:
    enc = config.default_encoding
    opts = run.options
    src_lines = read_token_lines(run.inputs["source"], enc)
    tgt_lines = read_token_lines(run.inputs["target"], enc)
    src_vocab = load_vocab(run.inputs["src_vocab"], enc) if "src_vocab" in run.inputs else build_vocab(src_lines)
    tgt_vocab = load_vocab(run.inputs["tgt_vocab"], enc) if "tgt_vocab" in run.inputs else build_vocab(tgt_lines)
    limits = dict(max_src=opts["max_src"], max_tgt=opts["max_tgt"], target_is_tree=opts["trees"])
    pairs = prepare_pairs(src_lines, tgt_lines, src_vocab, tgt_vocab, **limits)
    dev_pairs = prepare_pairs(read_token_lines(run.inputs["dev_source"], enc),
                              read_token_lines(run.inputs["dev_target"], enc), src_vocab, tgt_vocab, **limits)
    model_config = ModelConfig(len(src_vocab), len(tgt_vocab), opts["embed_dim"], opts["hidden_dim"],
                               run.seed, InputValidator.validate_fraction(opts["dropout"], "dropout"))
    train_config = TrainConfig(opts["batch_size"], opts["checkpoint_every"], opts["patience"],
                               opts["max_updates"], seed=run.seed)
    out_dir = Path(opts["output_dir"])
    writer = CheckpointWriterObserver(out_dir, opts["prefix"])
    history = TrainingHistory()
    checkpoints = train(model_config, pairs, dev_pairs, train_config,
                        [LoggingObserver(), writer, history], src_vocab, tgt_vocab)
    history.save(out_dir / f"{opts['prefix']}.history.csv")
    best = next(c for c in checkpoints if c.best)
    print(f"{len(checkpoints)} checkpoints; best at {best.updates_seen} updates "
          f"(dev loss {best.dev_loss:.4f}): {writer.paths[best.updates_seen]}")


def _load_models(run: RunConfig):
    paths = run.inputs["model"]
    if run.options.get("last"):
        paths = last_checkpoints(paths, run.options["last"])
    checkpoints = [load_checkpoint(path) for path in paths]
    if checkpoints[0].src_vocab is None or checkpoints[0].tgt_vocab is None:
        raise CheckpointError(f"Checkpoint {paths[0]} carries no vocabularies")
    return checkpoints


def _cmd_translate(run: RunConfig, config: ToolkitConfig) -> None:
    checkpoints = _load_models(run)
    opts = run.options
    lines = read_token_lines(run.inputs["input"], config.default_encoding)
    translations = translate_corpus(
        [c.params for c in checkpoints], lines, checkpoints[0].src_vocab, checkpoints[0].tgt_vocab,
        InputValidator.validate_positive_int(opts["beam"], "beam"),
        InputValidator.validate_positive_int(opts["max_len"], "max-len"),
        opts["constrain_tree"], opts["trees"], InputValidator.validate_positive_int(opts["workers"], "workers"),
        opts["marker"])
    _write_lines([" ".join(t.tokens) for t in translations], run.outputs["output"], config)
    if "attn_out" in run.outputs:
        write_attention_records((t.record for t in translations), run.outputs["attn_out"], config.default_encoding)
    if "surface_out" in run.outputs:
        _write_lines([" ".join(t.surface) for t in translations], run.outputs["surface_out"], config)


def _cmd_align(run: RunConfig, config: ToolkitConfig) -> None:
    method = run.options["method"]
    options: Dict[str, Any] = {"terminal_only": run.options["terminal_only"]}
    if method == "threshold":
        options["threshold"] = run.options["threshold"]
    aligner = AlignerFactory.create_aligner(method, **options)
    records = read_attention_records(run.inputs["records"], config.default_encoding)
    write_alignments((aligner.align(record) for record in records), run.outputs["output"], config.default_encoding)


def _cmd_distortion(run: RunConfig, config: ToolkitConfig) -> None:
    if "align" in run.inputs:
        scores = []
        for alignment in read_alignments(run.inputs["align"], config.default_encoding):
            score = distortion(alignment) if len(alignment) else 0.0
            scores.append(score)
            print(f"{score:g}")
    elif "records" in run.inputs:
        records = read_attention_records(run.inputs["records"], config.default_encoding)
        scores = sentence_distortions(records, run.options["terminal_only"])
        print(f"mean distortion {sum(scores) / len(scores) if scores else 0.0:.4f} over {len(scores)} sentences")
    else:
        raise ValidationError("distortion needs --align or --records")
    if "report" in run.outputs:
        report = distortion_histogram(scores)
        write_report(report.to_dataframe(), run.outputs["report"],
                     {"sentences": len(report.scores), "mean_distortion": report.mean})


def _cmd_extract_ghkm(run: RunConfig, config: ToolkitConfig) -> None:
    enc = config.default_encoding
    samples = []
    if "records" in run.inputs:
        for record in read_attention_records(run.inputs["records"], enc):
            src = [t for t in record.src_tokens if t != EOS]
            samples.append(([t for t in record.tgt_tokens if t != EOS], src,
                            terminal_alignment(record, run.options["threshold"])))
    elif {"tree_file", "source", "alignments"} <= set(run.inputs):
        trees = _read_lines(run.inputs["tree_file"], config)
        sources = read_token_lines(run.inputs["source"], enc)
        alignments = read_alignments(run.inputs["alignments"], enc)
        if not len(trees) == len(sources) == len(alignments):
            raise ValidationError("Trees, source and alignments must have the same number of lines")
        samples = [(tree.split(), src, alignment) for tree, src, alignment in zip(trees, sources, alignments)]
    else:
        raise ValidationError("extract-ghkm needs --records or --trees, --source and --alignments")

    per_sentence, skipped = [], 0
    for tree_tokens, src, alignment in samples:
        try:
            tree = parse_linear(tokenize_linear(" ".join(tree_tokens)))
        except TreeError as e:
            logging.warning(f"Skipping sentence with invalid tree: {e}")
            skipped += 1
            continue
        per_sentence.append(extract_ghkm(tree, src, alignment))
    write_rules(count_rules(r for rules in per_sentence for r in rules), run.outputs["output"], enc)
    stats = rule_statistics(per_sentence)
    print(f"rules: {stats.total_rules}")
    print(f"reordering rules: {stats.reordering_rules} ({100 * stats.reordering_share:.1f}%)")
    if stats.top_reordering_rule:
        lhs, rhs = stats.top_reordering_rule
        print(f"most common reordering rule: {lhs} -> {rhs} in {stats.top_rule_sentences} sentences "
              f"({100 * stats.top_rule_sentence_share:.1f}%)")
    if skipped:
        print(f"skipped {skipped} invalid trees", file=sys.stderr)


def _cmd_group_rules(run: RunConfig, config: ToolkitConfig) -> None:
    groups = group_rules(read_rules(run.inputs["input"], config.default_encoding), run.options["top_k"])
    if run.options["reordering_only"]:
        groups = [g for g in groups if g.reordering_total > 0]
    frame = groups_to_dataframe(groups)
    if "output" in run.outputs:
        write_report(frame, run.outputs["output"], {"groups": len(groups)})
    else:
        print(frame.to_string(index=False))


def _cmd_count_pronouns(run: RunConfig, config: ToolkitConfig) -> None:
    counts = {}
    for path in run.inputs["input"]:
        lines = read_token_lines(path, config.default_encoding)
        if run.options["trees"]:
            lines = [[t for t in line if not (len(t) > 1 and t[0] in "()")] for line in lines]
        counts[str(path)] = count_relative_pronouns(lines)
    frame = pronoun_table(counts)
    if "output" in run.outputs:
        write_report(frame, run.outputs["output"])
    print(frame.to_string(index=False))


def _cmd_first_bracket(run: RunConfig, config: ToolkitConfig) -> None:
    rows, skipped = [], 0
    for number, record in enumerate(read_attention_records(run.inputs["records"], config.default_encoding)):
        try:
            report = first_bracket_report(record)
        except ToolkitError as e:
            logging.warning(f"Record {number}: {e}")
            skipped += 1
            continue
        rows.append({"sentence": number, "source_index": report.source_index, "source": report.source_token,
                     "target_index": report.target_index, "target": report.target_token})
    frame = pd.DataFrame(rows, columns=["sentence", "source_index", "source", "target_index", "target"])
    if "output" in run.outputs:
        write_report(frame, run.outputs["output"], {"reports": len(rows), "skipped": skipped})
    else:
        print(frame.to_string(index=False))


def _cmd_gen_toy(run: RunConfig, config: ToolkitConfig) -> None:
    pairs = gen_toy(run.options["size"], run.seed, run.options["adjective_rate"], run.options["pp_rate"])
    for path in write_toy_corpus(pairs, run.options["prefix"], config.default_encoding):
        print(path)


def _cmd_bleu(run: RunConfig, config: ToolkitConfig) -> None:
    hypotheses = read_token_lines(run.inputs["hypotheses"], config.default_encoding)
    references = read_token_lines(run.inputs["references"], config.default_encoding)
    score = corpus_bleu(hypotheses, references)
    print(f"BLEU = {score.score:.2f} (BP {score.brevity_penalty:.3f}, "
          f"hyp {score.hypothesis_length}, ref {score.reference_length})")


def _cmd_track_distortion(run: RunConfig, config: ToolkitConfig) -> None:
    checkpoints = sorted(_load_models(run), key=lambda c: c.updates_seen)
    frame = distortion_over_checkpoints(checkpoints, read_token_lines(run.inputs["source"], config.default_encoding),
                                        checkpoints[0].src_vocab, checkpoints[0].tgt_vocab, run.options["beam"],
                                        run.options["terminal_only"], run.options["trees"])
    frame.to_csv(run.outputs["output"], index=False)
    print(frame.to_string(index=False))


# -- parser -------------------------------------------------------------------

def _add_marker(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--marker", default=DEFAULT_MARKER, help="sub-word continuation marker")


def build_parser() -> _Parser:
    parser = _Parser(prog="s2t", description="String-to-tree translation toolkit")
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED, help="seed for every random choice")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name: str, handler: Callable, help_text: str) -> argparse.ArgumentParser:
        sub = commands.add_parser(name, help=help_text, description=help_text)
        sub.set_defaults(handler=handler)
        return sub

    sub = command("learn-bpe", _cmd_learn_bpe, "learn BPE merges from one or more token files")
    sub.add_argument("--input", nargs="+", required=True)
    sub.add_argument("--output", required=True)
    sub.add_argument("--merges", dest="merges_count", type=int, default=4000)
    _add_marker(sub)

    sub = command("apply-bpe", _cmd_apply_bpe, "segment text or linearized trees into sub-words")
    sub.add_argument("--merges", required=True)
    sub.add_argument("--input", required=True)
    sub.add_argument("--output", required=True)
    sub.add_argument("--trees", action="store_true", help="input lines are linearized trees")
    _add_marker(sub)

    sub = command("revert-bpe", _cmd_revert_bpe, "merge sub-words back into words")
    sub.add_argument("--input", required=True)
    sub.add_argument("--output", required=True)
    _add_marker(sub)

    sub = command("lexicalize", _cmd_lexicalize, "replace part-of-speech preterminals by their words")
    sub.add_argument("--input", required=True)
    sub.add_argument("--output", required=True)
    sub.add_argument("--lenient", action="store_true", help="keep words mixed with phrases")

    sub = command("linearize", _cmd_linearize, "turn bracketed parses into linearized trees under ROOT")
    sub.add_argument("--input", required=True)
    sub.add_argument("--output", required=True)
    sub.add_argument("--lexicalize", action="store_true")
    sub.add_argument("--lenient", action="store_true")

    sub = command("delinearize", _cmd_delinearize, "turn linearized trees back into bracketed parses")
    sub.add_argument("--input", required=True)
    sub.add_argument("--output", required=True)

    sub = command("validate-trees", _cmd_validate_trees, "count valid linearized trees")
    sub.add_argument("--input", required=True)

    sub = command("build-vocab", _cmd_build_vocab, "build a frequency-ranked vocabulary")
    sub.add_argument("--input", required=True)
    sub.add_argument("--output", required=True)
    sub.add_argument("--max-size", type=int, default=None)

    sub = command("train", _cmd_train, "train an attention encoder-decoder")
    for flag in ("--source", "--target", "--dev-source", "--dev-target"):
        sub.add_argument(flag, required=True)
    sub.add_argument("--src-vocab")
    sub.add_argument("--tgt-vocab")
    sub.add_argument("--output-dir", required=True)
    sub.add_argument("--prefix", default="model")
    sub.add_argument("--trees", action="store_true", help="targets are linearized trees")
    sub.add_argument("--embed-dim", type=int, default=64)
    sub.add_argument("--hidden-dim", type=int, default=128)
    sub.add_argument("--dropout", type=float, default=0.0)
    sub.add_argument("--batch-size", type=int, default=40)
    sub.add_argument("--checkpoint-every", type=int, default=200)
    sub.add_argument("--patience", type=int, default=10)
    sub.add_argument("--max-updates", type=int, default=200000)
    sub.add_argument("--max-src", type=int, default=50)
    sub.add_argument("--max-tgt", type=int, default=150)

    sub = command("translate", _cmd_translate, "beam-search translation with one or more checkpoints")
    sub.add_argument("--model", nargs="+", required=True)
    sub.add_argument("--last", type=int, default=None, help="ensemble only the last N checkpoints")
    sub.add_argument("--input", required=True)
    sub.add_argument("--output", required=True)
    sub.add_argument("--beam", type=int, default=DEFAULT_BEAM)
    sub.add_argument("--max-len", type=int, default=DEFAULT_MAX_LEN_CAP)
    sub.add_argument("--constrain-tree", action="store_true")
    sub.add_argument("--trees", action="store_true", help="targets are linearized trees")
    sub.add_argument("--attn-out")
    sub.add_argument("--surface-out")
    sub.add_argument("--workers", type=int, default=1)
    _add_marker(sub)

    sub = command("align", _cmd_align, "hard alignments from attention records")
    sub.add_argument("--records", required=True)
    sub.add_argument("--output", required=True)
    sub.add_argument("--method", choices=["argmax", "threshold"], default="argmax")
    sub.add_argument("--threshold", type=float, default=0.5)
    sub.add_argument("--terminal-only", action="store_true")

    sub = command("distortion", _cmd_distortion, "distortion scores and their histogram")
    sub.add_argument("--align")
    sub.add_argument("--records")
    sub.add_argument("--terminal-only", action="store_true")
    sub.add_argument("--report")

    sub = command("extract-ghkm", _cmd_extract_ghkm, "extract minimal GHKM rules")
    sub.add_argument("--records")
    sub.add_argument("--trees", dest="tree_file", help="linearized target trees")
    sub.add_argument("--source")
    sub.add_argument("--alignments")
    sub.add_argument("--threshold", type=float, default=0.5)
    sub.add_argument("--output", required=True)

    sub = command("group-rules", _cmd_group_rules, "group rules by left-hand side")
    sub.add_argument("--input", required=True)
    sub.add_argument("--output")
    sub.add_argument("--top-k", type=int, default=5)
    sub.add_argument("--reordering-only", action="store_true")

    sub = command("count-pronouns", _cmd_count_pronouns, "count English relative pronouns")
    sub.add_argument("--input", nargs="+", required=True)
    sub.add_argument("--output")
    sub.add_argument("--trees", action="store_true", help="ignore bracket tokens")

    sub = command("first-bracket", _cmd_first_bracket, "source word attended by the first opening bracket")
    sub.add_argument("--records", required=True)
    sub.add_argument("--output")

    sub = command("gen-toy", _cmd_gen_toy, "generate the synthetic reordering corpus")
    sub.add_argument("--size", type=int, required=True)
    sub.add_argument("--prefix", required=True)
    sub.add_argument("--adjective-rate", type=float, default=0.3)
    sub.add_argument("--pp-rate", type=float, default=0.3)

    sub = command("bleu", _cmd_bleu, "corpus BLEU of tokenized hypotheses")
    sub.add_argument("--hypotheses", required=True)
    sub.add_argument("--references", required=True)

    sub = command("track-distortion", _cmd_track_distortion, "mean dev distortion per checkpoint")
    sub.add_argument("--model", nargs="+", required=True)
    sub.add_argument("--source", required=True)
    sub.add_argument("--output", required=True)
    sub.add_argument("--beam", type=int, default=DEFAULT_BEAM)
    sub.add_argument("--terminal-only", action="store_true")
    sub.add_argument("--trees", action="store_true")
    return parser


def command_names(parser: argparse.ArgumentParser) -> List[str]:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return list(action.choices)
    return []


def _setup_logging(config: ToolkitConfig) -> None:
    config.validate()
    config.log_dir.mkdir(parents=True, exist_ok=True)
    logging.basicConfig(filename=str(config.log_file), level=config.numeric_log_level,
                        format='%(asctime)s - %(levelname)s - %(message)s', force=True)
    logging.info(f"Logging initialized at: {config.log_file}")


def _first_positional(argv: Sequence[str]) -> Optional[str]:
    skip = False
    for item in argv:
        if skip:
            skip = False
            continue
        if item == "--seed":
            skip = True
            continue
        if not item.startswith("-"):
            return item
    return None


def main(argv: Optional[Sequence[str]] = None, config: Optional[ToolkitConfig] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    name = _first_positional(argv)
    if name is not None and name not in command_names(parser):
        parser.print_usage(sys.stderr)
        print(f"Error: unknown subcommand '{name}'", file=sys.stderr)
        return EXIT_UNKNOWN_COMMAND
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:
        return int(e.code or 0)

    try:
        config = config or ToolkitConfig()
        _setup_logging(config)
        run = RunConfig.from_namespace(args)
        logging.info(f"Running {run.command} with seed {run.seed}")
        args.handler(run, config)
        return EXIT_OK
    except OSError as e:
        logging.error(f"I/O failure in {args.command}: {e}")
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_IO_ERROR
    except ToolkitError as e:
        logging.error(f"{args.command} failed: {e}")
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_TOOLKIT_ERROR
