"""Desk-scale reproduction runs on the synthetic reordering corpus (``pytest -m slow``)."""
from pathlib import Path

import pytest

from app.analysis import sentence_distortions
from app.cli import EXIT_OK, main
from app.decoding import read_attention_records
from app.toolkit_config import ToolkitConfig
from app.treebank import validity_rate

SEEDS = (1, 2, 7)
TRAIN_SIZE = 2000
HELD_OUT_SIZE = 200

pytestmark = pytest.mark.slow


def lines_of(path):
    return Path(path).read_text(encoding="utf-8").splitlines()


def mean(scores):
    return sum(scores) / len(scores)


@pytest.fixture(scope="module")
def toy_runs(tmp_path_factory):
    """Trains a string model and a tree model per seed, then translates a held-out set with each."""
    base = tmp_path_factory.mktemp("toy")
    config = ToolkitConfig(base_dir=base)

    def run(*argv):
        assert main([str(a) for a in argv], config) == EXIT_OK, argv

    runs = {}
    for seed in SEEDS:
        work = base / f"seed{seed}"
        train, held_out = work / "train", work / "held_out"
        run("--seed", seed, "gen-toy", "--size", TRAIN_SIZE, "--prefix", train)
        run("--seed", seed + 1000, "gen-toy", "--size", HELD_OUT_SIZE, "--prefix", held_out)
        outputs = {}
        for kind, suffix in (("string", "txt"), ("tree", "tree")):
            trees = ("--trees",) if kind == "tree" else ()
            models = work / f"{kind}_models"
            run("--seed", seed, "train", "--source", f"{train}.src", "--target", f"{train}.{suffix}",
                "--dev-source", f"{held_out}.src", "--dev-target", f"{held_out}.{suffix}", *trees,
                "--output-dir", models, "--embed-dim", 32, "--hidden-dim", 64,
                "--checkpoint-every", 250, "--max-updates", 2500)
            hyp, attn, surface = work / f"{kind}.hyp", work / f"{kind}.attn", work / f"{kind}.surface"
            run("translate", "--model", *sorted(models.glob("*.ckpt")), "--last", 1,
                "--input", f"{held_out}.src", "--output", hyp, "--beam", 5, *trees,
                "--attn-out", attn, "--surface-out", surface)
            outputs[kind] = {"hyp": hyp, "attn": attn, "surface": surface}
        runs[seed] = {"reference": work / "held_out.txt", **outputs}
    return runs


@pytest.mark.parametrize("seed", SEEDS)
def test_tree_model_output_is_mostly_valid_and_correct(toy_runs, seed):
    run = toy_runs[seed]
    valid, total = validity_rate(lines_of(run["tree"]["hyp"]))
    assert total == HELD_OUT_SIZE
    assert valid >= 0.9 * total
    matches = sum(h == r for h, r in zip(lines_of(run["tree"]["surface"]), lines_of(run["reference"])))
    assert matches >= 0.8 * HELD_OUT_SIZE


def test_tree_model_distorts_more_than_string_model(toy_runs):
    for seed in SEEDS:
        run = toy_runs[seed]
        string_model = mean(sentence_distortions(read_attention_records(run["string"]["attn"])))
        tree_model = mean(sentence_distortions(read_attention_records(run["tree"]["attn"])))
        assert tree_model > string_model, (seed, tree_model, string_model)
