import json
from unittest.mock import Mock

import numpy as np
import pytest

from app.corpus import RESERVED, Vocabulary
from app.exceptions import CheckpointError, ValidationError
from app.history import TrainingObserver
from app.model import PARAM_NAMES, ModelConfig
from app.training import (
    MAGIC, Checkpoint, TrainConfig, checkpoint_name, last_checkpoints, load_checkpoint,
    manifest_path, save_checkpoint, train,
)
from tests.conftest import make_pairs

SRC_VOCAB = Vocabulary(RESERVED + tuple(f"s{i}" for i in range(7)))
TGT_VOCAB = Vocabulary(RESERVED + ("(S", ")S", "a", "b", "c"))


@pytest.fixture
def checkpoint(tiny_params):
    return Checkpoint(tiny_params, 400, 1.25, True, SRC_VOCAB, TGT_VOCAB)


@pytest.fixture
def small_run():
    config = ModelConfig(9, 7, 4, 5, seed=3)
    pairs = make_pairs(np.random.default_rng(2), 8, 9, 7)
    settings = TrainConfig(batch_size=8, checkpoint_every=2, patience=2, max_updates=30, seed=3)
    return config, pairs, settings


class TestCheckpointFile:
    def test_roundtrip_is_bit_identical(self, checkpoint, tmp_path):
        path = save_checkpoint(checkpoint, tmp_path / "model.ckpt")
        loaded = load_checkpoint(path)
        assert loaded.params.config == checkpoint.params.config
        for name in PARAM_NAMES:
            assert loaded.params[name].tobytes() == checkpoint.params[name].tobytes()
        assert (loaded.updates_seen, loaded.dev_loss, loaded.best) == (400, 1.25, True)
        assert loaded.src_vocab == SRC_VOCAB
        assert loaded.tgt_vocab == TGT_VOCAB

    def test_manifest_lists_every_parameter(self, checkpoint, tmp_path):
        path = save_checkpoint(checkpoint, tmp_path / "model.ckpt")
        lines = manifest_path(path).read_text(encoding="utf-8").splitlines()
        assert [line.split("\t")[0] for line in lines] == list(PARAM_NAMES)
        assert lines[0].split("\t")[1] == "9x4"

    def test_not_a_checkpoint(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"hello\n")
        with pytest.raises(CheckpointError, match="Not a checkpoint file"):
            load_checkpoint(path)

    def test_corrupt_header(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(MAGIC + b"{not json\n")
        with pytest.raises(CheckpointError, match="Corrupt checkpoint header"):
            load_checkpoint(path)

    def test_unsupported_version(self, checkpoint, tmp_path):
        path = save_checkpoint(checkpoint, tmp_path / "model.ckpt")
        data = path.read_bytes()
        end = data.index(b"\n", len(MAGIC))
        header = json.loads(data[len(MAGIC):end])
        header["version"] = 99
        path.write_bytes(MAGIC + json.dumps(header).encode("utf-8") + data[end:])
        with pytest.raises(CheckpointError, match="Unsupported checkpoint version 99"):
            load_checkpoint(path)

    def test_checksum_mismatch(self, checkpoint, tmp_path):
        path = save_checkpoint(checkpoint, tmp_path / "model.ckpt")
        data = bytearray(path.read_bytes())
        data[-1] ^= 0xFF
        path.write_bytes(bytes(data))
        with pytest.raises(CheckpointError, match="Checksum mismatch for out_b"):
            load_checkpoint(path)


def test_checkpoint_names_sort_by_updates(tmp_path):
    names = [checkpoint_name("model", n) for n in (1000, 200, 30000, 400, 600, 800)]
    assert names[1] == "model.000000200.ckpt"
    latest = last_checkpoints([tmp_path / name for name in names], n=3)
    assert [p.name for p in latest] == [checkpoint_name("model", n) for n in (800, 1000, 30000)]


def test_last_checkpoints_needs_positive_count():
    with pytest.raises(ValidationError):
        last_checkpoints([], n=0)


class TestTrain:
    def test_exactly_one_best_checkpoint(self, small_run):
        config, pairs, settings = small_run
        checkpoints = train(config, pairs, pairs, settings)
        assert len(checkpoints) >= 2
        assert sum(c.best for c in checkpoints) == 1
        best = next(c for c in checkpoints if c.best)
        assert best.dev_loss == min(c.dev_loss for c in checkpoints)
        assert [c.updates_seen for c in checkpoints] == sorted(c.updates_seen for c in checkpoints)

    def test_stops_by_patience_or_cap(self, small_run):
        config, pairs, settings = small_run
        checkpoints = train(config, pairs, pairs, settings)
        last = checkpoints[-1].updates_seen
        assert last == settings.max_updates or len(checkpoints) >= settings.patience

    def test_same_seed_same_result(self, small_run):
        config, pairs, settings = small_run
        first = train(config, pairs, pairs, settings)
        second = train(config, pairs, pairs, settings)
        assert [c.dev_loss for c in first] == [c.dev_loss for c in second]
        for name in PARAM_NAMES:
            assert np.array_equal(first[-1].params[name], second[-1].params[name])

    def test_observers_see_every_checkpoint(self, small_run):
        config, pairs, settings = small_run
        observer = Mock(spec=TrainingObserver)
        checkpoints = train(config, pairs, pairs, settings, observers=[observer])
        assert observer.update.call_count == len(checkpoints)
        observer.finish.assert_called_once_with(checkpoints)

    def test_checkpoints_carry_vocabularies(self, small_run):
        config, pairs, settings = small_run
        checkpoints = train(config, pairs, pairs, settings, src_vocab=SRC_VOCAB, tgt_vocab=TGT_VOCAB)
        assert checkpoints[0].tgt_vocab == TGT_VOCAB

    def test_empty_corpus_rejected(self, small_run):
        config, pairs, settings = small_run
        with pytest.raises(ValidationError):
            train(config, [], pairs, settings)

    @pytest.mark.parametrize("field", ["batch_size", "checkpoint_every", "patience", "max_updates"])
    def test_train_config_rejects_nonpositive(self, field):
        with pytest.raises(ValidationError, match=f"{field} must be positive"):
            TrainConfig(**{field: 0})
