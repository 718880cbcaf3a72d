"""Minibatch training with early stopping, and the checkpoint file format.

A checkpoint file is a magic line, one line of JSON header, then the raw
little-endian float64 bytes of every parameter in header order. The header
holds the format version, the model config, both vocabularies, the training
position and, per parameter, its shape, byte offset and SHA-256 digest. A text
manifest with names, shapes and digests is written next to it.
"""
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import TYPE_CHECKING, Any, Dict, List, Optional, Sequence, Union
import hashlib
import json
import logging
import math

import numpy as np

from app.corpus import ParallelPair, Vocabulary, batches
from app.exceptions import CheckpointError, ValidationError
from app.model import ModelConfig, ModelParams, evaluate_loss, init_params, loss_and_grads, param_shapes
from app.optim import DEFAULT_EPS, DEFAULT_RHO, adadelta_step, new_opt_state

if TYPE_CHECKING:
    from app.history import TrainingObserver

MAGIC = b"S2T-CHECKPOINT\n"
FORMAT_VERSION = 1
CHECKPOINT_SUFFIX = ".ckpt"
MANIFEST_SUFFIX = ".manifest"


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 40
    checkpoint_every: int = 200
    patience: int = 10
    max_updates: int = 200000
    rho: float = DEFAULT_RHO
    eps: float = DEFAULT_EPS
    seed: int = 1234

    def __post_init__(self):
        for name in ("batch_size", "checkpoint_every", "patience", "max_updates"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be positive")


@dataclass(frozen=True)
class Checkpoint:
    params: ModelParams
    updates_seen: int
    dev_loss: float
    best: bool = False
    src_vocab: Optional[Vocabulary] = field(default=None, compare=False)
    tgt_vocab: Optional[Vocabulary] = field(default=None, compare=False)


def train(config: ModelConfig, train_pairs: Sequence[ParallelPair], dev_pairs: Sequence[ParallelPair],
          train_config: Optional[TrainConfig] = None,
          observers: Sequence['TrainingObserver'] = (),
          src_vocab: Optional[Vocabulary] = None,
          tgt_vocab: Optional[Vocabulary] = None) -> List[Checkpoint]:
    """Trains until the dev loss stalls for ``patience`` checkpoints or the update cap.

    Returns every checkpoint in order; exactly one of them has ``best`` set.
    """
    train_config = train_config or TrainConfig(seed=config.seed)
    if not train_pairs or not dev_pairs:
        raise ValidationError("Training and development corpora must be nonempty")
    rng = np.random.default_rng(train_config.seed)
    params = init_params(config)
    state = new_opt_state(params, train_config.rho, train_config.eps)
    logging.info(f"Training on {len(train_pairs)} pairs with {params.num_parameters()} parameters")

    checkpoints: List[Checkpoint] = []
    best_loss, best_index, stale = math.inf, 0, 0
    updates = 0

    def take_checkpoint() -> None:
        nonlocal best_loss, best_index, stale
        dev_loss = evaluate_loss(params, dev_pairs, train_config.batch_size)
        checkpoint = Checkpoint(params.copy(), updates, dev_loss,
                                src_vocab=src_vocab, tgt_vocab=tgt_vocab)
        checkpoints.append(checkpoint)
        if dev_loss < best_loss:
            best_loss, best_index, stale = dev_loss, len(checkpoints) - 1, 0
        else:
            stale += 1
        for observer in observers:
            observer.update(checkpoint)

    stopped = False
    while not stopped:
        for batch in batches(train_pairs, train_config.batch_size, rng):
            loss, grads = loss_and_grads(params, batch, rng)
            if not math.isfinite(loss):
                raise ValidationError(f"Training loss diverged at update {updates + 1}")
            adadelta_step(params, grads, state)
            updates += 1
            if updates % train_config.checkpoint_every == 0:
                take_checkpoint()
                if stale >= train_config.patience:
                    logging.info(f"Early stop after {updates} updates: "
                                 f"no improvement in {stale} checkpoints")
                    stopped = True
                    break
            if updates >= train_config.max_updates:
                logging.info(f"Reached the update cap of {train_config.max_updates}")
                stopped = True
                break

    if not checkpoints or checkpoints[-1].updates_seen != updates:
        take_checkpoint()
    checkpoints[best_index] = replace(checkpoints[best_index], best=True)
    for observer in observers:
        observer.finish(checkpoints)
    logging.info(f"Best checkpoint at {checkpoints[best_index].updates_seen} updates, "
                 f"dev loss {best_loss:.6f}")
    return checkpoints


# -- checkpoint files ---------------------------------------------------------

def manifest_path(path: Union[str, Path]) -> Path:
    return Path(str(path) + MANIFEST_SUFFIX)


def save_checkpoint(checkpoint: Checkpoint, path: Union[str, Path]) -> Path:
    path = Path(path)
    params = checkpoint.params
    entries: List[Dict[str, Any]] = []
    blobs: List[bytes] = []
    offset = 0
    for name, shape in param_shapes(params.config).items():
        blob = np.ascontiguousarray(params[name], dtype="<f8").tobytes()
        entries.append({"name": name, "shape": list(shape), "offset": offset,
                        "nbytes": len(blob), "sha256": hashlib.sha256(blob).hexdigest()})
        blobs.append(blob)
        offset += len(blob)
    header = {
        "version": FORMAT_VERSION,
        "config": params.config.to_dict(),
        "updates_seen": checkpoint.updates_seen,
        "dev_loss": checkpoint.dev_loss,
        "best": checkpoint.best,
        "src_vocab": list(checkpoint.src_vocab.tokens) if checkpoint.src_vocab else None,
        "tgt_vocab": list(checkpoint.tgt_vocab.tokens) if checkpoint.tgt_vocab else None,
        "params": entries,
    }
    with open(path, "wb") as handle:
        handle.write(MAGIC)
        handle.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for blob in blobs:
            handle.write(blob)
    manifest = "".join(f"{entry['name']}\t{'x'.join(map(str, entry['shape']))}\t{entry['sha256']}\n"
                       for entry in entries)
    manifest_path(path).write_text(manifest, encoding="utf-8")
    logging.info(f"Saved checkpoint at {checkpoint.updates_seen} updates to {path}")
    return path


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise CheckpointError(f"Not a checkpoint file: {path}")
    end = data.find(b"\n", len(MAGIC))
    if end < 0:
        raise CheckpointError(f"Truncated checkpoint header in {path}")
    try:
        header = json.loads(data[len(MAGIC):end].decode("utf-8"))
    except (UnicodeDecodeError, ValueError) as e:
        logging.error(f"Corrupt checkpoint header in {path}: {e}")
        raise CheckpointError(f"Corrupt checkpoint header in {path}") from e
    if header.get("version") != FORMAT_VERSION:
        raise CheckpointError(f"Unsupported checkpoint version {header.get('version')} in {path}")
    try:
        config = ModelConfig.from_dict(header["config"])
        body = data[end + 1:]
        tensors = {}
        for entry in header["params"]:
            blob = body[entry["offset"]:entry["offset"] + entry["nbytes"]]
            if len(blob) != entry["nbytes"] or hashlib.sha256(blob).hexdigest() != entry["sha256"]:
                raise CheckpointError(f"Checksum mismatch for {entry['name']} in {path}")
            tensors[entry["name"]] = np.frombuffer(blob, dtype="<f8").astype(np.float64).reshape(entry["shape"])
        expected = param_shapes(config)
        if set(tensors) != set(expected) or any(tensors[n].shape != s for n, s in expected.items()):
            raise CheckpointError(f"Parameter table does not match the config in {path}")
        src_vocab = Vocabulary(tuple(header["src_vocab"])) if header.get("src_vocab") else None
        tgt_vocab = Vocabulary(tuple(header["tgt_vocab"])) if header.get("tgt_vocab") else None
        return Checkpoint(ModelParams(config, tensors), int(header["updates_seen"]),
                          float(header["dev_loss"]), bool(header["best"]), src_vocab, tgt_vocab)
    except (KeyError, TypeError, ValueError) as e:
        logging.error(f"Malformed checkpoint {path}: {e}")
        raise CheckpointError(f"Malformed checkpoint {path}: {e}") from e


def checkpoint_name(prefix: str, updates_seen: int) -> str:
    return f"{prefix}.{updates_seen:09d}{CHECKPOINT_SUFFIX}"


def last_checkpoints(paths: Sequence[Union[str, Path]], n: int = 5) -> List[Path]:
    """The ``n`` latest checkpoint files; names sort by update count."""
    if n < 1:
        raise ValidationError(f"n must be positive: {n}")
    return sorted(Path(p) for p in paths)[-n:]
