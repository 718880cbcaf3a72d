from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Union
import logging

import pandas as pd

from app.exceptions import OperationError
from app.training import Checkpoint, checkpoint_name, save_checkpoint

HISTORY_COLUMNS = ["updates_seen", "dev_loss", "best"]


class TrainingObserver(ABC):

    @abstractmethod
    def update(self, checkpoint: Checkpoint) -> None:
        pass

    def finish(self, checkpoints: Sequence[Checkpoint]) -> None:
        pass

    @staticmethod
    def _validate_checkpoint(checkpoint: Checkpoint) -> None:
        if checkpoint is None:
            raise AttributeError("Checkpoint cannot be None")


class LoggingObserver(TrainingObserver):

    def update(self, checkpoint: Checkpoint) -> None:
        self._validate_checkpoint(checkpoint)
        logging.info(
            f"Checkpoint at {checkpoint.updates_seen} updates: "
            f"dev loss {checkpoint.dev_loss:.6f}"
        )

    def finish(self, checkpoints: Sequence[Checkpoint]) -> None:
        logging.info(f"Training finished with {len(checkpoints)} checkpoints")


class CheckpointWriterObserver(TrainingObserver):
    """Writes every checkpoint under ``directory``; rewrites the best one at the end."""

    def __init__(self, directory: Union[str, Path], prefix: str = "model"):
        self.directory = Path(directory)
        self.prefix = prefix
        self.paths: Dict[int, Path] = {}
        self.directory.mkdir(parents=True, exist_ok=True)

    def update(self, checkpoint: Checkpoint) -> None:
        self._validate_checkpoint(checkpoint)
        self.paths[checkpoint.updates_seen] = self._write(checkpoint)

    def finish(self, checkpoints: Sequence[Checkpoint]) -> None:
        for checkpoint in checkpoints:
            if checkpoint.best:
                self.paths[checkpoint.updates_seen] = self._write(checkpoint)
                logging.info(f"Best checkpoint is {self.paths[checkpoint.updates_seen]}")

    def _write(self, checkpoint: Checkpoint) -> Path:
        path = self.directory / checkpoint_name(self.prefix, checkpoint.updates_seen)
        try:
            return save_checkpoint(checkpoint, path)
        except OSError as e:
            logging.error(f"Failed to write checkpoint {path}: {e}")
            raise


@dataclass
class TrainingHistory(TrainingObserver):
    """Dev-loss curve of a training run, one row per checkpoint."""
    rows: List[Dict[str, object]] = field(default_factory=list)

    def update(self, checkpoint: Checkpoint) -> None:
        self._validate_checkpoint(checkpoint)
        self.rows.append({"updates_seen": checkpoint.updates_seen,
                          "dev_loss": checkpoint.dev_loss, "best": False})

    def finish(self, checkpoints: Sequence[Checkpoint]) -> None:
        best = {c.updates_seen for c in checkpoints if c.best}
        for row in self.rows:
            row["best"] = row["updates_seen"] in best

    def to_dataframe(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=HISTORY_COLUMNS)

    def save(self, path: Union[str, Path]) -> None:
        self.to_dataframe().to_csv(path, index=False)
        logging.info(f"Training history saved to {path}")

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'TrainingHistory':
        try:
            df = pd.read_csv(path)
        except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
            raise OperationError(f"Failed to load training history: {e}") from e
        if list(df.columns) != HISTORY_COLUMNS:
            raise OperationError(f"Unexpected history columns in {path}: {list(df.columns)}")
        rows = [{"updates_seen": int(r.updates_seen), "dev_loss": float(r.dev_loss), "best": bool(r.best)}
                for r in df.itertuples(index=False)]
        return cls(rows)
