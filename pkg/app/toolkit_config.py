from dataclasses import dataclass, field
from pathlib import Path
import logging
import os
from typing import Optional
from dotenv import load_dotenv

from app.exceptions import ConfigurationError

load_dotenv()

def get_project_root() -> Path:
    current_file = Path(__file__)
    return current_file.parent.parent

@dataclass
class ToolkitConfig:
    """Ambient settings: where logs go, how text files are read and written.

    Nothing here changes numeric results; model, search and analysis options
    are command-line flags.
    """
    base_dir: Path = field(default_factory=lambda: Path(os.getenv('TOOLKIT_BASE_DIR', str(get_project_root()))).resolve())
    default_encoding: str = field(default_factory=lambda: os.getenv('TOOLKIT_DEFAULT_ENCODING', 'utf-8'))
    log_level: Optional[str] = None

    def __post_init__(self):
        if self.log_level is None:
            self.log_level = os.getenv('TOOLKIT_LOG_LEVEL', 'INFO').strip().upper()

    @property
    def log_dir(self) -> Path:
        return Path(os.getenv('TOOLKIT_LOG_DIR', str(self.base_dir / "logs"))).resolve()

    @property
    def log_file(self) -> Path:
        return Path(os.getenv('TOOLKIT_LOG_FILE', str(self.log_dir / "toolkit.log"))).resolve()

    @property
    def numeric_log_level(self) -> int:
        return logging.getLevelName(self.log_level)

    def validate(self) -> None:
        if not isinstance(self.numeric_log_level, int):
            raise ConfigurationError(f"Unknown log level: {self.log_level}")
        if not self.default_encoding:
            raise ConfigurationError("default_encoding must not be empty")
