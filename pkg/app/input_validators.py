from dataclasses import dataclass
from pathlib import Path
from typing import Any, Union
from app.exceptions import ValidationError

PathLike = Union[str, Path]

@dataclass
class InputValidator:
    @staticmethod
    def validate_existing_file(value: PathLike) -> Path:
        path = InputValidator._convert_to_path(value)
        if not path.is_file():
            raise ValidationError(f"Input file not found: {path}")
        return path

    @staticmethod
    def validate_output_path(value: PathLike) -> Path:
        path = InputValidator._convert_to_path(value)
        if path.is_dir():
            raise ValidationError(f"Output path is a directory: {path}")
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    @staticmethod
    def validate_positive_int(value: Any, name: str) -> int:
        number = InputValidator._convert_to_int(value, name)
        if number < 1:
            raise ValidationError(f"{name} must be positive: {value}")
        return number

    @staticmethod
    def validate_non_negative_int(value: Any, name: str) -> int:
        number = InputValidator._convert_to_int(value, name)
        if number < 0:
            raise ValidationError(f"{name} must not be negative: {value}")
        return number

    @staticmethod
    def validate_fraction(value: Any, name: str) -> float:
        """Accepts values in [0, 1)."""
        number = InputValidator._convert_to_float(value, name)
        if not 0.0 <= number < 1.0:
            raise ValidationError(f"{name} must be in [0, 1): {value}")
        return number

    @staticmethod
    def validate_threshold(value: Any) -> float:
        number = InputValidator._convert_to_float(value, "threshold")
        if not 0.0 < number < 1.0:
            raise ValidationError(f"threshold must be in (0, 1): {value}")
        return number

    @staticmethod
    def _convert_to_path(value: Any) -> Path:
        if value is None or (isinstance(value, str) and not value.strip()):
            raise ValidationError(f"Invalid path: {value!r}")
        return Path(str(value).strip())

    @staticmethod
    def _convert_to_int(value: Any, name: str) -> int:
        if isinstance(value, bool):
            raise ValidationError(f"Invalid {name}: {value}")
        try:
            if isinstance(value, str):
                value = value.strip()
            return int(value)
        except (TypeError, ValueError) as e:
            raise ValidationError(f"Invalid {name}: {value}") from e

    @staticmethod
    def _convert_to_float(value: Any, name: str) -> float:
        try:
            if isinstance(value, str):
                value = value.strip()
            return float(value)
        except (TypeError, ValueError) as e:
            raise ValidationError(f"Invalid {name}: {value}") from e
