"""Path resolution, hashing, number formatting and JSON I/O helpers."""

import hashlib
import json
import re
from pathlib import Path
from typing import Any, Dict, Iterable, Sequence

import numpy as np

from sepcon.constants import CSV_SIGNIFICANT_DIGITS, FIXTURES_DIR
from sepcon.errors import ConfigError


def sanitize_filename(name: str) -> str:
    """Convert arbitrary string to safe directory name."""
    safe = re.sub(r"[^\w\s-]", "", name).strip().lower()
    safe = re.sub(r"[-\s]+", "_", safe)
    return safe or "untitled"


def resolve_config_path(name_or_path: str) -> Path:
    """
    Resolve a system reference to a config file path.

    - If name_or_path contains path separators or ends with .json, treat as direct path
    - Else resolve to fixtures/{name}.json
    """
    if "/" in name_or_path or "\\" in name_or_path or name_or_path.endswith(".json"):
        return Path(name_or_path)
    return FIXTURES_DIR / f"{sanitize_filename(name_or_path)}.json"


def read_json(path: Path) -> Dict[str, Any]:
    """Load a JSON document, raising ConfigError with line/column on failure."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read {path}: {e}")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Invalid JSON in {path}: {e.msg}", e.lineno, e.colno)
    if not isinstance(data, dict):
        raise ConfigError(f"Top-level JSON value in {path} must be an object")
    return data


def config_hash(raw: Dict[str, Any]) -> str:
    """Short sha256 of the canonical JSON form of a raw config."""
    canonical = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


def fmt(value: Any) -> str:
    """Format a number for CSV output at fixed significant digits."""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if v == 0.0:
            return "0"
        return f"{v:.{CSV_SIGNIFICANT_DIGITS}g}"
    return str(value)


def fmt_vector(values: Iterable[Any]) -> str:
    """Space-joined formatted vector, used for flattened beliefs in CSV cells."""
    return " ".join(fmt(v) for v in values)


def to_jsonable(obj: Any) -> Any:
    """Recursively convert numpy containers and scalars to plain JSON types."""
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(x) for x in obj]
    return obj


def standard_error(samples: Sequence[float]) -> float:
    """Sample standard error of the mean; zero for fewer than two samples."""
    arr = np.asarray(samples, dtype=float)
    if arr.size < 2:
        return 0.0
    return float(arr.std(ddof=1) / np.sqrt(arr.size))
