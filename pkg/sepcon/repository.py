"""Artifact repository — solutions, CSV tables and trace files on disk."""

import json
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

from sepcon.constants import OUTPUT_DIR, SOLUTION_FORMAT, SOLUTION_VERSION
from sepcon.errors import ConfigError
from sepcon.solver import Solution
from sepcon.system import System
from sepcon.utils import fmt, fmt_vector, read_json, sanitize_filename, to_jsonable


class ArtifactRepository:
    """
    Repository for run artifacts.

    Each run lives in <base>/<name>/ with solution.json, CSV tables and
    trace.jsonl. Every CSV opens with a `# config_hash=... seed=...` line and
    every JSON artifact carries the same pair under "meta".
    """

    def __init__(self, base_dir: Optional[Path] = None):
        self.base_dir = Path(base_dir) if base_dir is not None else OUTPUT_DIR

    def path(self, name: str) -> Path:
        """Directory path for a run by name."""
        return self.base_dir / sanitize_filename(name)

    def exists(self, name: str) -> bool:
        return self.path(name).exists()

    def prepare(self, name: str) -> Path:
        """Create the run directory. Existing non-empty runs are moved to a backup first."""
        target = self.path(name)
        self.base_dir.mkdir(parents=True, exist_ok=True)
        if target.exists() and any(target.iterdir()):
            stamp = datetime.now().strftime("%Y%m%d_%H%M%S_%f")
            target.rename(target.parent / f"{target.name}_backup_{stamp}")
        target.mkdir(parents=True, exist_ok=True)
        return target

    @staticmethod
    def meta(config_hash: str, seed: int, **extra: Any) -> Dict[str, Any]:
        data = {"config_hash": config_hash, "seed": seed}
        data.update(extra)
        return data

    def save_solution(self, target: Path, solution: Solution, meta: Dict[str, Any]) -> Path:
        """Write solution.json (versioned) into the run directory."""
        doc = {
            "format": SOLUTION_FORMAT,
            "version": SOLUTION_VERSION,
            "meta": meta,
            "solution": solution.to_dict(),
        }
        path = Path(target) / "solution.json"
        path.write_text(json.dumps(to_jsonable(doc), indent=2), encoding="utf-8")
        return path

    def load_solution(
        self, path: Path, sys: System, config_hash: Optional[str] = None
    ) -> Solution:
        """
        Reload a solution for the given system.

        Raises:
            ConfigError: On a foreign format, an unsupported version, or a
                config hash that does not match the system's.
        """
        doc = read_json(Path(path))
        if doc.get("format") != SOLUTION_FORMAT:
            raise ConfigError(f"{path} is not a {SOLUTION_FORMAT} artifact")
        if doc.get("version") != SOLUTION_VERSION:
            raise ConfigError(f"Unsupported solution version {doc.get('version')!r} in {path}")
        stored = doc.get("meta", {}).get("config_hash")
        if config_hash is not None and stored != config_hash:
            raise ConfigError(f"{path} was solved for config {stored}, not {config_hash}")
        try:
            return Solution.from_dict(sys, doc["solution"])
        except (KeyError, ValueError) as e:
            raise ConfigError(f"Malformed solution in {path}: {e}")

    def write_csv(
        self,
        path: Path,
        columns: Sequence[str],
        rows: Iterable[Dict[str, Any]],
        meta: Dict[str, Any],
    ) -> Path:
        """CSV with the provenance comment line, a header and formatted cells."""
        lines = [f"# config_hash={meta['config_hash']} seed={meta['seed']}", ",".join(columns)]
        for row in rows:
            lines.append(",".join(_cell(row.get(c)) for c in columns))
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
        return Path(path)

    def write_trace(
        self, path: Path, episodes: Sequence[List[Dict[str, Any]]], meta: Dict[str, Any]
    ) -> Path:
        """Line-delimited JSON: one header line, then one record per stage per episode."""
        with Path(path).open("w", encoding="utf-8") as fh:
            fh.write(json.dumps(to_jsonable({"header": meta})) + "\n")
            for i, records in enumerate(episodes):
                for rec in records:
                    fh.write(json.dumps(to_jsonable({"episode": i, **rec})) + "\n")
        return Path(path)


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (list, tuple)) or (hasattr(value, "shape") and not isinstance(value, np.generic)):
        return fmt_vector(value)
    return fmt(value)


def read_csv(path: Path) -> Dict[str, Any]:
    """Parse a CSV written by `write_csv` into its meta pair, header and raw rows."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    meta = dict(part.split("=", 1) for part in lines[0].lstrip("# ").split())
    header = lines[1].split(",")
    rows = [dict(zip(header, line.split(","))) for line in lines[2:]]
    return {"meta": meta, "columns": header, "rows": rows}
