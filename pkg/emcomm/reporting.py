"""Result files: fixed-format CSV tables and sorted JSON envelopes.

Nothing written here carries a timestamp; identical inputs give
byte-identical files. CSV tables written by the CLI open with `# key: value`
lines holding the library version, command, resolved config and scenario digest.
"""

from __future__ import annotations

import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Tuple

import numpy as np
import pandas as pd

from . import __version__

logger = logging.getLogger("emcomm")

FLOAT_FORMAT = "%.12e"
META_PREFIX = "# "


def to_jsonable(obj: Any) -> Any:
    """Plain-JSON view of numpy/complex values; complex → [re, im], non-finite → None."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return [to_jsonable(float(obj.real)), to_jsonable(float(obj.imag))]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return value if math.isfinite(value) else None
    if isinstance(obj, Path):
        return str(obj)
    return obj


def envelope(
    command: str,
    resolved_config: Dict[str, Any],
    scenario_sha256: str,
    payload: Dict[str, Any],
) -> Dict[str, Any]:
    return {
        "emcomm_version": __version__,
        "command": command,
        "resolved_config": to_jsonable(resolved_config),
        "scenario_sha256": scenario_sha256,
        "result": to_jsonable(payload),
    }


def dumps(doc: Dict[str, Any]) -> str:
    return json.dumps(to_jsonable(doc), sort_keys=True, indent=2) + "\n"


def write_json(path: Path, doc: Dict[str, Any]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(doc), encoding="utf-8")
    logger.info("wrote %s", path)
    return path


def csv_metadata(
    command: str, resolved_config: Dict[str, Any], scenario_sha256: str
) -> Dict[str, Any]:
    """Header block for CSV tables: the same provenance the JSON envelope carries."""
    return {
        "emcomm_version": __version__,
        "command": command,
        "resolved_config": to_jsonable(resolved_config),
        "scenario_sha256": scenario_sha256,
    }


def write_csv(path: Path, frame: pd.DataFrame, meta: Dict[str, Any] | None = None) -> Path:
    """Table with optional `# key: <compact JSON>` lines ahead of the column header."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        entries = meta or {}
        for key in sorted(entries):
            value = json.dumps(to_jsonable(entries[key]), sort_keys=True, separators=(",", ":"))
            fh.write(f"{META_PREFIX}{key}: {value}\n")
        frame.to_csv(fh, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info("wrote %s rows=%d", path, len(frame))
    return path


def read_csv(path: Path) -> Tuple[pd.DataFrame, Dict[str, Any]]:
    """Inverse of `write_csv`: the table and its decoded header block."""
    meta: Dict[str, Any] = {}
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith(META_PREFIX):
                break
            key, _, value = line[len(META_PREFIX) :].rstrip("\n").partition(": ")
            meta[key] = json.loads(value)
    return pd.read_csv(path, skiprows=len(meta)), meta


def matrix_frame(mat: np.ndarray) -> pd.DataFrame:
    """Long-format complex matrix: one (row, col, Re, Im) record per entry."""
    mat = np.atleast_2d(np.asarray(mat, dtype=complex))
    rows, cols = np.meshgrid(np.arange(mat.shape[0]), np.arange(mat.shape[1]), indexing="ij")
    flat = mat.ravel()
    return pd.DataFrame({"row": rows.ravel(), "col": cols.ravel(), "Re": flat.real, "Im": flat.imag})


def list_outputs(out_dir: Path) -> List[str]:
    return sorted(p.name for p in out_dir.iterdir() if p.is_file())
