"""
Artifact writers.
CSV tables through pandas with a fixed float format, JSON through pydantic.
Identical inputs produce byte-identical files.
"""

import json
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel

FLOAT_FORMAT = "%.17g"


def _plain(value: Any) -> Any:
    """JSON-safe copy; non-finite floats become strings."""
    if isinstance(value, BaseModel):
        return _plain(value.model_dump(mode="python"))
    if isinstance(value, Mapping):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else str(value)
    if isinstance(value, complex):
        return {"re": _plain(value.real), "im": _plain(value.imag)}
    return value


def write_table(df: pd.DataFrame, path: Union[str, Path],
                columns: Optional[Sequence[str]] = None) -> Path:
    """
    Write a DataFrame as CSV.

    Args:
        df: Table to write
        path: Target file
        columns: Fixed column order (defaults to the frame's own)

    Returns:
        Path written
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if columns is not None:
        df = df.reindex(columns=list(columns))
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    logger.debug(f"Wrote {len(df)} rows to {path}")
    return path


def write_rows(rows: Iterable[Mapping[str, Any]], path: Union[str, Path],
               columns: Sequence[str]) -> Path:
    """Write a list of flat records as CSV with the given column order."""
    return write_table(pd.DataFrame(list(rows), columns=list(columns)), path)


def write_json(payload: Any, path: Union[str, Path]) -> Path:
    """Write a pydantic model or plain structure as sorted, indented JSON."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_plain(payload), indent=2, sort_keys=True) + "\n")
    logger.debug(f"Wrote {path}")
    return path


def provenance_table(rows: Iterable[Dict[str, Any]], section: str) -> List[Dict[str, Any]]:
    """Tag long-format report rows with the report section they came from."""
    return [{"section": section, **row} for row in rows]
