"""
Artifact writers. CSVs are byte-stable: '.' decimals, 17 significant digits,
LF endings, UTF-8. Every JSON carries app, version and the resolved config.
"""

from __future__ import annotations

import json
import logging
import math
import os
from typing import Any, Dict

import numpy as np
import pandas as pd

from data.config import APP_NAME, APP_VERSION

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


def _jsonable(value: Any) -> Any:
    """numpy scalars/arrays and non-finite floats -> plain JSON values"""
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        v = float(value)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if math.isnan(v):
            return None
        return v
    if isinstance(value, complex):
        return {"re": value.real, "im": value.imag}
    return value


def write_csv(df: pd.DataFrame, out_dir: str, name: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n", encoding="utf-8")
    logger.debug("csv written", extra={"path": path, "rows": len(df)})
    return path


def write_json(payload: Dict[str, Any], out_dir: str, name: str, config: Dict[str, Any]) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    document = {"app": APP_NAME, "version": APP_VERSION, "config": config}
    document.update(payload)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_jsonable(document), fh, indent=2, ensure_ascii=False)
        fh.write("\n")
    logger.debug("json written", extra={"path": path})
    return path
