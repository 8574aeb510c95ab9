"""Rendering of run reports as TSV tables or versioned JSON documents."""

import json
import logging
import math
import sys
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional

import numpy as np
import pandas as pd
from typing_extensions import Literal

logger = logging.getLogger(__name__)

SCHEMA_VERSION = "1.0"
ReportFormat = Literal["tsv", "json"]
FORMATS = ("tsv", "json")
FLOAT_FORMAT = "%.6g"


def to_jsonable(value: Any) -> Any:
    """Plain JSON types; non-finite floats become None."""
    if isinstance(value, Mapping):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def render_json(payload: Mapping[str, Any]) -> str:
    document = {"schema_version": SCHEMA_VERSION}
    document.update(payload)
    return json.dumps(to_jsonable(document), sort_keys=True, indent=2) + "\n"


def render_tsv(sections: Mapping[str, List[Dict[str, Any]]]) -> str:
    """One ``# name`` header line and one tab-separated table per non-empty section."""
    blocks = []
    for name, rows in sections.items():
        if not rows:
            continue
        frame = pd.DataFrame(rows)
        blocks.append(f"# {name}\n" + frame.to_csv(sep="\t", index=False, float_format=FLOAT_FORMAT, na_rep="NA"))
    return "\n".join(blocks)


def render_error(error_dict: Mapping[str, Any], fmt: ReportFormat) -> str:
    if fmt == "json":
        return render_json({"error": error_dict})
    return f"error\t{error_dict['code']}\t{error_dict['message']}\n"


def write_report(text: str, output: Optional[str] = None):
    """Write to a file, or to stdout when no path is given."""
    if output is None or output == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    path = Path(output)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    logger.info(f"Report written to {path}")
