"""
CSV result artifacts.

Every artifact opens with provenance comment lines,

    # superres <version>
    # seed=<u64>
    # config_sha256=<hex>
    # experiment=<name>
    # schema=<n>

followed by plain CSV. Raw rows carry row_type=trial; after each group of raw rows come a
row_type=mean and a row_type=std row (population std) over the group's defined values.
"""

import io
import logging
import os
import sys
import tempfile
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from superres import __version__

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
FLOAT_FORMAT = "%.17g"
INT_COLUMNS = ("m", "L", "L_C", "trial", "column", "effective_count", "trials")


def header_lines(seed: int, config_sha256: str, experiment: str) -> Tuple[str, ...]:
    return (
        f"# superres {__version__}",
        f"# seed={seed}",
        f"# config_sha256={config_sha256}",
        f"# experiment={experiment}",
        f"# schema={SCHEMA_VERSION}",
    )


def _aggregate_row(group: pd.DataFrame, keys: Sequence[str], value: str, kind: str) -> Dict:
    values = group[value].dropna().to_numpy(dtype=float)
    row = {k: group[k].iloc[0] for k in keys}
    row["row_type"] = kind
    if values.size == 0:
        row[value] = np.nan
    else:
        row[value] = float(values.mean()) if kind == "mean" else float(values.std(ddof=0))
    return row


def with_aggregates(raw: pd.DataFrame, keys: Sequence[str], value: str = "rce_percent") -> pd.DataFrame:
    """Raw rows with a mean and a std row after each group, groups in first-seen order.

    ``raw`` already carries every output column, row_type included.
    """
    parts = []
    for _, group in raw.groupby(list(keys), sort=False, dropna=False):
        parts.append(group)
        parts.append(pd.DataFrame([_aggregate_row(group, keys, value, kind) for kind in ("mean", "std")]))
    if not parts:
        return _typed(raw)
    return _typed(pd.concat(parts, ignore_index=True)[list(raw.columns)])


def _typed(frame: pd.DataFrame) -> pd.DataFrame:
    frame = frame.copy()
    for column in INT_COLUMNS:
        if column in frame.columns:
            frame[column] = frame[column].astype("Int64")
    return frame


def summarize_results(frame: pd.DataFrame, keys: Sequence[str], value: str = "rce_percent") -> pd.DataFrame:
    """Mean, std and count recomputed from the raw rows of a result frame."""
    raw = frame[frame["row_type"] == "trial"] if "row_type" in frame.columns else frame
    grouped = raw.groupby(list(keys), sort=False, dropna=False)[value]
    summary = grouped.agg(
        mean="mean",
        std=lambda s: float(s.dropna().std(ddof=0)) if s.notna().any() else np.nan,
        count="count",
    )
    return summary.reset_index()


def render_csv(frame: pd.DataFrame, header: Sequence[str], float_format: str = FLOAT_FORMAT) -> str:
    body = _typed(frame).to_csv(index=False, float_format=float_format, na_rep="", lineterminator="\n")
    return "\n".join(header) + "\n" + body


def write_results(frame: pd.DataFrame, path: Optional[str], header: Sequence[str],
                  float_format: str = FLOAT_FORMAT) -> str:
    """Write an artifact atomically (temp file then rename); '-' streams it to stdout."""
    text = render_csv(frame, header, float_format)
    if path is None or str(path) == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return text
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    tmp = tempfile.NamedTemporaryFile("w", encoding="utf-8", newline="", dir=target.parent,
                                      prefix=f".{target.name}.", suffix=".tmp", delete=False)
    try:
        with tmp:
            tmp.write(text)
        os.replace(tmp.name, target)
        logger.info("Saved %d rows to %s", len(frame), target)
    except OSError as e:
        logger.error("Error saving results to %s: %s", target, e)
        Path(tmp.name).unlink(missing_ok=True)
        raise
    return text


def parse_header(lines: Sequence[str]) -> Dict[str, str]:
    meta: Dict[str, str] = {}
    for line in lines:
        content = line.lstrip("#").strip()
        if "=" in content:
            key, value = content.split("=", 1)
            meta[key.strip()] = value.strip()
        elif content.startswith("superres "):
            meta["version"] = content.split(" ", 1)[1]
    return meta


def parse_results_text(text: str, source: str = "<text>") -> Tuple[Dict[str, str], pd.DataFrame]:
    lines = text.splitlines()
    comments = [line for line in lines if line.startswith("#")]
    body = "\n".join(line for line in lines if not line.startswith("#"))
    try:
        frame = pd.read_csv(io.StringIO(body))
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        logger.error("CSV parsing error in %s: %s", source, e)
        raise
    return parse_header(comments), frame


def read_results(path) -> Tuple[Dict[str, str], pd.DataFrame]:
    """Provenance metadata and the data rows of an artifact."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        logger.error("Results file not found: %s", path)
        raise
    return parse_results_text(text, str(path))
