"""
Data storage utilities for JSON and CSV files.
"""
import json
import logging
import os

import pandas as pd

logger = logging.getLogger(__name__)


def get_data_path(*parts, data_dir=None):
    """Get the full path to a data file."""
    return os.path.join(data_dir or "data", *parts)


def ensure_parent(path):
    """Create the directory holding `path` if needed."""
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    return path


def dump_json(payload):
    """Byte-stable JSON text: sorted keys, 2-space indent, trailing newline."""
    return json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_json(path, payload):
    ensure_parent(path)
    with open(path, "w", encoding="utf-8") as f:
        f.write(dump_json(payload))
    logger.info(f"📄 Wrote {path}")
    return path


def read_json(path):
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def write_frame_csv(path, frame):
    """Save a DataFrame to CSV without the index."""
    ensure_parent(path)
    frame.to_csv(path, index=False, lineterminator="\n")
    logger.info(f"📄 Wrote {path} ({len(frame)} rows)")
    return path


def read_frame_csv(path, **kwargs):
    """Load a CSV into a DataFrame, returning an empty frame on failure."""
    try:
        return pd.read_csv(path, **kwargs)
    except FileNotFoundError:
        raise
    except Exception as e:
        logger.error(f"❌ Error loading {path}: {e}")
        return pd.DataFrame()


def read_lines(path):
    """Non-empty stripped lines of a text file."""
    with open(path, "r", encoding="utf-8") as f:
        return [line.strip() for line in f if line.strip()]


def write_lines(path, lines):
    ensure_parent(path)
    with open(path, "w", encoding="utf-8") as f:
        for line in lines:
            f.write(line + "\n")
    return path


def list_reports(directory):
    """JSON report files in `directory`, sorted by name."""
    if not os.path.isdir(directory):
        return []
    return sorted(
        os.path.join(directory, name)
        for name in os.listdir(directory)
        if name.endswith(".json")
    )
