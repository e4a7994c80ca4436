import csv
import hashlib
import io
import json
import logging
import re
from typing import Any, Dict, List, Union

import numpy as np

logger = logging.getLogger(__name__)

# --- Reproducibility Helpers ---

def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    """Returns an independent generator for (seed, *keys).

    Each worker derives its own stream from the experiment seed and its item
    index, so results do not depend on the order in which items are processed.

    Args:
        seed: The experiment seed.
        *keys: Non-negative integers identifying the consumer (series index, stage id).

    Returns:
        A numpy Generator seeded from the SeedSequence of [seed, *keys].
    """
    return np.random.default_rng(np.random.SeedSequence([seed, *keys]))


def stable_hash(payload: Any) -> str:
    """SHA-256 hex digest of the canonical JSON encoding of `payload`.

    Keys are sorted so that logically equal dictionaries hash identically.
    """
    encoded = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(encoded.encode("utf-8")).hexdigest()


def safe_file_stem(name: str) -> str:
    """Replaces characters that are unsafe in file names with underscores."""
    return re.sub(r"[^A-Za-z0-9._-]+", "_", name).strip("_") or "unnamed"

# --- Data Formatting Helper ---

def format_data_payload(data: Union[List[Dict[str, Any]], List[str]], format_type: str) -> str:
    """Formats structured data into a string payload, supporting JSON and CSV.

    Used by the report writer and the training log to serialize tabular records.

    Args:
        data: The data to format, typically a list of dictionaries (for JSON/CSV)
              or a list of strings (for CSV, where each string is a row).
        format_type: The target format. Supported values are "json" and "csv".
                     If an unsupported format is provided, it defaults to JSON.

    Returns:
        A string representing the formatted data.
        - For "json": A JSON string with an indent of 2. Empty list results in "[]".
        - For "csv": A CSV formatted string with "\\n" line endings so files are
                     byte-stable across platforms. Empty list results in an empty string.
    """
    if not data:
        return "[]" if format_type == "json" else ""

    if format_type == "json":
        return json.dumps(data, indent=2)
    elif format_type == "csv":
        output = io.StringIO()
        if isinstance(data[0], dict):
            headers = list(data[0].keys())
            writer = csv.DictWriter(output, fieldnames=headers, lineterminator="\n")
            writer.writeheader()
            writer.writerows(data)
        else:
            for item in data:
                output.write(str(item) + "\n")
        return output.getvalue()
    else:
        logger.warning("Unsupported format_type '%s' in format_data_payload. Defaulting to JSON.", format_type)
        return json.dumps(data, indent=2)

# --- Error Formatting Helper ---

def format_error_body(e: Exception, format_type: str, stage: str | None = None) -> str:
    """Formats an exception into a one-line (text) or JSON error message.

    Args:
        e: The exception instance.
        format_type: "json" returns `{"error": {"type": ..., "message": ..., "stage": ...}}`;
                     anything else returns `ERROR: [stage] [ExceptionType] Message`.
        stage: The pipeline stage that failed (gen, render, train, eval, report, plot).

    Returns:
        A string representing the formatted error.
    """
    error_type = type(e).__name__
    message = str(e)
    if format_type == "json":
        error_obj = {"error": {"type": error_type, "message": message, "stage": stage}}
        return json.dumps(error_obj)
    prefix = f"ERROR: [{stage}] " if stage else "ERROR: "
    return f"{prefix}[{error_type}] {message}"
