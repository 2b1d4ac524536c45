"""Readers for the CSV and JSON files in a run directory."""

import csv
import json
from pathlib import Path


def read_csv(path):
    """Returns {column: [float, ...]} for a numeric CSV with a header row."""
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    if not rows:
        return {}
    return {k: [float(r[k]) if r[k] not in ("", "nan") else float("nan") for r in rows] for k in rows[0]}


def read_json(path):
    return json.loads(Path(path).read_text())
