"""
Read-only access to the run results already on disk.

Sweeps consult it to skip (config, seed) keys that were simulated before.
"""
import csv
from pathlib import Path

from django.conf import settings


def summary_path(output_dir=None) -> Path:
    return Path(output_dir or settings.DNSIM_OUTPUT_DIR) / settings.DNSIM_SUMMARY_CSV


def get_summary_rows(output_dir=None, key=None) -> list:
    path = summary_path(output_dir)
    if not path.exists():
        return []
    with open(path, newline='', encoding='utf-8') as f:
        rows = list(csv.DictReader(f))
    if key is not None:
        rows = [row for row in rows if row.get('key') == key]
    return rows


def known_keys(output_dir=None) -> dict:
    """Content key -> summary row of every finished run (first row wins)."""
    keys = {}
    for row in get_summary_rows(output_dir):
        keys.setdefault(row['key'], row)
    return keys
