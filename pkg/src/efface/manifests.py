"""JSON-lines manifest I/O.

Manifests are the interchange format between pipeline stages: one JSON
object per line, values that name files are paths relative to the manifest
location (absolute paths pass through untouched).
"""

import json
from pathlib import Path


def read_jsonl(path) -> list[dict]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{line_no}: invalid JSON ({exc})") from exc
    return records


def write_jsonl(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def resolve(base, value) -> Path:
    """Path of a manifest entry, relative to the manifest's directory."""
    p = Path(value)
    if p.is_absolute():
        return p
    return Path(base).parent / p
