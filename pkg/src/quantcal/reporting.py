"""Report serialization: canonical JSON, delimited CSV, aligned text tables,
and the per-run manifest that makes every invocation replayable."""

from __future__ import annotations

import csv
import hashlib
import json
import time
from pathlib import Path

__version__ = "0.1.0"


def write_json(obj, path: str | Path) -> Path:
    """Canonical JSON: sorted keys, fixed indentation, trailing newline.
    Identical inputs produce byte-identical files."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


def write_csv(rows: list[dict], columns: list[str], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([row.get(c, "") for c in columns])
    return path


def format_table(rows: list[dict], columns: list[str]) -> str:
    """Aligned-column text table (left-aligned strings, right-aligned numbers)."""
    def fmt(v):
        if isinstance(v, float):
            return f"{v:.4f}"
        return "" if v is None else str(v)

    cells = [[fmt(row.get(c, "")) for c in columns] for row in rows]
    widths = [max(len(c), *(len(r[i]) for r in cells)) if cells else len(c)
              for i, c in enumerate(columns)]
    numeric = [all(isinstance(row.get(c), (int, float)) or row.get(c) in (None, "")
                   for row in rows) for c in columns]

    def line(parts):
        padded = [p.rjust(widths[i]) if numeric[i] else p.ljust(widths[i])
                  for i, p in enumerate(parts)]
        return "  ".join(padded).rstrip()

    header = line(list(columns))
    rule = "-" * len(header)
    return "\n".join([header, rule] + [line(r) for r in cells]) + "\n"


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def tree_digest(path: str | Path) -> str:
    """Digest of a directory: sha256 over sorted (relative name, file digest)."""
    path = Path(path)
    if path.is_file():
        return file_digest(path)
    h = hashlib.sha256()
    for p in sorted(path.rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(path)).encode())
            h.update(file_digest(p).encode())
    return h.hexdigest()


class RunManifest:
    """Records a CLI run: command, resolved flags, seed, input digests,
    and wall-clock duration.  Written next to every output artifact."""

    def __init__(self, command: str, flags: dict, seed: int):
        self.started = time.time()
        self.doc = {
            "tool": "quantcal",
            "version": __version__,
            "command": command,
            "flags": flags,
            "seed": seed,
            "inputs": {},
        }

    def add_input(self, name: str, path: str | Path) -> None:
        self.doc["inputs"][name] = {"path": str(path), "sha256": tree_digest(path)}

    def write(self, out_dir: str | Path) -> Path:
        self.doc["duration_seconds"] = round(time.time() - self.started, 3)
        return write_json(self.doc, Path(out_dir) / "run_manifest.json")
