#!/usr/bin/env python3
"""
artifacts — files written by femwave runs. Plain text, CSV, JSON and Matrix Market.

Relative output names resolve under OUTPUT_DIR; absolute paths are used as given.
Every write goes to a temporary file in the target directory first and is then
renamed into place, so a reader never sees a half-written artifact.

Storage layout:
  $FEMWAVE_OUTPUT_DIR/                   default ./femwave-out
    <name>.csv                           condition tables, J,kappa,lambda_min,lambda_max,iters
    <name>.mtx                           Matrix Market dumps
    <name>.json / .txt / .svg            check summaries, reference reports, support plots
    manifest.jsonl                       append-only, one entry per written artifact
"""

import json
import os
import tempfile
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse

OUTPUT_DIR = Path(os.environ.get("FEMWAVE_OUTPUT_DIR", "femwave-out"))
MANIFEST_NAME = "manifest.jsonl"

CSV_HEADER = "J,kappa,lambda_min,lambda_max,iters"


def _now_iso():
    return datetime.now(timezone.utc).isoformat()


def resolve_output(path) -> Path:
    """Absolute paths as given, relative ones under OUTPUT_DIR."""
    path = Path(path)
    return path if path.is_absolute() else OUTPUT_DIR / path


# --- Atomic writes ---

def _atomic_write(path, write, mode="w"):
    """Run write(f) on a temp file next to path, then rename it over path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=str(path.parent), suffix=path.suffix or ".tmp")
    try:
        kwargs = {} if "b" in mode else {"encoding": "utf-8", "newline": ""}
        with os.fdopen(fd, mode, **kwargs) as f:
            write(f)
        os.replace(tmp_path, str(path))
    except Exception:
        os.unlink(tmp_path)
        raise
    return path


def write_text(path, text) -> Path:
    path = _atomic_write(resolve_output(path), lambda f: f.write(text))
    record("text", path)
    return path


def write_json(path, obj) -> Path:
    def dump(f):
        json.dump(obj, f, indent=2)
        f.write("\n")

    path = _atomic_write(resolve_output(path), dump)
    record("json", path)
    return path


# --- Condition tables ---

def format_row(entry) -> str:
    """One CSV row; kappa to the two digits the published tables print."""
    return (f"{entry.J},{entry.kappa:.2g},{entry.lambda_min:.8g},"
            f"{entry.lambda_max:.8g},{entry.iterations}")


def format_csv(report) -> str:
    return "\n".join([CSV_HEADER] + [format_row(e) for e in report.entries]) + "\n"


def write_csv(path, report) -> Path:
    path = _atomic_write(resolve_output(path), lambda f: f.write(format_csv(report)))
    record("csv", path, norm=report.norm_tag, levels=len(report.entries) - 1)
    return path


# --- Matrix Market ---

def write_matrix_market(path, matrix, comment="") -> Path:
    """Dump a sparse or dense matrix through scipy.io.mmwrite."""
    if not scipy.sparse.issparse(matrix):
        matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    path = _atomic_write(resolve_output(path),
                         lambda f: scipy.io.mmwrite(f, matrix, comment=comment), mode="wb")
    record("matrix_market", path, shape=list(matrix.shape))
    return path


def read_matrix_market(path):
    return scipy.io.mmread(str(resolve_output(path)))


# --- Manifest ---

def _manifest_path():
    return OUTPUT_DIR / MANIFEST_NAME


def record(kind, path, **meta):
    """Append a manifest entry. Returns the entry dict."""
    entry = {"kind": kind, "path": str(path), "written_at": _now_iso(), **meta}
    manifest = _manifest_path()
    manifest.parent.mkdir(parents=True, exist_ok=True)
    with open(manifest, "a", encoding="utf-8") as f:
        f.write(json.dumps(entry, separators=(",", ":")) + "\n")
    return entry


def read_manifest():
    """All manifest entries; empty list if missing, corrupt lines skipped."""
    manifest = _manifest_path()
    if not manifest.exists():
        return []
    entries = []
    with open(manifest, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                try:
                    entries.append(json.loads(line))
                except json.JSONDecodeError:
                    continue
    return entries
