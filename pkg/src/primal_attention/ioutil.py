"""Atomic file writing helpers: write to a sibling temp file, then rename."""

from __future__ import annotations

import json
import os
import tempfile


def ensure_dir(path) -> str:
    os.makedirs(path, exist_ok=True)
    return str(path)


def atomic_write_text(path, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_json(path, payload) -> None:
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def atomic_write_csv(path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_format_cell(cell) for cell in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def _format_cell(cell) -> str:
    if isinstance(cell, float):
        return f"{cell:.17g}"
    return str(cell)
