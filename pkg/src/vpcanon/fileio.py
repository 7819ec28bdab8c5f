"""Shared output helpers: fixed float precision and atomic file writes."""

from __future__ import annotations

import json
import math
import os
import tempfile
from pathlib import Path
from typing import Any

SIG_DIGITS = 9


def fmt_float(x: float) -> str:
    """Format a float with 9 significant digits (the package-wide convention)."""
    return format(float(x), f".{SIG_DIGITS}g")


def round_sig(x: float) -> float:
    """Round a float to 9 significant digits.

    ``repr`` of the result is never longer than 9 digits, so JSON emitted from
    rounded values is stable byte for byte.
    """
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"cannot serialize non-finite value {x}")
    return float(fmt_float(x))


def json_ready(obj: Any) -> Any:
    """Recursively round floats so ``json.dumps`` output is deterministic."""
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return obj
    if isinstance(obj, float):
        return round_sig(obj)
    if isinstance(obj, dict):
        return {k: json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_ready(v) for v in obj]
    if hasattr(obj, "item"):  # numpy scalar
        return json_ready(obj.item())
    raise TypeError(f"unsupported value for JSON output: {type(obj).__name__}")


def dumps_json(obj: Any) -> str:
    return json.dumps(json_ready(obj), indent=2) + "\n"


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    """Write ``text`` to ``path`` through a temp file and an atomic rename.

    A failure part-way leaves no file at ``path``.
    """
    path = Path(path)
    parent = path.parent if str(path.parent) else Path(".")
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise
