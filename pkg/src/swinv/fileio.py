"""Deterministic JSON/CSV output with atomic writes."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .system import SwitchedAffineSystem, validate_system

SCHEMA = "swinv/1"


def _format_float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def _plain(obj: Any) -> Any:
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _encode(obj: Any, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return json.dumps(obj)
    if isinstance(obj, float):
        return _format_float(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _encode(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj: Any, indent: int = 2) -> str:
    """JSON text with every float written to 17 significant digits."""
    return _encode(_plain(obj), indent, 0) + "\n"


def atomic_write_text(path: str | Path, text: str) -> Path:
    """Writes ``text`` via a temporary file and rename so readers never see partial output."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_json(path: str | Path, obj: Any) -> Path:
    return atomic_write_text(path, dumps(obj))


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_format_float(v) if isinstance(v, float) else v for v in _plain(list(row))])
    return atomic_write_text(path, buf.getvalue())


def read_json(path: str | Path) -> Any:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def load_system(path: str | Path) -> SwitchedAffineSystem:
    """Reads a system JSON file ``{"modes": [{"A": ..., "b": ...}, ...]}``."""
    return validate_system(read_json(path))


def save_system(path: str | Path, system: SwitchedAffineSystem) -> Path:
    return write_json(path, system.to_dict())


def write_svg(path: str | Path, polylines: Sequence[tuple[str, np.ndarray]], size: int = 600) -> Path:
    """Plain SVG drawing of labelled 2-D polylines, y axis pointing up."""
    pts = np.vstack([np.asarray(p, dtype=float) for _, p in polylines]) if polylines else np.zeros((1, 2))
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = float(np.max(hi - lo)) or 1.0
    scale = 0.9 * size / span
    palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    labels = sorted({name for name, _ in polylines})
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}">', f'<rect width="{size}" height="{size}" fill="white"/>']
    for name, p in polylines:
        p = np.asarray(p, dtype=float)
        xs = 0.05 * size + (p[:, 0] - lo[0]) * scale
        ys = size - (0.05 * size + (p[:, 1] - lo[1]) * scale)
        coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
        color = palette[labels.index(name) % len(palette)]
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}">'
                   f"<title>{name}</title></polyline>")
    out.append("</svg>")
    return atomic_write_text(path, "\n".join(out) + "\n")


def polylines_rows(polylines: Sequence[tuple[str, np.ndarray]]) -> list[list]:
    """CSV rows ``(set-id, x, y)``; each polyline keeps its point order."""
    return [[name, float(x), float(y)] for name, p in polylines for x, y in np.asarray(p, dtype=float)]
