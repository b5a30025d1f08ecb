"""Deterministic artifact writers: CSV, JSON and a minimal SVG line plot."""

from __future__ import annotations

import csv
import json
import math
from numbers import Integral, Real
from pathlib import Path

import numpy as np

from .errors import SchemaError


def format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, Integral):
        return str(int(value))
    if isinstance(value, Real):
        x = float(value)
        if not math.isfinite(x):
            raise SchemaError(f"non-finite value {x!r} is not allowed")
        return "%.17g" % x
    if isinstance(value, str):
        return value
    raise SchemaError(f"unsupported cell type {type(value).__name__}")


def emit_csv(rows, schema, path) -> Path:
    """Write ``rows`` (mappings) with a header row exactly equal to ``schema``."""
    schema = list(schema)
    if len(set(schema)) != len(schema):
        raise SchemaError("schema has duplicate columns")
    lines = []
    for i, row in enumerate(rows):
        keys = set(row)
        if keys != set(schema):
            missing = sorted(set(schema) - keys)
            extra = sorted(keys - set(schema))
            raise SchemaError(f"row {i} does not match schema (missing {missing}, unexpected {extra})")
        lines.append([format_cell(row[c]) for c in schema])
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(schema)
        writer.writerows(lines)
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, Integral):
        return int(obj)
    if isinstance(obj, Real):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def write_json(obj, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n")
    return path


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def line_plot_svg(series: dict, path, *, title: str = "", xlabel: str = "T", ylabel: str = "", log_x: bool = False) -> Path:
    """Plot named ``(x, y)`` series as polylines; deterministic output."""
    W, H, pad = 640, 400, 50
    pts = [(np.asarray(x, float), np.asarray(y, float)) for x, y in series.values()]
    tx = (lambda v: np.log2(np.maximum(v, 1.0))) if log_x else (lambda v: v)
    xs = np.concatenate([tx(x) for x, _ in pts]) if pts else np.zeros(1)
    ys = np.concatenate([y for _, y in pts]) if pts else np.zeros(1)
    ys = ys[np.isfinite(ys)]
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = min(0.0, float(ys.min(initial=0.0))), float(ys.max(initial=1.0))
    x1 = x1 if x1 > x0 else x0 + 1.0
    y1 = y1 if y1 > y0 else y0 + 1.0

    def sx(v):
        return pad + (v - x0) / (x1 - x0) * (W - 2 * pad)

    def sy(v):
        return H - pad - (v - y0) / (y1 - y0) * (H - 2 * pad)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<line x1="{pad}" y1="{H - pad}" x2="{W - pad}" y2="{H - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{H - pad}" stroke="black"/>',
        f'<text x="{W / 2:.1f}" y="{pad / 2:.1f}" text-anchor="middle" font-size="14">{title}</text>',
        f'<text x="{W / 2:.1f}" y="{H - 10}" text-anchor="middle" font-size="12">{xlabel}</text>',
        f'<text x="12" y="{H / 2:.1f}" font-size="12" transform="rotate(-90 12 {H / 2:.1f})">{ylabel}</text>',
        f'<text x="{pad - 4}" y="{H - pad}" text-anchor="end" font-size="10">{y0:.3g}</text>',
        f'<text x="{pad - 4}" y="{pad}" text-anchor="end" font-size="10">{y1:.3g}</text>',
    ]
    for k, (name, (x, y)) in enumerate(zip(series, pts)):
        color = _COLORS[k % len(_COLORS)]
        keep = np.isfinite(y)
        coords = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(tx(x)[keep], y[keep]))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>')
        out.append(f'<text x="{W - pad - 140}" y="{pad + 16 * (k + 1)}" font-size="11" fill="{color}">{name}</text>')
    out.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(out) + "\n")
    return path
