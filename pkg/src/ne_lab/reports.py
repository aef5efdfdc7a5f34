"""Trajectory serialization: CSV rows, JSON summaries and an SVG line chart."""

from __future__ import annotations

import csv
import json
import math
import xml.etree.ElementTree as ET
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .seeker import TrajectoryLog

ERROR_COLUMNS = ("err_x", "err_psi", "err_xi", "err_xbar")
SVG_MAX_POINTS = 2000
_PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)


def fmt(value: float) -> str:
    """17 significant digits: enough for an exact float64 round trip."""
    return "%.17g" % value


def csv_header(labels: Sequence[str]) -> list[str]:
    return ["k", *(f"x_{lab}" for lab in labels), *ERROR_COLUMNS, "V"]


def _meta_lines(metadata: Mapping[str, Any]) -> list[str]:
    return [f"# {key}: {json.dumps(value, sort_keys=True)}" for key, value in metadata.items()]


def write_csv(path: str | Path, log: TrajectoryLog, labels: Sequence[str], metadata: Mapping[str, Any]) -> None:
    """One row per recorded iteration. Metadata goes first as ``#`` comment lines.

    Error and V cells are left empty when they were not computed.
    """
    rows = len(log.k)
    cols = {key: log.errors.get(key, []) for key in ERROR_COLUMNS}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in _meta_lines(metadata):
            fh.write(line + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(csv_header(labels))
        for r in range(rows):
            extra = [fmt(cols[key][r]) if r < len(cols[key]) else "" for key in ERROR_COLUMNS]
            extra.append(fmt(log.V[r]) if r < len(log.V) else "")
            writer.writerow([str(log.k[r]), *(fmt(v) for v in log.x[r]), *extra])


def read_csv(path: str | Path) -> tuple[dict[str, Any], list[str], np.ndarray, np.ndarray]:
    """Parse a trajectory CSV back into ``(metadata, header, k, x)``."""
    metadata: dict[str, Any] = {}
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("# "):
            key, _, value = line[2:].partition(": ")
            metadata[key] = json.loads(value)
        elif line:
            body.append(line)
    reader = csv.reader(body)
    header = next(reader)
    n_x = sum(1 for h in header if h.startswith("x_"))
    ks, xs = [], []
    for row in reader:
        ks.append(int(row[0]))
        xs.append([float(v) for v in row[1 : 1 + n_x]])
    return metadata, header, np.array(ks, dtype=int), np.array(xs, dtype=float).reshape(len(ks), n_x)


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(payload: Mapping[str, Any]) -> str:
    """Deterministic JSON text: sorted keys, non-finite floats as null."""
    return json.dumps(_jsonable(payload), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path: str | Path, payload: Mapping[str, Any]) -> None:
    Path(path).write_text(dumps(payload), encoding="utf-8")


# --- SVG --------------------------------------------------------------------


def _thin(k: np.ndarray, limit: int) -> np.ndarray:
    if k.size <= limit:
        return np.arange(k.size)
    idx = np.unique(np.linspace(0, k.size - 1, limit).round().astype(int))
    return idx


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 5, 10) if m * mag >= raw)
    start = math.ceil(lo / step) * step
    return [start + i * step for i in range(int((hi - start) / step + 1e-9) + 1)]


def render_svg(
    k: Sequence[int],
    x: np.ndarray,
    labels: Sequence[str],
    references: Iterable[float] = (),
    metadata: Mapping[str, Any] | None = None,
    title: str = "",
    width: int = 800,
    height: int = 500,
) -> str:
    """Line chart of every agent state against the iteration index.

    Each agent gets one ``polyline`` (class ``agent``); each reference value
    gets one dashed horizontal ``line`` (class ``reference``).
    """
    k = np.asarray(k, dtype=float)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    refs = [float(r) for r in references]
    left, right, top, bottom = 70, 110, 40, 50
    pw, ph = width - left - right, height - top - bottom

    finite = x[np.isfinite(x)]
    values = np.concatenate([finite, refs]) if refs else finite
    y_lo, y_hi = (float(values.min()), float(values.max())) if values.size else (0.0, 1.0)
    if y_hi - y_lo < 1e-12:
        y_lo, y_hi = y_lo - 1.0, y_hi + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad
    k_lo, k_hi = (float(k[0]), float(k[-1])) if k.size else (0.0, 1.0)
    if k_hi <= k_lo:
        k_hi = k_lo + 1.0

    def px(kv):
        return left + (kv - k_lo) / (k_hi - k_lo) * pw

    def py(yv):
        return top + (y_hi - yv) / (y_hi - y_lo) * ph

    svg = ET.Element(
        "svg",
        xmlns="http://www.w3.org/2000/svg",
        width=str(width),
        height=str(height),
        viewBox=f"0 0 {width} {height}",
    )
    if metadata:
        ET.SubElement(svg, "metadata").text = json.dumps(_jsonable(dict(metadata)), sort_keys=True)
    if title:
        ET.SubElement(svg, "title").text = title
        t = ET.SubElement(svg, "text", x=str(width / 2), y="22", attrib={"text-anchor": "middle", "font-size": "15"})
        t.text = title
    ET.SubElement(svg, "rect", x=str(left), y=str(top), width=str(pw), height=str(ph), fill="none", stroke="#333")

    axes = ET.SubElement(svg, "g", attrib={"font-size": "11", "fill": "#333"})
    for tv in _ticks(y_lo, y_hi):
        y = py(tv)
        ET.SubElement(axes, "line", x1=str(left - 4), y1=f"{y:.2f}", x2=str(left), y2=f"{y:.2f}", stroke="#333")
        lab = ET.SubElement(axes, "text", x=str(left - 7), y=f"{y + 4:.2f}", attrib={"text-anchor": "end"})
        lab.text = f"{tv:g}"
    for tv in _ticks(k_lo, k_hi):
        xx = px(tv)
        ET.SubElement(axes, "line", x1=f"{xx:.2f}", y1=str(top + ph), x2=f"{xx:.2f}", y2=str(top + ph + 4), stroke="#333")
        lab = ET.SubElement(axes, "text", x=f"{xx:.2f}", y=str(top + ph + 17), attrib={"text-anchor": "middle"})
        lab.text = f"{tv:g}"
    xl = ET.SubElement(axes, "text", x=str(left + pw / 2), y=str(height - 8), attrib={"text-anchor": "middle"})
    xl.text = "iteration k"

    ref_group = ET.SubElement(svg, "g", attrib={"class": "references"})
    for r in refs:
        y = f"{py(r):.2f}"
        ET.SubElement(
            ref_group,
            "line",
            attrib={
                "class": "reference",
                "x1": str(left),
                "x2": str(left + pw),
                "y1": y,
                "y2": y,
                "stroke": "#000",
                "stroke-width": "1",
                "stroke-dasharray": "6,4",
            },
        )

    idx = _thin(k, SVG_MAX_POINTS)
    lines = ET.SubElement(svg, "g", attrib={"class": "agents", "fill": "none", "stroke-width": "1.5"})
    legend = ET.SubElement(svg, "g", attrib={"font-size": "11"})
    for a, label in enumerate(labels):
        color = _PALETTE[a % len(_PALETTE)]
        col = x[idx, a]
        ok = np.isfinite(col)
        pts = " ".join(f"{px(kv):.2f},{py(yv):.2f}" for kv, yv in zip(k[idx][ok], col[ok]))
        ET.SubElement(lines, "polyline", attrib={"class": "agent", "data-agent": label, "stroke": color, "points": pts})
        ly = top + 10 + 15 * a
        ET.SubElement(legend, "line", x1=str(width - right + 10), y1=str(ly), x2=str(width - right + 30), y2=str(ly), stroke=color)
        lt = ET.SubElement(legend, "text", x=str(width - right + 35), y=str(ly + 4))
        lt.text = f"x_{label}"

    ET.indent(svg)
    return ET.tostring(svg, encoding="unicode", xml_declaration=False) + "\n"


def write_svg(path: str | Path, log: TrajectoryLog, labels: Sequence[str], references: Iterable[float], metadata, title=""):
    text = render_svg(log.k, log.x_array(), labels, references, metadata, title)
    Path(path).write_text('<?xml version="1.0" encoding="UTF-8"?>\n' + text, encoding="utf-8")
