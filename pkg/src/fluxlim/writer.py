"""Artifact output: CSV, JSON, JSON lines, SVG and the manifest.

All files of a run go through one :class:`ArtifactWriter`. Contents are
buffered in memory and written only by :meth:`ArtifactWriter.commit`, so a
run that fails validation or the solver leaves no partial output. Numbers are
formatted with ``repr`` (shortest round-trip form), which keeps repeated runs
byte-identical.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from pathlib import Path

import numpy as np

from .errors import ValidationError


def _plain(o):
    if isinstance(o, dict):
        return {str(k): _plain(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_plain(v) for v in o]
    if isinstance(o, np.ndarray):
        return _plain(o.tolist())
    if isinstance(o, np.generic):
        return _plain(o.item())
    if isinstance(o, float) and not math.isfinite(o):
        return None if math.isnan(o) else ("inf" if o > 0 else "-inf")
    return o


def to_json_text(obj) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n"


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


# ----------------------------------------------------------------------- SVG

def _ticks(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10.0 ** math.floor(math.log10(raw))
    step = min((s * mag for s in (1, 2, 5, 10) if s * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    return [start + i * step for i in range(int((hi - start) / step + 1e-9) + 1)]


def svg_lines(series, title="", xlabel="", ylabel="", logx=False, logy=False,
              width=640, height=400) -> str:
    """Minimal line plot.

    ``series`` is a list of ``(label, x, y)``. Non-finite points are skipped;
    log axes drop non-positive values.
    """
    colors = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")
    tx = (lambda v: math.log10(v)) if logx else (lambda v: v)
    ty = (lambda v: math.log10(v)) if logy else (lambda v: v)
    pts = []
    for label, x, y in series:
        p = [(tx(a), ty(b)) for a, b in zip(np.asarray(x, float), np.asarray(y, float))
             if math.isfinite(a) and math.isfinite(b) and (a > 0 or not logx) and (b > 0 or not logy)]
        pts.append((label, p))
    allp = [q for _, p in pts for q in p] or [(0.0, 0.0), (1.0, 1.0)]
    x0, x1 = min(q[0] for q in allp), max(q[0] for q in allp)
    y0, y1 = min(q[1] for q in allp), max(q[1] for q in allp)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    L, R, T, B = 70, 20, 36, 50
    W, H = width - L - R, height - T - B

    def sx(v):
        return L + (v - x0) / (x1 - x0) * W

    def sy(v):
        return T + H - (v - y0) / (y1 - y0) * H

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
           f'<rect x="{L}" y="{T}" width="{W}" height="{H}" fill="none" stroke="#000"/>']
    if title:
        out.append(f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{_esc(title)}</text>')
    for v in _ticks(x0, x1):
        lab = f"1e{v:g}" if logx else f"{v:g}"
        out.append(f'<line x1="{sx(v):.2f}" y1="{T + H}" x2="{sx(v):.2f}" y2="{T + H + 5}" stroke="#000"/>')
        out.append(f'<text x="{sx(v):.2f}" y="{T + H + 18}" text-anchor="middle">{lab}</text>')
    for v in _ticks(y0, y1):
        lab = f"1e{v:g}" if logy else f"{v:g}"
        out.append(f'<line x1="{L - 5}" y1="{sy(v):.2f}" x2="{L}" y2="{sy(v):.2f}" stroke="#000"/>')
        out.append(f'<text x="{L - 8}" y="{sy(v) + 4:.2f}" text-anchor="end">{lab}</text>')
    if xlabel:
        out.append(f'<text x="{L + W / 2:.1f}" y="{height - 10}" text-anchor="middle">{_esc(xlabel)}</text>')
    if ylabel:
        out.append(f'<text x="16" y="{T + H / 2:.1f}" text-anchor="middle" '
                   f'transform="rotate(-90 16 {T + H / 2:.1f})">{_esc(ylabel)}</text>')
    for i, (label, p) in enumerate(pts):
        col = colors[i % len(colors)]
        if p:
            d = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in p)
            out.append(f'<polyline fill="none" stroke="{col}" stroke-width="1.5" points="{d}"/>')
        if label:
            out.append(f'<text x="{L + W - 6}" y="{T + 16 + 14 * i}" text-anchor="end" fill="{col}">{_esc(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s) -> str:
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


# -------------------------------------------------------------------- writer

def check_writable(root: Path) -> None:
    """Fail early if ``root`` cannot be created or written."""
    p = Path(root).resolve()
    if p.exists() and not p.is_dir():
        raise ValidationError(f"output path {p} exists and is not a directory")
    probe = p
    while not probe.exists():
        probe = probe.parent
    if not os.access(probe, os.W_OK):
        raise ValidationError(f"output directory {p} is not writable")


class ArtifactWriter:
    """Collects named files and writes them with a manifest on commit."""

    def __init__(self, root, formats=("csv", "jsonl")):
        self.root = Path(root)
        self.formats = tuple(formats)
        self._files: dict[str, bytes] = {}

    def _add(self, name: str, text: str):
        if name in self._files or name == "manifest.json":
            raise ValidationError(f"duplicate output file {name!r}")
        self._files[name] = text.encode("utf-8")

    def csv(self, name, header, rows, force=False):
        if force or "csv" in self.formats:
            self._add(name, csv_text(header, rows))

    def json(self, name, obj):
        self._add(name, to_json_text(obj))

    def jsonl(self, name, rows):
        if "jsonl" in self.formats:
            self._add(name, "".join(json.dumps(_plain(r), sort_keys=True) + "\n" for r in rows))

    def svg(self, name, *args, **kw):
        if "svg" in self.formats:
            self._add(name, svg_lines(*args, **kw))

    @property
    def names(self):
        return sorted(self._files)

    def text(self, name) -> str:
        return self._files[name].decode("utf-8")

    def commit(self) -> Path:
        self.root.mkdir(parents=True, exist_ok=True)
        entries = []
        for name in self.names:
            data = self._files[name]
            (self.root / name).write_bytes(data)
            entries.append({"file": name, "bytes": len(data),
                            "sha256": hashlib.sha256(data).hexdigest()})
        (self.root / "manifest.json").write_text(to_json_text({"files": entries}))
        return self.root / "manifest.json"
