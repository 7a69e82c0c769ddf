"""Report files: ``<name>.tsv`` data and a plain ``<name>.svg`` rendering."""
from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

_PALETTE = ("#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860")


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_tsv(path, header, rows) -> Path:
    path = Path(path)
    lines = ["\t".join(header)] + ["\t".join(_cell(v) for v in r) for r in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_tsv(path) -> tuple[list[str], list[list[str]]]:
    lines = Path(path).read_text().splitlines()
    return lines[0].split("\t"), [ln.split("\t") for ln in lines[1:]]


def svg_bars(title: str, labels, series: dict[str, list[float]], width: int = 640,
             height: int = 360) -> str:
    """Grouped bar chart; one colour per series."""
    labels = [str(x) for x in labels]
    names = list(series)
    vals = np.array([[float(v) for v in series[n]] for n in names]) if names else np.zeros((0, 0))
    finite = vals[np.isfinite(vals)] if vals.size else np.zeros(0)
    top = max(float(finite.max()) if finite.size else 1.0, 0.0)
    bot = min(float(finite.min()) if finite.size else 0.0, 0.0)
    span = (top - bot) or 1.0
    left, right, upper, lower = 60, 20, 40, 60
    pw, ph = width - left - right, height - upper - lower
    y0 = upper + ph * top / span
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
           f'<text x="{width / 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
           f'<line x1="{left}" y1="{y0:.1f}" x2="{left + pw}" y2="{y0:.1f}" stroke="black"/>']
    group = pw / max(len(labels), 1)
    bar = group * 0.8 / max(len(names), 1)
    for i, lab in enumerate(labels):
        gx = left + i * group + group * 0.1
        for k, name in enumerate(names):
            v = vals[k, i]
            if not np.isfinite(v):
                continue
            h = ph * abs(v) / span
            y = y0 - h if v >= 0 else y0
            out.append(f'<rect x="{gx + k * bar:.1f}" y="{y:.1f}" width="{bar:.1f}" height="{h:.1f}" '
                       f'fill="{_PALETTE[k % len(_PALETTE)]}"/>')
        out.append(f'<text x="{gx + group * 0.4:.1f}" y="{height - lower + 16}" text-anchor="middle" '
                   f'font-size="10">{escape(lab)}</text>')
    for k, name in enumerate(names):
        out.append(f'<text x="{left + 10 + 120 * k}" y="{height - 12}" font-size="11" '
                   f'fill="{_PALETTE[k % len(_PALETTE)]}">{escape(name)}</text>')
    out.append(f'<text x="{left - 6}" y="{upper + 4}" text-anchor="end" font-size="10">{top:.3g}</text>')
    out.append(f'<text x="{left - 6}" y="{upper + ph}" text-anchor="end" font-size="10">{bot:.3g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_report(out_dir, name: str, header, rows, title: str, labels=None,
                 series: dict[str, list[float]] | None = None) -> tuple[Path, Path]:
    """Write ``<name>.tsv`` and ``<name>.svg`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tsv = write_tsv(out / f"{name}.tsv", header, rows)
    if series is None:
        labels = [r[0] for r in rows]
        series = {header[1]: [float(r[1]) for r in rows]} if len(header) > 1 else {}
    svg = out / f"{name}.svg"
    svg.write_text(svg_bars(title, labels, series))
    return tsv, svg
