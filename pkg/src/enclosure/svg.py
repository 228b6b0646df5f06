"""Static SVG 1.1 overlay of the domain, true inclusions, support lines and hull."""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .reconstruct import HullEstimate

SIZE = 600
PAD = 40


def _segment_in_box(omega, h, bbox):
    """Portion of the line x . omega = h inside the box, or None."""
    x0, x1, y0, y1 = bbox
    w = np.asarray(omega, dtype=float)
    t = np.array([-w[1], w[0]])
    p0 = h * w
    ts = []
    for k, lo, hi in ((0, x0, x1), (1, y0, y1)):
        if abs(t[k]) < 1e-15:
            if not lo <= p0[k] <= hi:
                return None
            continue
        a, b = (lo - p0[k]) / t[k], (hi - p0[k]) / t[k]
        ts.append((min(a, b), max(a, b)))
    lo = max(a for a, _ in ts)
    hi = min(b for _, b in ts)
    if lo >= hi:
        return None
    return p0 + lo * t, p0 + hi * t


def render_svg(bbox, hull: HullEstimate | None = None, inclusions=(), domain=None, legend: dict | None = None) -> str:
    x0, x1, y0, y1 = bbox
    scale = (SIZE - 2 * PAD) / max(x1 - x0, y1 - y0)

    def px(p):
        return PAD + (p[0] - x0) * scale, SIZE - PAD - (p[1] - y0) * scale

    def poly(pts):
        return " ".join(f"{a:.3f},{b:.3f}" for a, b in (px(p) for p in pts))

    out = ['<?xml version="1.0" encoding="UTF-8"?>',
           f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{SIZE}" height="{SIZE + 80}" '
           f'viewBox="0 0 {SIZE} {SIZE + 80}">',
           f'<rect x="0" y="0" width="{SIZE}" height="{SIZE + 80}" fill="white"/>']
    if domain is not None and domain.shape == "disk":
        cx, cy = px(domain.center)
        out.append(f'<circle cx="{cx:.3f}" cy="{cy:.3f}" r="{domain.radius * scale:.3f}" fill="none" '
                   f'stroke="black" stroke-width="2"/>')
    else:
        out.append(f'<polygon points="{poly([(x0, y0), (x1, y0), (x1, y1), (x0, y1)])}" fill="none" '
                   f'stroke="black" stroke-width="2"/>')
    for inc in inclusions:
        if inc.kind == "disk":
            cx, cy = px(inc.center)
            out.append(f'<circle cx="{cx:.3f}" cy="{cy:.3f}" r="{inc.radius * scale:.3f}" fill="#f4a582" '
                       f'fill-opacity="0.6" stroke="#b2182b" stroke-width="1.5"/>')
        else:
            out.append(f'<polygon points="{poly(inc.vertices)}" fill="#f4a582" fill-opacity="0.6" '
                       f'stroke="#b2182b" stroke-width="1.5"/>')
    if hull is not None:
        for w, h, ok in zip(hull.omegas, hull.h, hull.valid):
            if not ok:
                continue
            seg = _segment_in_box(w, h, bbox)
            if seg is not None:
                (a, b), (c, d) = px(seg[0]), px(seg[1])
                out.append(f'<line x1="{a:.3f}" y1="{b:.3f}" x2="{c:.3f}" y2="{d:.3f}" stroke="#999999" '
                           f'stroke-width="1" stroke-dasharray="4,3"/>')
        if len(hull.vertices):
            out.append(f'<polygon points="{poly(hull.vertices)}" fill="none" stroke="#2166ac" stroke-width="2.5"/>')
    legend = legend or {}
    items = [("true inclusion", "#b2182b"), ("estimated hull", "#2166ac"), ("support lines", "#999999")]
    y = SIZE + 10
    for i, (label, color) in enumerate(items):
        out.append(f'<rect x="{PAD + 170 * i}" y="{y}" width="14" height="14" fill="{color}"/>')
        out.append(f'<text x="{PAD + 170 * i + 20}" y="{y + 12}" font-family="sans-serif" font-size="13">'
                   f'{escape(label)}</text>')
    text = "  ".join(f"{k} = {v}" for k, v in legend.items())
    out.append(f'<text x="{PAD}" y="{y + 45}" font-family="sans-serif" font-size="13">{escape(text)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
