"""Minimal SVG emitters: tongue heatmap and a 24 h stimulation rose."""
from __future__ import annotations

import math
from datetime import datetime, timedelta
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from .scheduler import DeviceMode, TimelineEntry
from .tongues import TongueGrid, classify_array, default_tolerance

_LOCK_COLOURS = ["#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"]


def _grey(v: float) -> str:
    g = int(round(255 * (1.0 - min(max(v, 0.0), 1.0))))
    return f"#{g:02x}{g:02x}{g:02x}"


def tongue_svg(grid: TongueGrid, max_q: int = 6, tol: float | None = None, cell_px: float = 3.0) -> str:
    """Winding heatmap (grey scale, clipped to [0, max]) with outlines of p:q regions, q <= max_q."""
    if grid.winding is None:
        raise ValueError("grid has not been swept")
    tol = default_tolerance(grid.sim.n_pulses) if tol is None else tol
    w = np.asarray(grid.winding)
    ny, nx = w.shape
    P, Q = classify_array(w, max_q, tol)
    label = np.where(Q > 0, P * (max_q + 1) + Q, -1)
    wmax = float(w.max()) if w.size and w.max() > 0 else 1.0
    ml, mt, mb = 60.0, 20.0, 50.0
    width, height = ml + nx * cell_px + 20, mt + ny * cell_px + mb

    def xy(row, col):  # row 0 is the lowest y value, drawn at the bottom
        return ml + col * cell_px, mt + (ny - 1 - row) * cell_px

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" height="{height:.0f}">',
           '<g shape-rendering="crispEdges">']
    for r in range(ny):
        for c in range(nx):
            x, y = xy(r, c)
            out.append(f'<rect x="{x:.2f}" y="{y:.2f}" width="{cell_px}" height="{cell_px}" '
                       f'fill="{_grey(w[r, c] / wmax)}"/>')
    out.append("</g>")

    locks = sorted({int(v) for v in np.unique(label) if v >= 0})
    colour = {v: _LOCK_COLOURS[i % len(_LOCK_COLOURS)] for i, v in enumerate(locks)}
    edges = []
    for r in range(ny):
        for c in range(nx):
            v = label[r, c]
            if v < 0:
                continue
            x, y = xy(r, c)
            s = cell_px
            if c == 0 or label[r, c - 1] != v:
                edges.append((x, y, x, y + s, v))
            if c == nx - 1 or label[r, c + 1] != v:
                edges.append((x + s, y, x + s, y + s, v))
            if r == ny - 1 or label[r + 1, c] != v:
                edges.append((x, y, x + s, y, v))
            if r == 0 or label[r - 1, c] != v:
                edges.append((x, y + s, x + s, y + s, v))
    out.append('<g stroke-width="1" fill="none">')
    for x0, y0, x1, y1, v in edges:
        out.append(f'<line x1="{x0:.2f}" y1="{y0:.2f}" x2="{x1:.2f}" y2="{y1:.2f}" stroke="{colour[v]}"/>')
    out.append("</g>")

    xa, ya = grid.x_axis, grid.y_axis
    bottom = mt + ny * cell_px
    xname = "stimulation frequency fs (Hz)" if grid.mode.value == "fs_vs_amplitude" else "natural frequency f0 (Hz)"
    yname = "coupling I" if grid.mode.value == "fs_vs_amplitude" else "equivalent amplitude"
    out += [
        f'<text x="{ml}" y="{bottom + 15:.0f}" font-size="10">{xa.min:g}</text>',
        f'<text x="{ml + nx * cell_px:.0f}" y="{bottom + 15:.0f}" font-size="10" text-anchor="end">{xa.max:g}</text>',
        f'<text x="{ml + nx * cell_px / 2:.0f}" y="{bottom + 35:.0f}" font-size="11" '
        f'text-anchor="middle">{escape(xname)}</text>',
        f'<text x="{ml - 5}" y="{bottom:.0f}" font-size="10" text-anchor="end">{ya.min:g}</text>',
        f'<text x="{ml - 5}" y="{mt + 8:.0f}" font-size="10" text-anchor="end">{ya.max:g}</text>',
        f'<text x="12" y="{mt + ny * cell_px / 2:.0f}" font-size="11" text-anchor="middle" '
        f'transform="rotate(-90 12 {mt + ny * cell_px / 2:.0f})">{escape(yname)}</text>',
    ]
    for i, v in enumerate(locks):
        p, q = divmod(v, max_q + 1)
        out.append(f'<text x="{ml + 5 + 40 * i}" y="{height - 3:.0f}" font-size="10" fill="{colour[v]}">{p}:{q}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


_RINGS = {DeviceMode.BASAL_DAY: 0, DeviceMode.BASAL_NIGHT: 0, DeviceMode.FALLBACK: 0,
          DeviceMode.SLEEP: 1, DeviceMode.BOOST: 2}
_MODE_COLOURS = {DeviceMode.BASAL_DAY: "#fdd835", DeviceMode.BASAL_NIGHT: "#3949ab", DeviceMode.SLEEP: "#00897b",
                 DeviceMode.BOOST: "#e53935", DeviceMode.FALLBACK: "#757575"}


def _arc_path(cx, cy, r0, r1, a0, a1) -> str:
    # angles in radians, clockwise from 12 o'clock
    def pt(r, a):
        return cx + r * math.sin(a), cy - r * math.cos(a)
    large = 1 if a1 - a0 > math.pi else 0
    x0, y0 = pt(r1, a0)
    x1, y1 = pt(r1, a1)
    x2, y2 = pt(r0, a1)
    x3, y3 = pt(r0, a0)
    return (f"M{x0:.2f},{y0:.2f} A{r1},{r1} 0 {large} 1 {x1:.2f},{y1:.2f} "
            f"L{x2:.2f},{y2:.2f} A{r0},{r0} 0 {large} 0 {x3:.2f},{y3:.2f} Z")


def rose_svg(timeline: Sequence[TimelineEntry], end: datetime, size: float = 360.0) -> str:
    """Timeline folded onto a 24 h clock face.

    Inner ring: basal programs; middle ring: sleep mode; outer ring: boost.
    Midnight is at the top. Ring opacity scales with program amplitude.
    """
    cx = cy = size / 2
    radii = [(0.30, 0.48), (0.50, 0.68), (0.70, 0.88)]
    amp_max = max((e.program.amplitude for e in timeline), default=1.0) or 1.0
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size:.0f}" height="{size:.0f}">']
    for r0, r1 in radii:
        out.append(f'<circle cx="{cx}" cy="{cy}" r="{r1 * size / 2:.1f}" fill="none" stroke="#ddd"/>')
    for i, e in enumerate(timeline):
        t1 = timeline[i + 1].timestamp if i + 1 < len(timeline) else end
        t0 = e.timestamp
        ring = _RINGS[e.mode]
        r0, r1 = (f * size / 2 for f in radii[ring])
        opacity = 0.25 + 0.75 * e.program.amplitude / amp_max
        while t0 < t1:  # split at midnight so each arc stays within one turn
            midnight = t0.replace(hour=0, minute=0, second=0, microsecond=0) + timedelta(days=1)
            seg_end = min(t1, midnight)
            s0 = (t0 - midnight + timedelta(days=1)).total_seconds()
            s1 = (seg_end - midnight + timedelta(days=1)).total_seconds()
            a0, a1 = 2 * math.pi * s0 / 86400, 2 * math.pi * s1 / 86400
            if a1 - a0 >= 2 * math.pi - 1e-9:
                a1 = a0 + 2 * math.pi - 1e-4
            out.append(f'<path d="{_arc_path(cx, cy, r0, r1, a0, a1)}" fill="{_MODE_COLOURS[e.mode]}" '
                       f'fill-opacity="{opacity:.2f}"><title>{escape(e.mode.value)} '
                       f'{e.program.amplitude:g} mA @ {e.program.frequency:g} Hz</title></path>')
            t0 = seg_end
    for h in range(0, 24, 3):
        a = 2 * math.pi * h / 24
        x, y = cx + 0.95 * size / 2 * math.sin(a), cy - 0.95 * size / 2 * math.cos(a)
        out.append(f'<text x="{x:.1f}" y="{y + 4:.1f}" font-size="10" text-anchor="middle">{h:02d}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
