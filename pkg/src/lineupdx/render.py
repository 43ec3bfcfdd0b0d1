"""Deterministic SVG rendering for lineups.

Panels are residual-vs-fitted scatterplots stripped of anything that
could bias a reader: shared axis ranges across the whole lineup, a
single red reference line at zero, the panel number, and nothing else.
No tick labels, no captions, no embedded metadata.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PANEL_WIDTH = 180
PANEL_HEIGHT = 140
GRID_COLUMNS = 5
GAP = 6
MARGIN = 8
POINT_RADIUS = 2.0
PAD_FRACTION = 0.05

_SVG_NS = "http://www.w3.org/2000/svg"


@dataclass(frozen=True)
class PanelRendering:
    svg: str
    width: int
    height: int
    panel_index: int


@dataclass(frozen=True)
class LineupRendering:
    svg: str
    width: int
    height: int
    panels: tuple


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _padded(lo: float, hi: float) -> tuple[float, float]:
    if hi <= lo:
        lo, hi = lo - 0.5, hi + 0.5
    span = hi - lo
    return lo - PAD_FRACTION * span, hi + PAD_FRACTION * span


def shared_ranges(panels) -> tuple[tuple[float, float], tuple[float, float]]:
    """Union of all panels' ranges, 5% padding per side, zero kept visible."""
    x_lo = min(float(np.min(p.fitted)) for p in panels)
    x_hi = max(float(np.max(p.fitted)) for p in panels)
    y_lo = min(float(np.min(p.residuals)) for p in panels)
    y_hi = max(float(np.max(p.residuals)) for p in panels)
    y_lo = min(y_lo, 0.0)
    y_hi = max(y_hi, 0.0)
    return _padded(x_lo, x_hi), _padded(y_lo, y_hi)


def _panel_body(fitted, residuals, panel_index, x_range, y_range) -> str:
    (x_lo, x_hi), (y_lo, y_hi) = x_range, y_range
    sx = PANEL_WIDTH / (x_hi - x_lo)
    sy = PANEL_HEIGHT / (y_hi - y_lo)
    zero_y = (y_hi - 0.0) * sy
    parts = [
        f'<rect class="frame" x="0.5" y="0.5" width="{PANEL_WIDTH - 1}" '
        f'height="{PANEL_HEIGHT - 1}" fill="none" stroke="#999999"/>',
        f'<line class="zeroline" x1="1" y1="{_fmt(zero_y)}" '
        f'x2="{PANEL_WIDTH - 1}" y2="{_fmt(zero_y)}" stroke="#cc2222" '
        f'stroke-width="1"/>',
    ]
    for fv, rv in zip(fitted, residuals):
        cx = (float(fv) - x_lo) * sx
        cy = (y_hi - float(rv)) * sy
        parts.append(
            f'<circle cx="{_fmt(cx)}" cy="{_fmt(cy)}" r="{POINT_RADIUS}" '
            f'fill="#333333" fill-opacity="0.7"/>'
        )
    parts.append(
        f'<text x="5" y="14" font-family="sans-serif" font-size="11" '
        f'fill="#555555">{panel_index}</text>'
    )
    return "\n".join(parts)


def render_panel(panel, panel_index, x_range, y_range) -> PanelRendering:
    body = _panel_body(panel.fitted, panel.residuals, panel_index, x_range, y_range)
    svg = (
        f'<svg xmlns="{_SVG_NS}" width="{PANEL_WIDTH}" height="{PANEL_HEIGHT}" '
        f'viewBox="0 0 {PANEL_WIDTH} {PANEL_HEIGHT}">\n{body}\n</svg>\n'
    )
    return PanelRendering(
        svg=svg, width=PANEL_WIDTH, height=PANEL_HEIGHT, panel_index=panel_index
    )


def render_lineup(bundle) -> LineupRendering:
    """Render the full grid plus standalone per-panel documents."""
    x_range, y_range = shared_ranges(bundle.panels)
    columns = GRID_COLUMNS if bundle.m % GRID_COLUMNS == 0 else min(bundle.m, GRID_COLUMNS)
    rows = -(-bundle.m // columns)
    width = 2 * MARGIN + columns * PANEL_WIDTH + (columns - 1) * GAP
    height = 2 * MARGIN + rows * PANEL_HEIGHT + (rows - 1) * GAP

    panels = []
    groups = []
    for idx, panel in enumerate(bundle.panels, start=1):
        panels.append(render_panel(panel, idx, x_range, y_range))
        row, col = divmod(idx - 1, columns)
        tx = MARGIN + col * (PANEL_WIDTH + GAP)
        ty = MARGIN + row * (PANEL_HEIGHT + GAP)
        body = _panel_body(panel.fitted, panel.residuals, idx, x_range, y_range)
        groups.append(
            f'<g class="panel" transform="translate({tx},{ty})">\n{body}\n</g>'
        )

    joined = "\n".join(groups)
    svg = (
        f'<svg xmlns="{_SVG_NS}" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">\n'
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>\n'
        f"{joined}\n</svg>\n"
    )
    return LineupRendering(svg=svg, width=width, height=height, panels=tuple(panels))
