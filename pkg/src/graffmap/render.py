"""Choropleth rendering: a deterministic SVG plus matplotlib report figures.

The SVG is plain generated text (fixed palette, two-decimal coordinates, no
timestamps), so full-pipeline runs can be compared byte for byte. The PNG
figures are matplotlib output for human consumption and are not expected to
be byte-stable across library versions.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
from matplotlib.patches import Polygon as MplPolygon

from .acquisition import CoverageReport
from .geo import RegionPolygon, make_projection, GeoPoint
from .metrics import LocationScore, RegionAggregate

# Light-to-dark sequential palette indexed by class_index (max 9 classes).
PALETTE = (
    "#ffffcc",
    "#ffeda0",
    "#fed976",
    "#feb24c",
    "#fd8d3c",
    "#fc4e2a",
    "#e31a1c",
    "#bd0026",
    "#800026",
)

NO_DATA_FILL = "#cccccc"

_SVG_SIZE = 800.0
_SVG_MARGIN = 24.0


def _shared_projection(districts: Sequence[RegionPolygon]):
    lats = [p.lat for d in districts for p in d.exterior]
    lons = [p.lon for d in districts for p in d.exterior]
    origin = GeoPoint((min(lats) + max(lats)) / 2.0, (min(lons) + max(lons)) / 2.0)
    return make_projection(origin)


def _district_xy(districts: Sequence[RegionPolygon]):
    proj = _shared_projection(districts)
    shapes = []
    for d in districts:
        rings = [[proj.to_xy(p) for p in d.exterior]] + [[proj.to_xy(p) for p in h] for h in d.holes]
        shapes.append((d.id, rings))
    xs = [x for _, rings in shapes for ring in rings for x, _ in ring]
    ys = [y for _, rings in shapes for ring in rings for _, y in ring]
    return shapes, (min(xs), min(ys), max(xs), max(ys))


def render_choropleth_svg(
    districts: Sequence[RegionPolygon],
    aggregates: Sequence[RegionAggregate],
) -> str:
    """One path per district part, filled by class, id in data-region."""
    if not districts:
        raise ValueError("no districts to render")
    agg_by_id = {a.region_id: a for a in aggregates}
    shapes, (xmin, ymin, xmax, ymax) = _district_xy(districts)
    span = max(xmax - xmin, ymax - ymin) or 1.0
    scale = (_SVG_SIZE - 2 * _SVG_MARGIN) / span

    def tx(x: float) -> float:
        return _SVG_MARGIN + (x - xmin) * scale

    def ty(y: float) -> float:
        return _SVG_SIZE - _SVG_MARGIN - (y - ymin) * scale  # north up

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SVG_SIZE:g}" height="{_SVG_SIZE:g}" '
        f'viewBox="0 0 {_SVG_SIZE:g} {_SVG_SIZE:g}">',
    ]
    for rid, rings in shapes:
        agg = agg_by_id.get(rid)
        fill = PALETTE[agg.class_index] if agg is not None else NO_DATA_FILL
        parts = []
        for ring in rings:
            coords = " L ".join(f"{tx(x):.2f},{ty(y):.2f}" for x, y in ring)
            parts.append(f"M {coords} Z")
        d = " ".join(parts)
        lines.append(
            f'  <path d="{d}" fill="{fill}" stroke="#333333" stroke-width="1" '
            f'fill-rule="evenodd" data-region="{rid}"/>'
        )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def write_choropleth_svg(
    districts: Sequence[RegionPolygon],
    aggregates: Sequence[RegionAggregate],
    path: str | Path,
) -> None:
    Path(path).write_text(render_choropleth_svg(districts, aggregates), encoding="utf-8")


# ---------------------------------------------------------------------------
# Matplotlib report figures
# ---------------------------------------------------------------------------


def save_choropleth_png(
    districts: Sequence[RegionPolygon],
    aggregates: Sequence[RegionAggregate],
    path: str | Path,
) -> None:
    agg_by_id = {a.region_id: a for a in aggregates}
    shapes, (xmin, ymin, xmax, ymax) = _district_xy(districts)
    fig, ax = plt.subplots(figsize=(7, 7))
    for rid, rings in shapes:
        agg = agg_by_id.get(rid)
        color = PALETTE[agg.class_index] if agg is not None else NO_DATA_FILL
        ax.add_patch(MplPolygon(rings[0], closed=True, facecolor=color, edgecolor="#333333", linewidth=0.8))
    ax.set_xlim(xmin - 50, xmax + 50)
    ax.set_ylim(ymin - 50, ymax + 50)
    ax.set_aspect("equal")
    ax.set_xlabel("meters east")
    ax.set_ylabel("meters north")
    ax.set_title("Relative graffiti level by district (log-scale classes)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_score_histogram_png(scores: Sequence[LocationScore], path: str | Path) -> None:
    values = [s.g_value for s in scores]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(values, bins=30, color=PALETTE[5], edgecolor="#333333")
    ax.set_xlabel("location score (summed covered fraction per view)")
    ax.set_ylabel("locations")
    ax.set_title("Distribution of location scores")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_year_census_png(report: CoverageReport, path: str | Path) -> None:
    years = sorted(report.per_year_counts)
    counts = [report.per_year_counts[y] for y in years]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar([str(y) for y in years], counts, color=PALETTE[3], edgecolor="#333333")
    ax.set_xlabel("acquisition year")
    ax.set_ylabel("points")
    ax.set_title("Mapped points by acquisition year")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
