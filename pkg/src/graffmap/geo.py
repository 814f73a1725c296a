"""Coordinate handling, local metric projection, polygon geometry, and sampling.

Latitude and longitude are WGS84 degrees throughout. Metric work happens in a
local equirectangular projection centered on the region's bounding-box
centroid, which keeps distance errors below 0.1% for city-scale regions
(extents up to roughly 100 km).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

METERS_PER_DEG_LAT = 111_320.0

# Latitude (degrees) at or beyond which the equirectangular projection degenerates.
MAX_PROJECTION_LAT = 89.0

# Points closer than this (meters) to a ring edge count as "on the boundary".
BOUNDARY_TOL_M = 1e-6

# Zero-padded width of generated point identifiers; covers samples up to 10**6.
POINT_ID_WIDTH = 6

_REJECTION_BATCH = 4096
_REJECTION_DRAW_FLOOR = 1_000_000
_REJECTION_MIN_RATIO = 1e-6

# Guard against extents like 10.199999... grid steps when the region was
# itself constructed from a whole number of cells.
_GRID_EXTENT_EPS = 1e-9


class PoleProximity(ValueError):
    """Projection origin too close to a pole for an equirectangular local frame."""


class EmptySample(ValueError):
    """No candidate point fell inside the region."""


class RejectionBudgetExceeded(RuntimeError):
    """Rejection sampling acceptance ratio fell below the workable floor."""


@dataclass(frozen=True)
class GeoPoint:
    """A WGS84 coordinate pair in degrees."""

    lat: float
    lon: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ValueError(f"non-finite coordinate ({self.lat}, {self.lon})")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude {self.lon} outside [-180, 180]")


@dataclass(frozen=True)
class RegionPolygon:
    """A region boundary: one exterior ring plus optional hole rings.

    Rings are stored unclosed (first and last vertices distinct, closure is
    implicit). The exterior must be simple (non-self-intersecting) and have
    nonzero area; degenerate rings are rejected here so the point-in-polygon
    test never sees them.
    """

    id: str
    exterior: tuple[GeoPoint, ...]
    holes: tuple[tuple[GeoPoint, ...], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "exterior", tuple(self.exterior))
        object.__setattr__(self, "holes", tuple(tuple(h) for h in self.holes))
        _validate_ring(self.exterior, f"region {self.id!r} exterior")
        for i, hole in enumerate(self.holes):
            _validate_ring(hole, f"region {self.id!r} hole {i}")
        ring = _ring_lonlat(self.exterior)
        if abs(_shoelace(ring)) == 0.0:
            raise ValueError(f"region {self.id!r}: exterior ring has zero area")
        if _ring_self_intersects(ring):
            raise ValueError(f"region {self.id!r}: exterior ring self-intersects")

    def bounds(self) -> tuple[float, float, float, float]:
        """(min_lat, min_lon, max_lat, max_lon) of the exterior ring."""
        lats = [p.lat for p in self.exterior]
        lons = [p.lon for p in self.exterior]
        return min(lats), min(lons), max(lats), max(lons)


@dataclass(frozen=True)
class LocalProjection:
    """Equirectangular local frame: meters east/north of an origin point."""

    origin: GeoPoint
    meters_per_deg_lat: float
    meters_per_deg_lon: float

    def to_xy(self, p: GeoPoint) -> tuple[float, float]:
        return (
            (p.lon - self.origin.lon) * self.meters_per_deg_lon,
            (p.lat - self.origin.lat) * self.meters_per_deg_lat,
        )

    def from_xy(self, x: float, y: float) -> GeoPoint:
        return GeoPoint(
            self.origin.lat + y / self.meters_per_deg_lat,
            self.origin.lon + x / self.meters_per_deg_lon,
        )

    def to_xy_array(self, points: Sequence[GeoPoint]) -> np.ndarray:
        """Project points to an (n, 2) array of (x, y) meters."""
        lats = np.array([p.lat for p in points], dtype=float)
        lons = np.array([p.lon for p in points], dtype=float)
        return np.column_stack(
            [
                (lons - self.origin.lon) * self.meters_per_deg_lon,
                (lats - self.origin.lat) * self.meters_per_deg_lat,
            ]
        )

    def from_xy_array(self, xy: np.ndarray) -> list[GeoPoint]:
        lats = self.origin.lat + xy[:, 1] / self.meters_per_deg_lat
        lons = self.origin.lon + xy[:, 0] / self.meters_per_deg_lon
        return [GeoPoint(float(a), float(o)) for a, o in zip(lats, lons)]


def make_projection(origin: GeoPoint) -> LocalProjection:
    """Build the local frame at `origin`; degenerates near the poles."""
    if abs(origin.lat) >= MAX_PROJECTION_LAT:
        raise PoleProximity(f"projection origin latitude {origin.lat} is within 1 degree of a pole")
    return LocalProjection(
        origin=origin,
        meters_per_deg_lat=METERS_PER_DEG_LAT,
        meters_per_deg_lon=METERS_PER_DEG_LAT * math.cos(math.radians(origin.lat)),
    )


def region_projection(region: RegionPolygon) -> LocalProjection:
    """Local frame anchored at the region's bounding-box centroid."""
    min_lat, min_lon, max_lat, max_lon = region.bounds()
    return make_projection(GeoPoint((min_lat + max_lat) / 2.0, (min_lon + max_lon) / 2.0))


@dataclass(frozen=True)
class Systematic:
    """Regular-grid sampling with a fixed spacing in meters."""

    spacing_m: float


@dataclass(frozen=True)
class Random:
    """Seeded uniform sampling of n points."""

    n: int
    rng_seed: int


SamplingScheme = Systematic | Random


@dataclass(frozen=True)
class SampleSet:
    """An ordered collection of sample locations plus its generating scheme."""

    scheme: SamplingScheme
    region_id: str
    points: tuple[GeoPoint, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "points", tuple(self.points))

    @property
    def point_ids(self) -> tuple[str, ...]:
        return tuple(f"{i:0{POINT_ID_WIDTH}d}" for i in range(len(self.points)))

    def by_id(self) -> dict[str, GeoPoint]:
        return dict(zip(self.point_ids, self.points))


# ---------------------------------------------------------------------------
# Ring validation helpers
# ---------------------------------------------------------------------------


def _validate_ring(ring: Sequence[GeoPoint], label: str) -> None:
    if len(ring) < 3:
        raise ValueError(f"{label}: ring needs at least 3 vertices, got {len(ring)}")
    if ring[0] == ring[-1]:
        raise ValueError(f"{label}: first and last vertices must be distinct (closure is implicit)")


def _ring_lonlat(ring: Sequence[GeoPoint]) -> np.ndarray:
    return np.array([[p.lon, p.lat] for p in ring], dtype=float)


def _shoelace(ring: np.ndarray) -> float:
    x = ring[:, 0]
    y = ring[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _ring_self_intersects(ring: np.ndarray) -> bool:
    # Proper-crossing test between all non-adjacent edge pairs; O(n^2) pairs
    # but vectorized per edge, fine for district-sized rings.
    n = len(ring)
    a = ring
    b = np.roll(ring, -1, axis=0)
    for i in range(n - 1):
        js = np.arange(i + 2, n)
        if i == 0:
            js = js[js != n - 1]  # wrap-around neighbour shares a vertex
        if js.size == 0:
            continue
        if _proper_cross(a[i], b[i], a[js], b[js]).any():
            return True
    return False


def _proper_cross(p: np.ndarray, q: np.ndarray, rs: np.ndarray, ss: np.ndarray) -> np.ndarray:
    def cross(o, d, pts):
        return (d[..., 0] - o[..., 0]) * (pts[..., 1] - o[..., 1]) - (d[..., 1] - o[..., 1]) * (
            pts[..., 0] - o[..., 0]
        )

    d1 = cross(p, q, rs)
    d2 = cross(p, q, ss)
    d3 = cross(rs, ss, p)
    d4 = cross(rs, ss, q)
    return (d1 * d2 < 0) & (d3 * d4 < 0)


# ---------------------------------------------------------------------------
# Point-in-polygon (even-odd ray casting in local metric coordinates)
# ---------------------------------------------------------------------------


def _projected_rings(region: RegionPolygon, proj: LocalProjection) -> tuple[np.ndarray, list[np.ndarray]]:
    ext = proj.to_xy_array(region.exterior)
    holes = [proj.to_xy_array(h) for h in region.holes]
    return ext, holes


def _ray_cast(pts: np.ndarray, ring: np.ndarray) -> np.ndarray:
    x = pts[:, 0:1]
    y = pts[:, 1:2]
    x1 = ring[None, :, 0]
    y1 = ring[None, :, 1]
    ring2 = np.roll(ring, -1, axis=0)
    x2 = ring2[None, :, 0]
    y2 = ring2[None, :, 1]
    straddles = (y1 > y) != (y2 > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_at_y = (x2 - x1) * (y - y1) / (y2 - y1) + x1
    crossings = straddles & (x < x_at_y)
    return (crossings.sum(axis=1) % 2).astype(bool)


def _on_ring(pts: np.ndarray, ring: np.ndarray, tol: float) -> np.ndarray:
    a = ring
    b = np.roll(ring, -1, axis=0)
    ab = b - a
    ab_len2 = (ab**2).sum(axis=1)
    ab_len2 = np.where(ab_len2 == 0.0, 1.0, ab_len2)
    ap = pts[:, None, :] - a[None, :, :]
    t = np.clip((ap * ab[None, :, :]).sum(axis=2) / ab_len2[None, :], 0.0, 1.0)
    nearest = a[None, :, :] + t[:, :, None] * ab[None, :, :]
    d2 = ((pts[:, None, :] - nearest) ** 2).sum(axis=2)
    return (d2 <= tol * tol).any(axis=1)


def _points_inside_xy(
    pts: np.ndarray,
    exterior: np.ndarray,
    holes: list[np.ndarray],
    tol: float = BOUNDARY_TOL_M,
    chunk: int = 4096,
) -> np.ndarray:
    out = np.empty(len(pts), dtype=bool)
    for lo in range(0, len(pts), chunk):
        part = pts[lo : lo + chunk]
        on_boundary = _on_ring(part, exterior, tol)
        for h in holes:
            on_boundary |= _on_ring(part, h, tol)
        inside = _ray_cast(part, exterior)
        for h in holes:
            inside &= ~_ray_cast(part, h)
        out[lo : lo + chunk] = inside | on_boundary
    return out


def points_in_polygon(points: Sequence[GeoPoint], poly: RegionPolygon) -> np.ndarray:
    """Vectorized membership test; boundary points (within 1e-6 m) count as inside."""
    proj = region_projection(poly)
    ext, holes = _projected_rings(poly, proj)
    if len(points) == 0:
        return np.zeros(0, dtype=bool)
    return _points_inside_xy(proj.to_xy_array(points), ext, holes)


def point_in_polygon(p: GeoPoint, poly: RegionPolygon) -> bool:
    """True iff p is inside the exterior and outside all holes; boundaries are inside."""
    return bool(points_in_polygon([p], poly)[0])


# ---------------------------------------------------------------------------
# Sampling schemes
# ---------------------------------------------------------------------------


def systematic_grid(region: RegionPolygon, spacing_m: float) -> SampleSet:
    """Axis-aligned grid over the region at `spacing_m`, clipped to the region.

    The grid is anchored at the bounding-box minimum corner in the local
    metric frame; rows run south to north, columns west to east, and both
    anchor-side boundary rows/columns are included. Points are returned in
    row-major order.
    """
    if spacing_m <= 0:
        raise ValueError(f"spacing_m must be positive, got {spacing_m}")
    proj = region_projection(region)
    ext, holes = _projected_rings(region, proj)
    xmin, ymin = ext.min(axis=0)
    xmax, ymax = ext.max(axis=0)
    nx = int(math.floor((xmax - xmin) / spacing_m + _GRID_EXTENT_EPS)) + 1
    ny = int(math.floor((ymax - ymin) / spacing_m + _GRID_EXTENT_EPS)) + 1
    xs = xmin + spacing_m * np.arange(nx)
    ys = ymin + spacing_m * np.arange(ny)
    gx, gy = np.meshgrid(xs, ys)
    candidates = np.column_stack([gx.ravel(), gy.ravel()])
    keep = _points_inside_xy(candidates, ext, holes)
    if not keep.any():
        raise EmptySample(f"no grid point at spacing {spacing_m} m falls inside region {region.id!r}")
    points = proj.from_xy_array(candidates[keep])
    return SampleSet(Systematic(spacing_m), region.id, tuple(points))


def _rejection_sample_xy(
    exterior: np.ndarray,
    holes: list[np.ndarray],
    n: int,
    rng: np.random.Generator,
) -> np.ndarray:
    xmin, ymin = exterior.min(axis=0)
    xmax, ymax = exterior.max(axis=0)
    accepted: list[np.ndarray] = []
    n_accepted = 0
    n_drawn = 0
    while n_accepted < n:
        xs = rng.uniform(xmin, xmax, _REJECTION_BATCH)
        ys = rng.uniform(ymin, ymax, _REJECTION_BATCH)
        batch = np.column_stack([xs, ys])
        keep = _points_inside_xy(batch, exterior, holes)
        accepted.append(batch[keep])
        n_accepted += int(keep.sum())
        n_drawn += _REJECTION_BATCH
        if n_drawn >= _REJECTION_DRAW_FLOOR and n_accepted / n_drawn < _REJECTION_MIN_RATIO:
            raise RejectionBudgetExceeded(
                f"acceptance ratio {n_accepted}/{n_drawn} below {_REJECTION_MIN_RATIO}; "
                "region area is a vanishing fraction of its bounding box"
            )
    return np.concatenate(accepted)[:n]


def random_sample(region: RegionPolygon, n: int, seed: int) -> SampleSet:
    """n points uniform over the region via seeded rejection sampling.

    Uses numpy's PCG64 stream, so identical seeds reproduce identical point
    lists bit for bit.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    proj = region_projection(region)
    ext, holes = _projected_rings(region, proj)
    rng = np.random.Generator(np.random.PCG64(seed))
    xy = _rejection_sample_xy(ext, holes, n, rng)
    return SampleSet(Random(n, seed), region.id, tuple(proj.from_xy_array(xy)))


def coverage_radius(sample: SampleSet, region: RegionPolygon, probe_n: int, seed: int) -> float:
    """Monte Carlo fill distance: worst nearest-sample distance over random probes.

    Estimates how far the most poorly covered spot of the region sits from its
    nearest sample location, in meters.
    """
    if not sample.points:
        raise ValueError("sample is empty")
    if probe_n < 1:
        raise ValueError(f"probe_n must be >= 1, got {probe_n}")
    proj = region_projection(region)
    ext, holes = _projected_rings(region, proj)
    rng = np.random.Generator(np.random.PCG64(seed))
    probes = _rejection_sample_xy(ext, holes, probe_n, rng)
    sample_xy = proj.to_xy_array(sample.points)
    worst = 0.0
    for lo in range(0, len(probes), 1024):
        part = probes[lo : lo + 1024]
        d2 = ((part[:, None, :] - sample_xy[None, :, :]) ** 2).sum(axis=2)
        worst = max(worst, float(d2.min(axis=1).max()))
    return math.sqrt(worst)


# ---------------------------------------------------------------------------
# GeoJSON / CSV interchange
# ---------------------------------------------------------------------------


def _ring_from_coords(coords: Iterable[Sequence[float]]) -> tuple[GeoPoint, ...]:
    pts = [GeoPoint(float(lat), float(lon)) for lon, lat in coords]
    if len(pts) >= 2 and pts[0] == pts[-1]:
        pts = pts[:-1]  # GeoJSON rings close explicitly; we store them open
    return tuple(pts)


def load_regions_geojson(path: str | Path) -> list[RegionPolygon]:
    """Load Polygon / MultiPolygon features as RegionPolygons.

    The region id comes from the feature property "id", falling back to the
    feature index. MultiPolygon parts become separate RegionPolygons sharing
    the feature's id, so downstream aggregation keyed by id sees one region.
    """
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("type") == "FeatureCollection":
        features = doc.get("features", [])
    elif doc.get("type") == "Feature":
        features = [doc]
    elif doc.get("type") in ("Polygon", "MultiPolygon"):
        features = [{"type": "Feature", "geometry": doc, "properties": {}}]
    else:
        raise ValueError(f"{path}: not a GeoJSON FeatureCollection, Feature, or Polygon geometry")

    regions: list[RegionPolygon] = []
    for idx, feat in enumerate(features):
        geom = feat.get("geometry") or {}
        props = feat.get("properties") or {}
        rid = str(props.get("id", idx))
        gtype = geom.get("type")
        if gtype == "Polygon":
            polys = [geom["coordinates"]]
        elif gtype == "MultiPolygon":
            polys = geom["coordinates"]
        else:
            raise ValueError(f"{path}: feature {idx} has unsupported geometry type {gtype!r}")
        for rings in polys:
            exterior = _ring_from_coords(rings[0])
            holes = tuple(_ring_from_coords(r) for r in rings[1:])
            regions.append(RegionPolygon(rid, exterior, holes))
    return regions


def region_geometry(poly: RegionPolygon) -> dict:
    """GeoJSON Polygon geometry for a region (rings re-closed, [lon, lat] order)."""

    def close(ring: tuple[GeoPoint, ...]) -> list[list[float]]:
        coords = [[p.lon, p.lat] for p in ring]
        coords.append(coords[0])
        return coords

    return {"type": "Polygon", "coordinates": [close(poly.exterior)] + [close(h) for h in poly.holes]}


def write_sample_csv(sample: SampleSet, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["point_id", "lat", "lon"])
        for pid, p in zip(sample.point_ids, sample.points):
            writer.writerow([pid, repr(p.lat), repr(p.lon)])


def _scheme_properties(scheme: SamplingScheme) -> dict:
    if isinstance(scheme, Systematic):
        return {"kind": "systematic", "spacing_m": scheme.spacing_m}
    return {"kind": "random", "n": scheme.n, "rng_seed": scheme.rng_seed}


def write_sample_geojson(sample: SampleSet, path: str | Path) -> None:
    doc = {
        "type": "FeatureCollection",
        "properties": {"region_id": sample.region_id, "scheme": _scheme_properties(sample.scheme)},
        "features": [
            {
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [p.lon, p.lat]},
                "properties": {"point_id": pid},
            }
            for pid, p in zip(sample.point_ids, sample.points)
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def load_sample_geojson(path: str | Path) -> SampleSet:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    props = doc.get("properties") or {}
    raw = props.get("scheme") or {}
    scheme: SamplingScheme
    if raw.get("kind") == "systematic":
        scheme = Systematic(float(raw["spacing_m"]))
    elif raw.get("kind") == "random":
        scheme = Random(int(raw["n"]), int(raw["rng_seed"]))
    else:
        raise ValueError(f"{path}: missing or unknown sampling scheme metadata")
    points = []
    for feat in doc.get("features", []):
        lon, lat = feat["geometry"]["coordinates"]
        points.append(GeoPoint(float(lat), float(lon)))
    return SampleSet(scheme, str(props.get("region_id", "")), tuple(points))
