"""Location and region graffiti levels, district assignment, and choropleth bins.

A location's score is the sum over its views of the graffiti-covered area
fraction; a region's score is the mean of its locations' scores. Reductions
run in point_id order so results are deterministic regardless of how callers
parallelize upstream work.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

from .acquisition import ViewRecord, ViewStatus
from .detection import DetectionSet, area_fraction
from .geo import GeoPoint, RegionPolygon, SampleSet, points_in_polygon, region_geometry


class MixedPointIds(ValueError):
    """Views from different locations were scored together."""


class UnassignedPoint(KeyError):
    """A scored location has no district assignment."""


class InsufficientOverlap(ValueError):
    """Too few regions shared between aggregates and the indicator."""


@dataclass(frozen=True)
class LocationScore:
    point_id: str
    g_value: float
    k_planned: int
    k_actual: int
    threshold: float

    def __post_init__(self) -> None:
        if not (0 <= self.k_actual <= self.k_planned):
            raise ValueError(f"k_actual {self.k_actual} outside [0, k_planned={self.k_planned}]")
        if not (0.0 <= self.g_value <= self.k_planned):
            raise ValueError(f"g_value {self.g_value} outside [0, {self.k_planned}]")


@dataclass(frozen=True)
class RegionAggregate:
    region_id: str
    g_region: float
    n: int
    class_index: int = 0

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("aggregates must have at least one contributing location")
        if self.g_region < 0.0:
            raise ValueError(f"g_region must be non-negative, got {self.g_region}")


@dataclass(frozen=True)
class IndicatorTable:
    """External per-region indicator values, e.g. a development index."""

    values: Mapping[str, float]

    def __post_init__(self) -> None:
        for rid, v in self.values.items():
            if not math.isfinite(v):
                raise ValueError(f"indicator for region {rid!r} is not finite: {v}")


def location_score(
    views: Sequence[tuple[ViewRecord, DetectionSet | None]],
    threshold: float,
) -> LocationScore:
    """Score one location: sum of per-view area fractions at `threshold`.

    `views` holds every planned view of the location, paired with its
    detections where available. Views that were not fetched, or have no
    detections, contribute nothing and are excluded from k_actual.
    """
    if not views:
        raise ValueError("views must be non-empty")
    point_ids = {record.spec.point_id for record, _ in views}
    if len(point_ids) != 1:
        raise MixedPointIds(f"views span multiple locations: {sorted(point_ids)}")
    g = 0.0
    k_actual = 0
    for record, det in views:
        if record.status is not ViewStatus.FETCHED or det is None:
            continue
        k_actual += 1
        g += area_fraction(det, threshold)
    return LocationScore(
        point_id=point_ids.pop(),
        g_value=g,
        k_planned=len(views),
        k_actual=k_actual,
        threshold=threshold,
    )


def region_aggregate(
    scores: Sequence[LocationScore],
    assignment: Mapping[str, str],
    min_views: int = 1,
) -> list[RegionAggregate]:
    """Mean location score per region, in region_id order.

    Locations with fewer than `min_views` scored views are dropped; regions
    left with no contributing locations are omitted entirely rather than
    reported as zero.
    """
    for s in scores:
        if s.point_id not in assignment:
            raise UnassignedPoint(s.point_id)
    by_region: dict[str, list[LocationScore]] = {}
    for s in sorted(scores, key=lambda s: s.point_id):
        if s.k_actual < min_views:
            continue
        by_region.setdefault(assignment[s.point_id], []).append(s)
    out = []
    for rid in sorted(by_region):
        members = by_region[rid]
        total = 0.0
        for s in members:  # ordered reduction: point_id order within the region
            total += s.g_value
        out.append(RegionAggregate(region_id=rid, g_region=total / len(members), n=len(members)))
    return out


def assign_districts(sample: SampleSet, districts: Sequence[RegionPolygon]) -> dict[str, str]:
    """Map each point_id to the first district containing it; misses are absent."""
    assignment: dict[str, str] = {}
    ids = sample.point_ids
    unassigned = list(range(len(sample.points)))
    for district in districts:
        if not unassigned:
            break
        pts = [sample.points[i] for i in unassigned]
        inside = points_in_polygon(pts, district)
        still = []
        for idx, hit in zip(unassigned, inside):
            if hit:
                assignment[ids[idx]] = district.id
            else:
                still.append(idx)
        unassigned = still
    return assignment


def log_class_breaks(
    aggregates: Sequence[RegionAggregate],
    n_classes: int,
    epsilon: float = 1e-6,
) -> list[RegionAggregate]:
    """Assign choropleth classes: equal-width bins over log(g_region + epsilon).

    The minimum observed value maps to class 0 and the maximum to
    n_classes - 1; if all values coincide everything lands in class 0.
    """
    if n_classes < 2:
        raise ValueError(f"n_classes must be >= 2, got {n_classes}")
    if epsilon <= 0.0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if not aggregates:
        return []
    logs = [math.log(a.g_region + epsilon) for a in aggregates]
    lo = min(logs)
    hi = max(logs)
    if hi == lo:
        return [replace(a, class_index=0) for a in aggregates]
    span = hi - lo
    out = []
    for a, v in zip(aggregates, logs):
        idx = int(math.floor((v - lo) / span * n_classes))
        out.append(replace(a, class_index=min(max(idx, 0), n_classes - 1)))
    return out


def _average_ranks(values: Sequence[float]) -> list[float]:
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0  # 1-based rank averaged across the tie block
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def rank_correlation(aggregates: Sequence[RegionAggregate], indicator: IndicatorTable) -> float:
    """Spearman rank correlation between region scores and an indicator.

    Computed over the intersection of region ids, with average ranks for ties.
    """
    common = sorted({a.region_id for a in aggregates} & set(indicator.values))
    if len(common) < 3:
        raise InsufficientOverlap(
            f"need at least 3 shared regions, got {len(common)}"
        )
    g_by_region = {a.region_id: a.g_region for a in aggregates}
    rx = _average_ranks([g_by_region[rid] for rid in common])
    ry = _average_ranks([indicator.values[rid] for rid in common])
    n = len(common)
    mx = sum(rx) / n
    my = sum(ry) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    sxx = sum((a - mx) ** 2 for a in rx)
    syy = sum((b - my) ** 2 for b in ry)
    if sxx == 0.0 or syy == 0.0:
        raise ValueError("rank correlation undefined: one input is constant across regions")
    return sxy / math.sqrt(sxx * syy)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def load_indicator_csv(path: str | Path) -> IndicatorTable:
    """Read a `region_id,value` CSV (header required)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["region_id", "value"]:
            raise ValueError(f"{path}: expected header 'region_id,value', got {header}")
        values: dict[str, float] = {}
        for row in reader:
            if not row:
                continue
            values[row[0]] = float(row[1])
    return IndicatorTable(values)


def write_scores_csv(
    scores: Sequence[LocationScore],
    locations: Mapping[str, GeoPoint],
    path: str | Path,
) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["point_id", "lat", "lon", "g_value", "k_actual", "k_planned", "threshold"])
        for s in sorted(scores, key=lambda s: s.point_id):
            p = locations[s.point_id]
            writer.writerow(
                [s.point_id, repr(p.lat), repr(p.lon), repr(s.g_value), s.k_actual, s.k_planned, repr(s.threshold)]
            )


def write_aggregates_csv(aggregates: Sequence[RegionAggregate], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["region_id", "g_region", "n", "class_index"])
        for a in aggregates:
            writer.writerow([a.region_id, repr(a.g_region), a.n, a.class_index])


def write_aggregates_geojson(
    aggregates: Sequence[RegionAggregate],
    districts: Sequence[RegionPolygon],
    path: str | Path,
) -> None:
    """District polygons carrying g_region / n / class_index properties.

    Districts without an aggregate (no covered locations) are skipped, and a
    multi-part district yields one feature per part with shared properties.
    """
    by_id = {a.region_id: a for a in aggregates}
    features = []
    for district in districts:
        agg = by_id.get(district.id)
        if agg is None:
            continue
        features.append(
            {
                "type": "Feature",
                "geometry": region_geometry(district),
                "properties": {
                    "id": district.id,
                    "g_region": agg.g_region,
                    "n": agg.n,
                    "class_index": agg.class_index,
                },
            }
        )
    doc = {"type": "FeatureCollection", "features": features}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
