"""Projection, polygon membership, and sampling-scheme tests."""

from __future__ import annotations

import math

import numpy as np
import pytest

from graffmap.geo import (
    EmptySample,
    GeoPoint,
    PoleProximity,
    Random,
    RegionPolygon,
    RejectionBudgetExceeded,
    SampleSet,
    Systematic,
    coverage_radius,
    load_regions_geojson,
    load_sample_geojson,
    make_projection,
    point_in_polygon,
    points_in_polygon,
    random_sample,
    region_projection,
    systematic_grid,
    write_sample_csv,
    write_sample_geojson,
)

from .oracles import winding_number_inside

METERS_PER_DEG_LAT = 111_320.0


def rect_region(center: GeoPoint, width_m: float, height_m: float, rid: str = "rect") -> RegionPolygon:
    """Axis-aligned rectangle built in the same local frame the library uses."""
    mpd_lon = METERS_PER_DEG_LAT * math.cos(math.radians(center.lat))
    dlat = height_m / 2.0 / METERS_PER_DEG_LAT
    dlon = width_m / 2.0 / mpd_lon
    return RegionPolygon(
        rid,
        (
            GeoPoint(center.lat - dlat, center.lon - dlon),
            GeoPoint(center.lat - dlat, center.lon + dlon),
            GeoPoint(center.lat + dlat, center.lon + dlon),
            GeoPoint(center.lat + dlat, center.lon - dlon),
        ),
    )


CENTER = GeoPoint(-23.55, -46.63)


# ---------------------------------------------------------------------------
# GeoPoint / RegionPolygon invariants
# ---------------------------------------------------------------------------


def test_geopoint_rejects_out_of_range():
    with pytest.raises(ValueError):
        GeoPoint(91.0, 0.0)
    with pytest.raises(ValueError):
        GeoPoint(0.0, 181.0)
    with pytest.raises(ValueError):
        GeoPoint(float("nan"), 0.0)


def test_region_rejects_degenerate_rings():
    with pytest.raises(ValueError):
        RegionPolygon("two", (GeoPoint(0, 0), GeoPoint(0, 1)))
    with pytest.raises(ValueError):  # closed ring: first == last
        RegionPolygon("closed", (GeoPoint(0, 0), GeoPoint(0, 1), GeoPoint(1, 1), GeoPoint(0, 0)))
    with pytest.raises(ValueError):  # collinear: zero area
        RegionPolygon("flat", (GeoPoint(0, 0), GeoPoint(0, 1), GeoPoint(0, 2)))
    with pytest.raises(ValueError):  # bowtie self-intersection
        RegionPolygon("bowtie", (GeoPoint(0, 0), GeoPoint(1, 1), GeoPoint(1, 0), GeoPoint(0, 1)))


# ---------------------------------------------------------------------------
# Projection
# ---------------------------------------------------------------------------


def test_projection_equator_scale():
    proj = make_projection(GeoPoint(0.0, 0.0))
    x, y = proj.to_xy(GeoPoint(0.0, 0.001))
    assert x == pytest.approx(111.32, abs=1e-9)
    assert y == 0.0


def test_projection_origin_is_identity():
    proj = make_projection(GeoPoint(12.5, -7.25))
    assert proj.to_xy(GeoPoint(12.5, -7.25)) == (0.0, 0.0)


def test_projection_latitude_shrinks_longitude():
    proj = make_projection(GeoPoint(60.0, 0.0))
    x, _ = proj.to_xy(GeoPoint(60.0, 0.001))
    assert x == pytest.approx(111_320.0 * math.cos(math.radians(60.0)) * 0.001, rel=1e-12)
    assert x == pytest.approx(55.66, abs=1e-9)


def test_projection_rejects_polar_origin():
    with pytest.raises(PoleProximity):
        make_projection(GeoPoint(89.5, 0.0))


def test_projection_round_trip_within_100km():
    proj = make_projection(CENTER)
    rng = np.random.default_rng(7)
    for _ in range(200):
        x = rng.uniform(-100_000, 100_000)
        y = rng.uniform(-100_000, 100_000)
        p = proj.from_xy(x, y)
        x2, y2 = proj.to_xy(p)
        back = proj.from_xy(x2, y2)
        assert abs(back.lat - p.lat) < 1e-9
        assert abs(back.lon - p.lon) < 1e-9


# ---------------------------------------------------------------------------
# Point in polygon
# ---------------------------------------------------------------------------


def test_pip_centroid_inside():
    region = rect_region(CENTER, 1000.0, 1000.0)
    assert point_in_polygon(CENTER, region)


def test_pip_point_outside_edge():
    region = rect_region(CENTER, 1000.0, 1000.0)
    proj = region_projection(region)
    outside = proj.from_xy(510.0, 0.0)  # 10 m past the east edge
    assert not point_in_polygon(outside, region)


def test_pip_boundary_counts_as_inside():
    region = rect_region(CENTER, 1000.0, 1000.0)
    proj = region_projection(region)
    assert point_in_polygon(proj.from_xy(500.0, 0.0), region)  # edge midpoint
    assert point_in_polygon(proj.from_xy(500.0, 500.0), region)  # corner vertex


def test_pip_hole_excludes_interior_but_not_hole_boundary():
    proj = make_projection(CENTER)
    outer = tuple(proj.from_xy(x, y) for x, y in [(-500, -500), (500, -500), (500, 500), (-500, 500)])
    hole = tuple(proj.from_xy(x, y) for x, y in [(-100, -100), (100, -100), (100, 100), (-100, 100)])
    region = RegionPolygon("donut", outer, (hole,))
    assert not point_in_polygon(CENTER, region)  # inside the hole
    assert point_in_polygon(proj.from_xy(100.0, 0.0), region)  # on the hole ring
    assert point_in_polygon(proj.from_xy(300.0, 0.0), region)  # in the annulus


def random_simple_polygon(rng: np.random.Generator, n_vertices: int) -> RegionPolygon:
    """Star-shaped (hence simple) polygon around CENTER with jittered radii.

    Angular gaps are drawn in a narrow band and normalized to 2*pi, keeping
    every gap well below pi; that bound is what guarantees simplicity.
    """
    gaps = rng.uniform(0.8, 1.2, n_vertices)
    angles = np.cumsum(gaps) / gaps.sum() * 2 * math.pi
    radii = rng.uniform(300.0, 1000.0, n_vertices)
    proj = make_projection(CENTER)
    pts = tuple(proj.from_xy(r * math.cos(a), r * math.sin(a)) for r, a in zip(radii, angles))
    return RegionPolygon("star", pts)


def test_pip_matches_winding_oracle_on_random_polygon():
    rng = np.random.default_rng(42)
    region = random_simple_polygon(rng, 20)
    proj = region_projection(region)
    ring_xy = [tuple(proj.to_xy(p)) for p in region.exterior]
    probes = []
    for _ in range(1000):
        probes.append((rng.uniform(-1100, 1100), rng.uniform(-1100, 1100)))
    pts = [proj.from_xy(x, y) for x, y in probes]
    got = points_in_polygon(pts, region)
    for (x, y), ours in zip(probes, got):
        assert bool(ours) == winding_number_inside(x, y, ring_xy)


def test_pip_oracle_property_many_polygons():
    # >= 10^3 (point, polygon) cases across varied star polygons.
    rng = np.random.default_rng(2024)
    cases = 0
    for _ in range(40):
        region = random_simple_polygon(rng, int(rng.integers(5, 24)))
        proj = region_projection(region)
        ring_xy = [tuple(proj.to_xy(p)) for p in region.exterior]
        xs = rng.uniform(-1100, 1100, 30)
        ys = rng.uniform(-1100, 1100, 30)
        pts = [proj.from_xy(x, y) for x, y in zip(xs, ys)]
        got = points_in_polygon(pts, region)
        for x, y, ours in zip(xs, ys, got):
            assert bool(ours) == winding_number_inside(x, y, ring_xy)
            cases += 1
    assert cases >= 1000


# ---------------------------------------------------------------------------
# Systematic grid
# ---------------------------------------------------------------------------


def test_grid_count_exact_121():
    region = rect_region(CENTER, 1020.0, 1020.0)
    sample = systematic_grid(region, 102.0)
    assert len(sample.points) == 121
    assert sample.scheme == Systematic(102.0)


def test_grid_count_formula_random_rectangles():
    rng = np.random.default_rng(5)
    for _ in range(25):
        w = float(rng.uniform(200, 3000))
        h = float(rng.uniform(200, 3000))
        s = float(rng.uniform(40, 250))
        region = rect_region(CENTER, w, h, "r")
        sample = systematic_grid(region, s)
        expected = (math.floor(w / s + 1e-9) + 1) * (math.floor(h / s + 1e-9) + 1)
        assert len(sample.points) == expected


def test_grid_degenerate_single_cell():
    region = rect_region(CENTER, 50.0, 50.0)
    sample = systematic_grid(region, 102.0)
    assert len(sample.points) == 1
    proj = region_projection(region)
    x, y = proj.to_xy(sample.points[0])
    assert x == pytest.approx(-25.0, abs=1e-6)  # bbox minimum corner
    assert y == pytest.approx(-25.0, abs=1e-6)


def test_grid_empty_sample_when_anchor_outside():
    # Triangle above its bbox diagonal: the only 1 km-spacing candidate is the
    # bbox minimum corner, which lies outside the region.
    proj = make_projection(CENTER)
    tri = RegionPolygon(
        "tri",
        (proj.from_xy(0.0, 100.0), proj.from_xy(100.0, 0.0), proj.from_xy(100.0, 100.0)),
    )
    with pytest.raises(EmptySample):
        systematic_grid(tri, 1000.0)


def test_grid_row_major_order_and_spacing():
    region = rect_region(CENTER, 306.0, 204.0)
    sample = systematic_grid(region, 102.0)
    assert len(sample.points) == 4 * 3
    proj = region_projection(region)
    xy = proj.to_xy_array(sample.points)
    # South-to-north rows, west-to-east within each row.
    assert np.all(np.diff(xy[:, 1]) > -1e-9)
    for row in range(3):
        seg = xy[row * 4 : (row + 1) * 4]
        steps = np.diff(seg[:, 0])
        assert np.all(np.abs(steps - 102.0) < 0.001 * 102.0)


def test_grid_sao_paulo_scale_is_order_1e5():
    # Scale analogue of a metropolitan extent at 102 m spacing.
    region = rect_region(CENTER, 40_000.0, 35_000.0, "metro")
    sample = systematic_grid(region, 102.0)
    assert 100_000 <= len(sample.points) < 1_000_000


def test_grid_points_all_inside_region():
    rng = np.random.default_rng(11)
    region = random_simple_polygon(rng, 12)
    sample = systematic_grid(region, 73.0)
    assert len(sample.points) > 0
    assert points_in_polygon(sample.points, region).all()


# ---------------------------------------------------------------------------
# Random sampling
# ---------------------------------------------------------------------------


def test_random_sample_deterministic():
    region = rect_region(CENTER, 800.0, 600.0)
    a = random_sample(region, 5, seed=99)
    b = random_sample(region, 5, seed=99)
    assert a.points == b.points
    assert a.scheme == Random(5, 99)


def test_random_sample_distinct_seeds_differ():
    region = rect_region(CENTER, 800.0, 600.0)
    a = random_sample(region, 64, seed=1)
    b = random_sample(region, 64, seed=2)
    assert a.points != b.points


def test_random_sample_uniform_mean():
    region = rect_region(CENTER, 1000.0, 1000.0)
    sample = random_sample(region, 100_000, seed=3)
    proj = region_projection(region)
    xy = proj.to_xy_array(sample.points)
    xs = (xy[:, 0] + 500.0) / 1000.0  # map onto [0, 1]
    sigma = 1.0 / math.sqrt(12.0)
    assert abs(xs.mean() - 0.5) < 3.0 * sigma / math.sqrt(len(xs))


def test_random_sample_l_shape_proportions():
    # L-shape: 1000x500 bottom bar plus 500x500 upper-left block (areas 2:1).
    proj = make_projection(CENTER)
    pts = [(0, 0), (1000, 0), (1000, 500), (500, 500), (500, 1000), (0, 1000)]
    region = RegionPolygon("ell", tuple(proj.from_xy(x, y) for x, y in pts))
    sample = random_sample(region, 10_000, seed=17)
    xy = proj.to_xy_array(sample.points)
    in_bottom = xy[:, 1] <= 500.0
    p = 2.0 / 3.0
    se = math.sqrt(p * (1 - p) / len(sample.points))
    assert abs(in_bottom.mean() - p) < 3.0 * se
    assert points_in_polygon(sample.points, region).all()


def test_random_sample_rejection_budget():
    # Hair-thin needle along the bbox diagonal: region area is ~5e-8 of the
    # bounding box, far below the 1e-6 acceptance floor.
    proj = make_projection(CENTER)
    tri = RegionPolygon(
        "needle",
        (proj.from_xy(0.0, 0.0), proj.from_xy(2000.0, 2000.0), proj.from_xy(2000.0, 1999.9998)),
    )
    with pytest.raises(RejectionBudgetExceeded):
        random_sample(tri, 10, seed=1)


# ---------------------------------------------------------------------------
# Coverage radius
# ---------------------------------------------------------------------------


def test_coverage_radius_grid_bound():
    region = rect_region(CENTER, 1020.0, 816.0)
    sample = systematic_grid(region, 102.0)
    r = coverage_radius(sample, region, probe_n=500, seed=4)
    assert r <= 102.0 * math.sqrt(2.0) / 2.0 * 1.01


def test_coverage_radius_zero_for_probe_itself():
    # Same seed draws the same point, so the fill distance collapses to zero
    # (up to degree round-trip noise, well under a micrometer).
    region = rect_region(CENTER, 1000.0, 1000.0)
    probe = random_sample(region, 1, seed=8)
    r = coverage_radius(probe, region, probe_n=1, seed=8)
    assert r < 1e-8


def test_random_coverage_worse_than_systematic():
    region = rect_region(CENTER, 1020.0, 1020.0)
    grid = systematic_grid(region, 102.0)
    n = len(grid.points)
    wins = 0
    for seed in range(100):
        r_grid = coverage_radius(grid, region, probe_n=300, seed=1000 + seed)
        rand = random_sample(region, n, seed=seed)
        r_rand = coverage_radius(rand, region, probe_n=300, seed=1000 + seed)
        if r_rand >= r_grid:
            wins += 1
    assert wins >= 95


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def test_sample_csv_and_geojson_round_trip(tmp_path):
    region = rect_region(CENTER, 306.0, 204.0)
    sample = systematic_grid(region, 102.0)
    csv_path = tmp_path / "sample.csv"
    geo_path = tmp_path / "sample.geojson"
    write_sample_csv(sample, csv_path)
    write_sample_geojson(sample, geo_path)

    header, *rows = csv_path.read_text().splitlines()
    assert header == "point_id,lat,lon"
    assert rows[0].startswith("000000,")
    assert len(rows) == len(sample.points)

    loaded = load_sample_geojson(geo_path)
    assert loaded.scheme == sample.scheme
    assert loaded.region_id == sample.region_id
    assert loaded.points == sample.points


def test_load_regions_geojson(tmp_path):
    doc = {
        "type": "FeatureCollection",
        "features": [
            {
                "type": "Feature",
                "properties": {"id": "alpha"},
                "geometry": {
                    "type": "Polygon",
                    "coordinates": [[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.0, 0.0]]],
                },
            },
            {
                "type": "Feature",
                "properties": {},
                "geometry": {
                    "type": "MultiPolygon",
                    "coordinates": [
                        [[[2.0, 0.0], [3.0, 0.0], [3.0, 1.0], [2.0, 0.0]]],
                        [[[4.0, 0.0], [5.0, 0.0], [5.0, 1.0], [4.0, 0.0]]],
                    ],
                },
            },
        ],
    }
    path = tmp_path / "regions.geojson"
    path.write_text(__import__("json").dumps(doc))
    regions = load_regions_geojson(path)
    assert [r.id for r in regions] == ["alpha", "1", "1"]  # parts share the feature id
    assert len(regions[0].exterior) == 4  # closing vertex dropped
    assert point_in_polygon(GeoPoint(0.5, 0.5), regions[0])


def test_sampleset_point_ids_are_zero_padded():
    region = rect_region(CENTER, 50.0, 50.0)
    sample = systematic_grid(region, 102.0)
    assert sample.point_ids == ("000000",)
    assert isinstance(sample, SampleSet)
