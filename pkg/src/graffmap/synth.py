"""Synthetic-city oracle: intensity fields with known means plus a noisy detector.

Used to test estimator statistics (bias, consistency, coverage trade-offs)
with no real imagery. Fields are Gaussian mixtures over a region, so region
means are available both in near-closed form and via fine quadrature.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .geo import (
    GeoPoint,
    RegionPolygon,
    SampleSet,
    _points_inside_xy,
    _projected_rings,
    region_projection,
)
from .metrics import LocationScore

_SYNTH_VIEWS = 4  # simulated locations behave like fully covered 4-view points
_STANDARD_FIELD_RESOURCE = "standard_field.json"


class QuadratureTooCoarse(ValueError):
    """Too few quadrature nodes landed inside the region for a trustworthy mean."""


@dataclass(frozen=True)
class GaussianBump:
    center: GeoPoint
    sigma_m: float
    amplitude: float

    def __post_init__(self) -> None:
        if self.sigma_m <= 0:
            raise ValueError(f"sigma_m must be positive, got {self.sigma_m}")
        if self.amplitude < 0:
            raise ValueError(f"amplitude must be non-negative, got {self.amplitude}")


@dataclass(frozen=True)
class IntensityField:
    """baseline + sum of Gaussian bumps, evaluated in the region's metric frame."""

    region: RegionPolygon
    components: tuple[GaussianBump, ...]
    baseline: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "components", tuple(self.components))
        if self.baseline < 0:
            raise ValueError(f"baseline must be non-negative, got {self.baseline}")

    def intensity_xy(self, xy: np.ndarray) -> np.ndarray:
        proj = region_projection(self.region)
        out = np.full(len(xy), self.baseline, dtype=float)
        for bump in self.components:
            cx, cy = proj.to_xy(bump.center)
            d2 = (xy[:, 0] - cx) ** 2 + (xy[:, 1] - cy) ** 2
            out += bump.amplitude * np.exp(-d2 / (2.0 * bump.sigma_m**2))
        return out

    def intensity(self, p: GeoPoint) -> float:
        proj = region_projection(self.region)
        x, y = proj.to_xy(p)
        return float(self.intensity_xy(np.array([[x, y]]))[0])


@dataclass(frozen=True)
class SimulatedDetector:
    noise_sd: float
    false_positive_rate: float
    seed: int

    def __post_init__(self) -> None:
        if not np.isfinite(self.noise_sd) or self.noise_sd < 0:
            raise ValueError(f"noise_sd must be finite and non-negative, got {self.noise_sd}")
        if not 0.0 <= self.false_positive_rate <= 1.0:
            raise ValueError(f"false_positive_rate must be in [0, 1], got {self.false_positive_rate}")


def true_region_mean(field: IntensityField, quadrature_spacing_m: float) -> float:
    """Reference mean intensity via a cell-centered Riemann sum.

    Nodes sit at cell centers of a `quadrature_spacing_m` grid over the
    region's bounding box, clipped to the region, so for rectangular regions
    aligned with whole cells the sum has no boundary overweighting and
    converges quadratically. Self-convergence is checked in tests by halving
    the spacing.
    """
    if quadrature_spacing_m <= 0:
        raise ValueError(f"quadrature spacing must be positive, got {quadrature_spacing_m}")
    proj = region_projection(field.region)
    ext, holes = _projected_rings(field.region, proj)
    xmin, ymin = ext.min(axis=0)
    xmax, ymax = ext.max(axis=0)
    s = quadrature_spacing_m
    xs = np.arange(xmin + s / 2.0, xmax, s)
    ys = np.arange(ymin + s / 2.0, ymax, s)
    if len(xs) == 0 or len(ys) == 0:
        raise QuadratureTooCoarse(f"spacing {s} m exceeds the region extent")
    gx, gy = np.meshgrid(xs, ys)
    nodes = np.column_stack([gx.ravel(), gy.ravel()])
    keep = _points_inside_xy(nodes, ext, holes)
    n_inside = int(keep.sum())
    if n_inside < 1000:
        raise QuadratureTooCoarse(
            f"only {n_inside} quadrature nodes inside the region at spacing {s} m; need >= 1000"
        )
    return float(field.intensity_xy(nodes[keep]).mean())


def sample_scores(
    field: IntensityField,
    sample: SampleSet,
    detector: SimulatedDetector,
) -> list[LocationScore]:
    """Simulated location scores: clamp(intensity + noise, 0, views) per point.

    With a positive false_positive_rate, that fraction of locations also gains
    a uniform [0, 1) spurious contribution before clamping. Fully seeded, so
    identical detectors reproduce identical scores.
    """
    proj = region_projection(field.region)
    xy = proj.to_xy_array(sample.points)
    base = field.intensity_xy(xy)
    rng = np.random.Generator(np.random.PCG64(detector.seed))
    noise = rng.normal(0.0, detector.noise_sd, len(base)) if detector.noise_sd > 0 else np.zeros(len(base))
    if detector.false_positive_rate > 0:
        spurious = (rng.uniform(size=len(base)) < detector.false_positive_rate) * rng.uniform(0.0, 1.0, len(base))
    else:
        spurious = np.zeros(len(base))
    g = np.clip(base + noise + spurious, 0.0, float(_SYNTH_VIEWS))
    return [
        LocationScore(point_id=pid, g_value=float(v), k_planned=_SYNTH_VIEWS, k_actual=_SYNTH_VIEWS, threshold=0.5)
        for pid, v in zip(sample.point_ids, g)
    ]


# ---------------------------------------------------------------------------
# Field configuration
# ---------------------------------------------------------------------------


def field_from_dict(doc: dict) -> IntensityField:
    if doc.get("field_version") != 1:
        raise ValueError(f"unknown field_version {doc.get('field_version')!r}")
    r = doc["region"]
    region = RegionPolygon(
        id=str(r["id"]),
        exterior=tuple(GeoPoint(lat, lon) for lat, lon in r["exterior"]),
    )
    components = tuple(
        GaussianBump(GeoPoint(c["center"][0], c["center"][1]), float(c["sigma_m"]), float(c["amplitude"]))
        for c in doc.get("components", [])
    )
    return IntensityField(region=region, components=components, baseline=float(doc["baseline"]))


def load_field(path: str | Path) -> IntensityField:
    return field_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def standard_field() -> IntensityField:
    """The checked-in reference field used by estimator tests and simulations."""
    text = resources.files("graffmap.data").joinpath(_STANDARD_FIELD_RESOURCE).read_text(encoding="utf-8")
    return field_from_dict(json.loads(text))


def write_simulation_csv(rows: Sequence[tuple[int, int, float]], path: str | Path) -> None:
    """Persist (seed, n, estimate) simulation summaries."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["seed", "n", "estimate"])
        for seed, n, estimate in rows:
            writer.writerow([seed, n, repr(estimate)])
