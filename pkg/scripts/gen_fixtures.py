#!/usr/bin/env python3
"""Regenerate the toy fixture tree and the golden pipeline outputs.

Run from the repository root:

    python scripts/gen_fixtures.py

The toy world is a 204 m x 204 m block sampled by a 3x3 grid (spacing 102 m)
split into three vertical districts (west/center/east). Point 000008 has no
imagery, one view of 000007 comes from a third-party provider, and per-view
mask areas grow west to east so the three districts get distinct levels.

`adapter_detections.json` is the reference output of the deterministic stub
segmenter over the fixture images. The stub contract (mirrored by the
TypeScript adapter, byte for byte):

  * images are processed in byte-wise ascending filename order;
  * image_id is the sha256 hex digest of the file bytes;
  * the mask is a floor(W/4) x floor(H/4) rectangle; hashing the image_id
    string with sha256 gives 32 bytes, read as big-endian uint32 words
    h1, h2, h3: the rectangle sits at (h1 % (W-rw+1), h2 % (H-rh+1)) and the
    confidence is 0.5 + (h3 % 5000) / 10000;
  * one "graffiti" instance per image, canonical wire emission.

Everything this script writes is committed; rerunning it must be a no-op
unless the fixture design above changes.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
import shutil
import struct
import sys
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from graffmap import cli  # noqa: E402
from graffmap.detection import DetectionSet, Instance, RleMask, emit_detection_file, encode_mask  # noqa: E402

FIXTURE_DIR = REPO / "tests" / "fixtures" / "toy"
GOLDEN_DIR = REPO / "tests" / "golden" / "toy"

METERS_PER_DEG_LAT = 111_320.0
CENTER_LAT = -23.55
CENTER_LON = -46.63
MPD_LON = METERS_PER_DEG_LAT * math.cos(math.radians(CENTER_LAT))

IMG_W, IMG_H = 16, 12
HEADINGS = (0, 90, 180, 270)

# Per-view foreground pixel counts by grid column (west, center, east); the
# heading index is added so views within a point differ.
BASE_PIXELS = {0: 2, 1: 12, 2: 48}


def lonlat(x_m: float, y_m: float) -> list[float]:
    """[lon, lat] of a point x_m east / y_m north of the block's SW corner."""
    sw_lat = CENTER_LAT - 102.0 / METERS_PER_DEG_LAT
    sw_lon = CENTER_LON - 102.0 / MPD_LON
    return [sw_lon + x_m / MPD_LON, sw_lat + y_m / METERS_PER_DEG_LAT]


def polygon_feature(rid: str, corners_m: list[tuple[float, float]]) -> dict:
    ring = [lonlat(x, y) for x, y in corners_m]
    ring.append(ring[0])
    return {
        "type": "Feature",
        "properties": {"id": rid},
        "geometry": {"type": "Polygon", "coordinates": [ring]},
    }


def write_geojson() -> None:
    region = {
        "type": "FeatureCollection",
        "features": [polygon_feature("toy-block", [(0, 0), (204, 0), (204, 204), (0, 204)])],
    }
    (FIXTURE_DIR / "region.geojson").write_text(json.dumps(region, indent=2) + "\n")

    districts = {
        "type": "FeatureCollection",
        "features": [
            polygon_feature("d1", [(0, 0), (68, 0), (68, 204), (0, 204)]),
            polygon_feature("d2", [(68, 0), (136, 0), (136, 204), (68, 204)]),
            polygon_feature("d3", [(136, 0), (204, 0), (204, 204), (136, 204)]),
        ],
    }
    (FIXTURE_DIR / "districts.geojson").write_text(json.dumps(districts, indent=2) + "\n")


def view_plan() -> list[tuple[int, int, dict]]:
    """(point_index, heading, manifest_entry) for every planned view."""
    plan = []
    for idx in range(9):
        for h_i, heading in enumerate(HEADINGS):
            if idx == 8:
                entry = {"year": None, "provider": "first_party", "status": "no_imagery"}
            elif idx == 7:
                provider = "third_party" if heading == 270 else "first_party"
                entry = {"year": 2011, "provider": provider, "status": "ok"}
            elif idx == 6:
                entry = {"year": 2016 if h_i < 2 else 2017, "provider": "first_party", "status": "ok"}
            else:
                entry = {"year": 2017, "provider": "first_party", "status": "ok"}
            plan.append((idx, heading, entry))
    return plan


def image_bytes(point_index: int, heading_index: int) -> bytes:
    color = (
        (20 + point_index * 25) % 256,
        (40 + heading_index * 50) % 256,
        (point_index * 37 + heading_index * 11) % 256,
    )
    buf = io.BytesIO()
    Image.new("RGB", (IMG_W, IMG_H), color).save(buf, format="JPEG", quality=90)
    return buf.getvalue()


def write_provider() -> dict[str, bytes]:
    provider_dir = FIXTURE_DIR / "provider"
    if provider_dir.exists():
        shutil.rmtree(provider_dir)
    provider_dir.mkdir(parents=True)
    manifest: dict[str, dict] = {}
    images: dict[str, bytes] = {}
    for idx, heading, entry in view_plan():
        key = f"{idx:06d}_{heading}"
        manifest[key] = entry
        if entry["status"] == "ok":
            data = image_bytes(idx, HEADINGS.index(heading))
            (provider_dir / f"{key}.jpg").write_bytes(data)
            images[key] = data
    assert len({hashlib.sha256(b).hexdigest() for b in images.values()}) == len(images), "image bytes must be unique"
    (provider_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return images


def prefix_mask(pixels: int) -> RleMask:
    # First `pixels` row-major pixels foreground: background run 0, then the
    # foreground run, then the remainder.
    total = IMG_W * IMG_H
    return RleMask(IMG_H, IMG_W, (0, pixels, total - pixels))


def write_pipeline_detections(images: dict[str, bytes]) -> None:
    sets = []
    for key in sorted(images):
        point_index = int(key.split("_")[0])
        heading = int(key.split("_")[1])
        col = point_index % 3
        pixels = BASE_PIXELS[col] + HEADINGS.index(heading)
        image_id = hashlib.sha256(images[key]).hexdigest()
        sets.append(
            DetectionSet(image_id, IMG_W, IMG_H, (Instance(prefix_mask(pixels), 0.9),))
        )
    (FIXTURE_DIR / "detections.json").write_bytes(emit_detection_file(sets))


def stub_instance(image_id: str, width: int, height: int) -> Instance:
    """Reference implementation of the stub segmenter contract."""
    rw = max(1, width // 4)
    rh = max(1, height // 4)
    digest = hashlib.sha256(image_id.encode("ascii")).digest()
    h1, h2, h3 = struct.unpack(">III", digest[:12])
    x0 = h1 % (width - rw + 1)
    y0 = h2 % (height - rh + 1)
    confidence = 0.5 + (h3 % 5000) / 10000
    grid = np.zeros((height, width), dtype=bool)
    grid[y0 : y0 + rh, x0 : x0 + rw] = True
    return Instance(encode_mask(grid), confidence)


def write_adapter_detections() -> None:
    provider_dir = FIXTURE_DIR / "provider"
    sets = []
    for path in sorted(provider_dir.glob("*.jpg"), key=lambda p: p.name):
        data = path.read_bytes()
        with Image.open(io.BytesIO(data)) as img:
            width, height = img.size
        image_id = hashlib.sha256(data).hexdigest()
        sets.append(DetectionSet(image_id, width, height, (stub_instance(image_id, width, height),)))
    (FIXTURE_DIR / "adapter_detections.json").write_bytes(emit_detection_file(sets))


def write_indicator() -> None:
    (FIXTURE_DIR / "hdi.csv").write_text("region_id,value\nd1,0.92\nd2,0.80\nd3,0.65\n")


def write_config() -> None:
    (FIXTURE_DIR / "config.yaml").write_text(
        """config_version: 1
region_geojson: region.geojson
districts_geojson: districts.geojson
sampling:
  scheme: systematic
  spacing_m: 102.0
headings: [0, 90, 180, 270]
provider:
  kind: stub
  fixture_dir: provider
max_in_flight: 4
filters:
  first_party_only: true
confidence_threshold: 0.5
min_views: 1
n_classes: 3
log_epsilon: 1.0e-6
indicator_csv: hdi.csv
output_dir: out
"""
    )


GOLDEN_FILES = (
    "sample.csv",
    "sample.geojson",
    "views.json",
    "coverage.json",
    "year_census.csv",
    "detections.json",
    "scores.csv",
    "aggregates.csv",
    "aggregates.geojson",
    "correlation.json",
    "choropleth.svg",
)


def run_pipeline_and_collect_goldens() -> None:
    with tempfile.TemporaryDirectory() as tmp:
        out_dir = Path(tmp) / "out"
        config_text = (FIXTURE_DIR / "config.yaml").read_text().replace(
            "output_dir: out", f"output_dir: {out_dir}"
        )
        config_path = Path(tmp) / "config.yaml"
        config_path.write_text(config_text.replace("region.geojson", str(FIXTURE_DIR / "region.geojson"))
                               .replace("districts.geojson", str(FIXTURE_DIR / "districts.geojson"))
                               .replace("fixture_dir: provider", f"fixture_dir: {FIXTURE_DIR / 'provider'}")
                               .replace("hdi.csv", str(FIXTURE_DIR / "hdi.csv")))
        for argv in (
            ["sample", "--config", str(config_path)],
            ["fetch", "--config", str(config_path)],
            ["detect", str(FIXTURE_DIR / "detections.json"), "--config", str(config_path)],
            ["score", "--config", str(config_path)],
            ["aggregate", "--config", str(config_path)],
            ["render", "--config", str(config_path)],
        ):
            code = cli.main(argv)
            if code != 0:
                raise SystemExit(f"pipeline stage {argv[0]} failed with exit code {code}")
        GOLDEN_DIR.mkdir(parents=True, exist_ok=True)
        for name in GOLDEN_FILES:
            shutil.copyfile(out_dir / name, GOLDEN_DIR / name)


def main() -> None:
    FIXTURE_DIR.mkdir(parents=True, exist_ok=True)
    write_geojson()
    images = write_provider()
    write_pipeline_detections(images)
    write_adapter_detections()
    write_indicator()
    write_config()
    run_pipeline_and_collect_goldens()
    print(f"fixtures -> {FIXTURE_DIR}")
    print(f"goldens  -> {GOLDEN_DIR}")


if __name__ == "__main__":
    main()
