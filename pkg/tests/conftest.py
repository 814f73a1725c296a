"""Shared fixtures: the toy pipeline config materialized against a tmp output dir."""

from __future__ import annotations

from pathlib import Path

import pytest

FIXTURE_DIR = Path(__file__).parent / "fixtures" / "toy"
GOLDEN_DIR = Path(__file__).parent / "golden" / "toy"


def write_toy_config(tmp_path: Path, **overrides) -> Path:
    """Toy config with absolute fixture paths and a tmp output directory."""
    settings = {
        "sampling_block": "sampling:\n  scheme: systematic\n  spacing_m: 102.0",
        "headings": "[0, 90, 180, 270]",
        "n_classes": 3,
        "indicator_line": f"indicator_csv: {FIXTURE_DIR / 'hdi.csv'}",
        "output_dir": tmp_path / "out",
    }
    settings.update(overrides)
    text = f"""config_version: 1
region_geojson: {FIXTURE_DIR / 'region.geojson'}
districts_geojson: {FIXTURE_DIR / 'districts.geojson'}
{settings['sampling_block']}
headings: {settings['headings']}
provider:
  kind: stub
  fixture_dir: {FIXTURE_DIR / 'provider'}
max_in_flight: 4
filters:
  first_party_only: true
confidence_threshold: 0.5
min_views: 1
n_classes: {settings['n_classes']}
log_epsilon: 1.0e-6
{settings['indicator_line']}
output_dir: {settings['output_dir']}
"""
    path = tmp_path / "config.yaml"
    path.write_text(text)
    return path


@pytest.fixture
def toy_config(tmp_path: Path) -> Path:
    return write_toy_config(tmp_path)
