"""Pipeline configuration: YAML schema, validation, and hashing.

Relative paths in a config file resolve against the config file's directory,
so a checked-in config stays portable. Validation errors carry the dotted
field path that failed.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import yaml

from .geo import Random, SamplingScheme, Systematic

CONFIG_VERSION = 1


class ConfigInvalid(ValueError):
    def __init__(self, field: str, message: str) -> None:
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class StubProviderConfig:
    fixture_dir: Path


@dataclass(frozen=True)
class HttpProviderConfig:
    url_template: str
    api_key_env: str
    requests_per_second: float
    image_size: tuple[int, int]


@dataclass(frozen=True)
class FilterConfig:
    first_party_only: bool
    year_range: tuple[int, int] | None


@dataclass(frozen=True)
class PipelineConfig:
    region_geojson: Path
    districts_geojson: Path
    sampling: SamplingScheme
    headings: tuple[float, ...]
    provider: StubProviderConfig | HttpProviderConfig
    max_in_flight: int
    filters: FilterConfig
    confidence_threshold: float
    min_views: int
    n_classes: int
    log_epsilon: float
    rescale_partial_views: bool
    indicator_csv: Path | None
    output_dir: Path


def _expect(condition: bool, field: str, message: str) -> None:
    if not condition:
        raise ConfigInvalid(field, message)


def _resolve_path(base: Path, value, field: str, must_exist: bool) -> Path:
    _expect(isinstance(value, str) and value != "", field, "must be a non-empty path string")
    path = Path(value)
    if not path.is_absolute():
        path = base / path
    if must_exist:
        _expect(path.exists(), field, f"path does not exist: {path}")
    return path


def _parse_sampling(doc, field: str) -> SamplingScheme:
    _expect(isinstance(doc, dict), field, "must be a mapping")
    scheme = doc.get("scheme")
    if scheme == "systematic":
        spacing = doc.get("spacing_m")
        _expect(isinstance(spacing, (int, float)) and spacing > 0, f"{field}.spacing_m", "must be a positive number")
        return Systematic(float(spacing))
    if scheme == "random":
        n = doc.get("n")
        seed = doc.get("seed")
        _expect(isinstance(n, int) and n >= 1, f"{field}.n", "must be an integer >= 1")
        _expect(isinstance(seed, int), f"{field}.seed", "must be an integer seed")
        return Random(n, seed)
    raise ConfigInvalid(f"{field}.scheme", f"must be 'systematic' or 'random', got {scheme!r}")


def _parse_provider(doc, field: str) -> StubProviderConfig | HttpProviderConfig:
    _expect(isinstance(doc, dict), field, "must be a mapping")
    kind = doc.get("kind")
    if kind == "stub":
        return StubProviderConfig(fixture_dir=Path(doc.get("fixture_dir", "")))
    if kind == "http":
        template = doc.get("url_template")
        _expect(isinstance(template, str) and "{lat}" in template and "{lon}" in template,
                f"{field}.url_template", "must be a URL template using {lat} and {lon}")
        rps = doc.get("requests_per_second", 10.0)
        _expect(isinstance(rps, (int, float)) and rps > 0, f"{field}.requests_per_second", "must be positive")
        size = doc.get("image_size", [640, 640])
        _expect(
            isinstance(size, list) and len(size) == 2 and all(isinstance(v, int) and v > 0 for v in size),
            f"{field}.image_size",
            "must be [width, height] positive integers",
        )
        return HttpProviderConfig(
            url_template=template,
            api_key_env=str(doc.get("api_key_env", "")),
            requests_per_second=float(rps),
            image_size=(size[0], size[1]),
        )
    raise ConfigInvalid(f"{field}.kind", f"must be 'stub' or 'http', got {kind!r}")


def _parse_filters(doc, field: str) -> FilterConfig:
    if doc is None:
        return FilterConfig(first_party_only=True, year_range=None)
    _expect(isinstance(doc, dict), field, "must be a mapping")
    first_party = doc.get("first_party_only", True)
    _expect(isinstance(first_party, bool), f"{field}.first_party_only", "must be a boolean")
    year_range = doc.get("year_range")
    if year_range is not None:
        _expect(
            isinstance(year_range, list) and len(year_range) == 2 and all(isinstance(y, int) for y in year_range),
            f"{field}.year_range",
            "must be [first_year, last_year] integers",
        )
        _expect(year_range[0] <= year_range[1], f"{field}.year_range", "first year must not exceed last")
        year_range = (year_range[0], year_range[1])
    return FilterConfig(first_party_only=first_party, year_range=year_range)


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigInvalid("config", f"config file not found: {path}")
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigInvalid("config", f"not valid YAML: {exc}") from exc
    _expect(isinstance(doc, dict), "config", "top level must be a mapping")
    _expect(doc.get("config_version") == CONFIG_VERSION, "config_version",
            f"must be {CONFIG_VERSION}, got {doc.get('config_version')!r}")
    base = path.parent

    region = _resolve_path(base, doc.get("region_geojson"), "region_geojson", must_exist=True)
    districts = _resolve_path(base, doc.get("districts_geojson"), "districts_geojson", must_exist=True)
    sampling = _parse_sampling(doc.get("sampling"), "sampling")

    headings_raw = doc.get("headings", [0, 90, 180, 270])
    _expect(
        isinstance(headings_raw, list) and headings_raw and all(isinstance(h, (int, float)) for h in headings_raw),
        "headings",
        "must be a non-empty list of numbers",
    )
    headings = tuple(float(h) for h in headings_raw)
    _expect(all(0.0 <= h < 360.0 for h in headings), "headings", "each heading must be in [0, 360)")
    _expect(len(set(headings)) == len(headings), "headings", "headings must be distinct")

    provider = _parse_provider(doc.get("provider"), "provider")
    if isinstance(provider, StubProviderConfig):
        fixture = _resolve_path(base, str(provider.fixture_dir), "provider.fixture_dir", must_exist=True)
        provider = StubProviderConfig(fixture_dir=fixture)

    max_in_flight = doc.get("max_in_flight", 4)
    _expect(isinstance(max_in_flight, int) and max_in_flight >= 1, "max_in_flight", "must be an integer >= 1")

    threshold = doc.get("confidence_threshold", 0.5)
    _expect(
        isinstance(threshold, (int, float)) and 0.0 <= threshold <= 1.0,
        "confidence_threshold",
        "must be a number in [0, 1]",
    )

    min_views = doc.get("min_views", 1)
    _expect(isinstance(min_views, int) and min_views >= 0, "min_views", "must be an integer >= 0")

    n_classes = doc.get("n_classes", 5)
    _expect(isinstance(n_classes, int) and 2 <= n_classes <= 9, "n_classes",
            "must be an integer in [2, 9] (palette size)")

    epsilon = doc.get("log_epsilon", 1e-6)
    _expect(isinstance(epsilon, (int, float)) and epsilon > 0, "log_epsilon", "must be positive")

    rescale = doc.get("rescale_partial_views", False)
    _expect(isinstance(rescale, bool), "rescale_partial_views", "must be a boolean")

    indicator = doc.get("indicator_csv")
    indicator_path = (
        _resolve_path(base, indicator, "indicator_csv", must_exist=True) if indicator is not None else None
    )

    out_raw = doc.get("output_dir")
    _expect(isinstance(out_raw, str) and out_raw != "", "output_dir", "must be a non-empty path string")
    output_dir = Path(out_raw)
    if not output_dir.is_absolute():
        output_dir = base / output_dir

    return PipelineConfig(
        region_geojson=region,
        districts_geojson=districts,
        sampling=sampling,
        headings=headings,
        provider=provider,
        max_in_flight=max_in_flight,
        filters=_parse_filters(doc.get("filters"), "filters"),
        confidence_threshold=float(threshold),
        min_views=min_views,
        n_classes=n_classes,
        log_epsilon=float(epsilon),
        rescale_partial_views=rescale,
        indicator_csv=indicator_path,
        output_dir=output_dir,
    )


def config_hash(config: PipelineConfig) -> str:
    """Digest of the semantic configuration, used for stage-gating re-runs."""
    doc = {
        "region_geojson": str(config.region_geojson),
        "districts_geojson": str(config.districts_geojson),
        "sampling": (
            {"scheme": "systematic", "spacing_m": config.sampling.spacing_m}
            if isinstance(config.sampling, Systematic)
            else {"scheme": "random", "n": config.sampling.n, "seed": config.sampling.rng_seed}
        ),
        "headings": list(config.headings),
        "provider": (
            {"kind": "stub", "fixture_dir": str(config.provider.fixture_dir)}
            if isinstance(config.provider, StubProviderConfig)
            else {
                "kind": "http",
                "url_template": config.provider.url_template,
                "api_key_env": config.provider.api_key_env,
                "requests_per_second": config.provider.requests_per_second,
                "image_size": list(config.provider.image_size),
            }
        ),
        "max_in_flight": config.max_in_flight,
        "filters": {
            "first_party_only": config.filters.first_party_only,
            "year_range": list(config.filters.year_range) if config.filters.year_range else None,
        },
        "confidence_threshold": config.confidence_threshold,
        "min_views": config.min_views,
        "n_classes": config.n_classes,
        "log_epsilon": config.log_epsilon,
        "rescale_partial_views": config.rescale_partial_views,
        "indicator_csv": str(config.indicator_csv) if config.indicator_csv else None,
    }
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode("utf-8")).hexdigest()
