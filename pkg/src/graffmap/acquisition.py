"""Multi-heading view acquisition through pluggable provider clients.

Fetching is cache-first and failure-tolerant: every outcome (fetched, no
imagery, failed) is recorded as data and cached, so a re-run over the same
specs performs zero provider calls and reproduces the same records. The
provider behind the client is deliberately generic; nothing here knows about
any specific imagery service.
"""

from __future__ import annotations

import csv
import enum
import hashlib
import io
import json
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import requests
from PIL import Image, UnidentifiedImageError

from .geo import GeoPoint, SampleSet


class DuplicateHeading(ValueError):
    """The same heading was requested twice for a view plan."""


class CacheUnwritable(RuntimeError):
    """The image cache directory cannot be created or written; aborts the batch."""


class UnknownPointId(KeyError):
    """A view record references a point that is not in the sample."""


class ProviderError(RuntimeError):
    """A provider request failed; recorded as a Failed view, not raised to callers."""


class Provider(enum.Enum):
    FIRST_PARTY = "first_party"
    THIRD_PARTY = "third_party"
    UNKNOWN = "unknown"


class ViewStatus(enum.Enum):
    FETCHED = "fetched"
    NO_IMAGERY = "no_imagery"
    FAILED = "failed"


@dataclass(frozen=True)
class ViewSpec:
    point_id: str
    location: GeoPoint
    heading: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.heading < 360.0:
            raise ValueError(f"heading {self.heading} outside [0, 360)")

    @property
    def key(self) -> str:
        """Stable `<point_id>_<heading>` key used for cache paths and fixtures."""
        return f"{self.point_id}_{format_heading(self.heading)}"


@dataclass(frozen=True)
class ViewRecord:
    spec: ViewSpec
    image_id: str
    width: int
    height: int
    capture_year: int | None
    provider: Provider
    status: ViewStatus

    def __post_init__(self) -> None:
        if self.status is ViewStatus.FETCHED:
            if not self.image_id:
                raise ValueError("fetched view must carry a content-hash image_id")
            if self.width <= 0 or self.height <= 0:
                raise ValueError(f"fetched view must have positive dimensions, got {self.width}x{self.height}")


@dataclass(frozen=True)
class ProviderImage:
    """Successful provider payload: raw bytes plus whatever metadata it knows."""

    data: bytes
    capture_year: int | None = None
    provider: Provider = Provider.UNKNOWN


@dataclass(frozen=True)
class CoverageReport:
    total_points: int
    mapped_points: int
    views_fetched: int
    per_year_counts: dict[int, int]
    excluded_third_party: int

    def to_json_dict(self) -> dict:
        return {
            "total_points": self.total_points,
            "mapped_points": self.mapped_points,
            "views_fetched": self.views_fetched,
            "per_year_counts": {str(y): self.per_year_counts[y] for y in sorted(self.per_year_counts)},
            "excluded_third_party": self.excluded_third_party,
        }


def format_heading(heading: float) -> str:
    """Compact heading string: 90 -> "90", 22.5 -> "22.5"."""
    return format(heading, "g")


def plan_views(sample: SampleSet, headings: Sequence[float]) -> list[ViewSpec]:
    """One spec per (sample point, heading), ordered by point then heading."""
    if not headings:
        raise ValueError("headings must be non-empty")
    cleaned = [float(h) for h in headings]
    for h in cleaned:
        if not 0.0 <= h < 360.0:
            raise ValueError(f"heading {h} outside [0, 360)")
    if len(set(cleaned)) != len(cleaned):
        raise DuplicateHeading(f"headings contain duplicates: {cleaned}")
    ordered = sorted(cleaned)
    return [
        ViewSpec(point_id=pid, location=p, heading=h)
        for pid, p in zip(sample.point_ids, sample.points)
        for h in ordered
    ]


# ---------------------------------------------------------------------------
# Provider clients
# ---------------------------------------------------------------------------


class ProviderClient:
    """Interface for imagery backends.

    `fetch` returns a ProviderImage, or None when the provider has no imagery
    at the spec's location; it raises ProviderError for transient failures.
    """

    def fetch(self, spec: ViewSpec) -> ProviderImage | None:
        raise NotImplementedError


_PROVIDER_BY_NAME = {p.value: p for p in Provider}


class DirectoryStubClient(ProviderClient):
    """Fixture-backed client: `<point_id>_<heading>.jpg` files plus manifest.json.

    The manifest maps each view key to {"year": int|null, "provider": str,
    "status": "ok"|"no_imagery"|"error"}. Keys absent from the manifest count
    as no imagery, which mirrors a provider with partial coverage.
    """

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)
        manifest_path = self.root / "manifest.json"
        self.manifest: dict[str, dict] = {}
        if manifest_path.exists():
            self.manifest = json.loads(manifest_path.read_text(encoding="utf-8"))

    def fetch(self, spec: ViewSpec) -> ProviderImage | None:
        entry = self.manifest.get(spec.key)
        if entry is None or entry.get("status") == "no_imagery":
            return None
        if entry.get("status") == "error":
            raise ProviderError(f"stub manifest marks {spec.key} as an error")
        path = self.root / f"{spec.key}.jpg"
        if not path.exists():
            return None
        year = entry.get("year")
        return ProviderImage(
            data=path.read_bytes(),
            capture_year=int(year) if year is not None else None,
            provider=_PROVIDER_BY_NAME.get(entry.get("provider", "unknown"), Provider.UNKNOWN),
        )


class TokenBucket:
    """Thread-safe token-bucket limiter; acquire() blocks until a token is free."""

    def __init__(self, rate_per_s: float, capacity: float | None = None) -> None:
        if rate_per_s <= 0:
            raise ValueError(f"rate must be positive, got {rate_per_s}")
        self.rate = rate_per_s
        self.capacity = capacity if capacity is not None else max(1.0, rate_per_s)
        self._tokens = self.capacity
        self._stamp = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = time.monotonic()
                self._tokens = min(self.capacity, self._tokens + (now - self._stamp) * self.rate)
                self._stamp = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            time.sleep(wait)


class HttpProviderClient(ProviderClient):
    """Generic HTTP imagery client configured by a URL template.

    The template may use {lat}, {lon}, {heading}, {width}, {height}, and
    {key} placeholders; the API key is read from the configured environment
    variable. Providers meter aggressively, so requests pass through a token
    bucket. The generic endpoint carries no acquisition metadata, hence
    provider Unknown and no capture year.
    """

    def __init__(
        self,
        url_template: str,
        api_key_env: str = "",
        requests_per_second: float = 10.0,
        image_size: tuple[int, int] = (640, 640),
        timeout_s: float = 30.0,
    ) -> None:
        self.url_template = url_template
        self.api_key_env = api_key_env
        self.image_size = image_size
        self.timeout_s = timeout_s
        self._bucket = TokenBucket(requests_per_second)

    def fetch(self, spec: ViewSpec) -> ProviderImage | None:
        self._bucket.acquire()
        url = self.url_template.format(
            lat=spec.location.lat,
            lon=spec.location.lon,
            heading=spec.heading,
            width=self.image_size[0],
            height=self.image_size[1],
            key=os.environ.get(self.api_key_env, "") if self.api_key_env else "",
        )
        try:
            resp = requests.get(url, timeout=self.timeout_s)
        except requests.RequestException as exc:
            raise ProviderError(f"request for {spec.key} failed: {exc}") from exc
        if resp.status_code in (204, 404):
            return None
        if resp.status_code != 200:
            raise ProviderError(f"request for {spec.key} returned HTTP {resp.status_code}")
        return ProviderImage(data=resp.content)


# ---------------------------------------------------------------------------
# Cached fetching
# ---------------------------------------------------------------------------


def _meta_path(cache_dir: Path, spec: ViewSpec) -> Path:
    return cache_dir / spec.point_id / f"{format_heading(spec.heading)}.meta.json"


def _image_path(cache_dir: Path, spec: ViewSpec) -> Path:
    return cache_dir / spec.point_id / f"{format_heading(spec.heading)}.jpg"


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    try:
        tmp.write_bytes(data)
        os.replace(tmp, path)
    except OSError as exc:
        raise CacheUnwritable(f"cannot write {path}: {exc}") from exc


def _record_from_meta(spec: ViewSpec, meta: Mapping) -> ViewRecord:
    return ViewRecord(
        spec=spec,
        image_id=meta.get("image_id", ""),
        width=int(meta.get("width", 0)),
        height=int(meta.get("height", 0)),
        capture_year=meta.get("capture_year"),
        provider=_PROVIDER_BY_NAME.get(meta.get("provider", "unknown"), Provider.UNKNOWN),
        status=ViewStatus(meta["status"]),
    )


def _meta_from_record(record: ViewRecord) -> dict:
    return {
        "status": record.status.value,
        "image_id": record.image_id,
        "width": record.width,
        "height": record.height,
        "capture_year": record.capture_year,
        "provider": record.provider.value,
    }


def _fetch_one(spec: ViewSpec, client: ProviderClient, cache_dir: Path) -> ViewRecord:
    meta_path = _meta_path(cache_dir, spec)
    if meta_path.exists():
        return _record_from_meta(spec, json.loads(meta_path.read_text(encoding="utf-8")))
    try:
        meta_path.parent.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CacheUnwritable(f"cannot create cache entry dir {meta_path.parent}: {exc}") from exc

    record: ViewRecord
    try:
        payload = client.fetch(spec)
    except ProviderError:
        record = ViewRecord(spec, "", 0, 0, None, Provider.UNKNOWN, ViewStatus.FAILED)
    else:
        if payload is None:
            record = ViewRecord(spec, "", 0, 0, None, Provider.UNKNOWN, ViewStatus.NO_IMAGERY)
        else:
            try:
                with Image.open(io.BytesIO(payload.data)) as img:
                    width, height = img.size
            except (UnidentifiedImageError, OSError):
                # Provider returned bytes we cannot size; treat like a failed fetch.
                record = ViewRecord(spec, "", 0, 0, None, payload.provider, ViewStatus.FAILED)
            else:
                image_id = hashlib.sha256(payload.data).hexdigest()
                _atomic_write(_image_path(cache_dir, spec), payload.data)
                record = ViewRecord(
                    spec, image_id, width, height, payload.capture_year, payload.provider, ViewStatus.FETCHED
                )
    _atomic_write(meta_path, (json.dumps(_meta_from_record(record), indent=2) + "\n").encode("utf-8"))
    return record


def fetch_views(
    specs: Sequence[ViewSpec],
    client: ProviderClient,
    cache_dir: str | Path,
    max_in_flight: int = 4,
) -> list[ViewRecord]:
    """Fetch every spec through the cache, at most `max_in_flight` concurrently.

    Output order matches input order. Individual failures become Failed
    records; only an unwritable cache aborts the batch. All outcomes are
    cached, including no-imagery and failures, so re-runs are provider-free
    (delete a view's .meta.json, or re-run the fetch stage with --force, to
    retry failures).
    """
    if max_in_flight < 1:
        raise ValueError(f"max_in_flight must be >= 1, got {max_in_flight}")
    cache_dir = Path(cache_dir)
    try:
        cache_dir.mkdir(parents=True, exist_ok=True)
        probe = cache_dir / ".write-probe"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise CacheUnwritable(f"cache dir {cache_dir} is not writable: {exc}") from exc
    if not specs:
        return []
    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        return list(pool.map(lambda s: _fetch_one(s, client, cache_dir), specs))


# ---------------------------------------------------------------------------
# Metadata filtering
# ---------------------------------------------------------------------------

MetadataPredicate = Callable[[ViewRecord], bool]


def provider_is(provider: Provider) -> MetadataPredicate:
    return lambda r: r.provider is provider


def status_is(status: ViewStatus) -> MetadataPredicate:
    return lambda r: r.status is status


def year_between(first: int, last: int) -> MetadataPredicate:
    """Closed range; records without a capture year never match."""
    return lambda r: r.capture_year is not None and first <= r.capture_year <= last


def all_of(*predicates: MetadataPredicate) -> MetadataPredicate:
    return lambda r: all(p(r) for p in predicates)


def filter_views(records: Sequence[ViewRecord], predicate: MetadataPredicate) -> list[ViewRecord]:
    """Keep records matching the predicate; pure, order-preserving."""
    return [r for r in records if predicate(r)]


# ---------------------------------------------------------------------------
# Coverage reporting
# ---------------------------------------------------------------------------


def coverage_report(records: Sequence[ViewRecord], sample: SampleSet) -> CoverageReport:
    """Per-point coverage census.

    A point is mapped when at least one of its views fetched. Each mapped
    point contributes to the year census with the modal capture year of its
    fetched views (ties resolve to the latest year); points whose fetched
    views carry no year are omitted from the census.
    """
    known = set(sample.point_ids)
    by_point: dict[str, list[ViewRecord]] = {}
    for r in records:
        if r.spec.point_id not in known:
            raise UnknownPointId(r.spec.point_id)
        by_point.setdefault(r.spec.point_id, []).append(r)

    mapped = 0
    views_fetched = 0
    third_party = 0
    per_year: dict[int, int] = {}
    for pid in sorted(by_point):
        fetched = [r for r in by_point[pid] if r.status is ViewStatus.FETCHED]
        views_fetched += len(fetched)
        third_party += sum(1 for r in fetched if r.provider is Provider.THIRD_PARTY)
        if not fetched:
            continue
        mapped += 1
        years = [r.capture_year for r in fetched if r.capture_year is not None]
        if years:
            tally: dict[int, int] = {}
            for y in years:
                tally[y] = tally.get(y, 0) + 1
            best = max(tally.items(), key=lambda kv: (kv[1], kv[0]))[0]
            per_year[best] = per_year.get(best, 0) + 1
    return CoverageReport(
        total_points=len(sample.points),
        mapped_points=mapped,
        views_fetched=views_fetched,
        per_year_counts=per_year,
        excluded_third_party=third_party,
    )


def write_coverage_json(report: CoverageReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report.to_json_dict(), indent=2) + "\n", encoding="utf-8")


def load_coverage_json(path: str | Path) -> CoverageReport:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return CoverageReport(
        total_points=int(doc["total_points"]),
        mapped_points=int(doc["mapped_points"]),
        views_fetched=int(doc["views_fetched"]),
        per_year_counts={int(y): int(c) for y, c in doc["per_year_counts"].items()},
        excluded_third_party=int(doc["excluded_third_party"]),
    )


def write_year_census_csv(report: CoverageReport, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["year", "points"])
        for year in sorted(report.per_year_counts):
            writer.writerow([year, report.per_year_counts[year]])


# ---------------------------------------------------------------------------
# View-index persistence (pipeline stage artifact)
# ---------------------------------------------------------------------------


def write_view_index(records: Sequence[ViewRecord], path: str | Path) -> None:
    doc = {
        "index_version": 1,
        "views": [
            {
                "point_id": r.spec.point_id,
                "lat": r.spec.location.lat,
                "lon": r.spec.location.lon,
                "heading": r.spec.heading,
                "status": r.status.value,
                "image_id": r.image_id,
                "width": r.width,
                "height": r.height,
                "capture_year": r.capture_year,
                "provider": r.provider.value,
            }
            for r in records
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def load_view_index(path: str | Path) -> list[ViewRecord]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("index_version") != 1:
        raise ValueError(f"{path}: unknown view index version {doc.get('index_version')!r}")
    records = []
    for v in doc["views"]:
        spec = ViewSpec(v["point_id"], GeoPoint(v["lat"], v["lon"]), float(v["heading"]))
        records.append(
            ViewRecord(
                spec=spec,
                image_id=v["image_id"],
                width=int(v["width"]),
                height=int(v["height"]),
                capture_year=v["capture_year"],
                provider=_PROVIDER_BY_NAME[v["provider"]],
                status=ViewStatus(v["status"]),
            )
        )
    return records
