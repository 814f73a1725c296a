"""graffmap command line: staged pipeline plus standalone evaluation.

Stages run in order (sample, fetch, detect, score, aggregate, render), gated
by the run manifest in the output directory; `evaluate` is standalone. Exit
codes: 0 success, 2 configuration errors, 3 stage-order errors, 1 anything
else.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path
from typing import Sequence

from . import acquisition, detection, geo, metrics, render
from .config import (
    ConfigInvalid,
    HttpProviderConfig,
    PipelineConfig,
    StubProviderConfig,
    config_hash,
    load_config,
)
from .geo import Random, Systematic
from .manifest import ManifestLocked, RunManifest, StageOrderViolation, run_lock

SAMPLE_CSV = "sample.csv"
SAMPLE_GEOJSON = "sample.geojson"
VIEWS_JSON = "views.json"
COVERAGE_JSON = "coverage.json"
YEAR_CENSUS_CSV = "year_census.csv"
DETECTIONS_JSON = "detections.json"
SCORES_CSV = "scores.csv"
AGGREGATES_CSV = "aggregates.csv"
AGGREGATES_GEOJSON = "aggregates.geojson"
CORRELATION_JSON = "correlation.json"
CHOROPLETH_SVG = "choropleth.svg"
FIGURES_DIR = "figures"


def _load_single_region(path: Path) -> geo.RegionPolygon:
    regions = geo.load_regions_geojson(path)
    if len(regions) != 1:
        raise ConfigInvalid("region_geojson", f"expected exactly one region, found {len(regions)}")
    return regions[0]


def _build_client(config: PipelineConfig) -> acquisition.ProviderClient:
    if isinstance(config.provider, StubProviderConfig):
        return acquisition.DirectoryStubClient(config.provider.fixture_dir)
    assert isinstance(config.provider, HttpProviderConfig)
    return acquisition.HttpProviderClient(
        url_template=config.provider.url_template,
        api_key_env=config.provider.api_key_env,
        requests_per_second=config.provider.requests_per_second,
        image_size=config.provider.image_size,
    )


def _metadata_predicate(config: PipelineConfig) -> acquisition.MetadataPredicate:
    preds = [acquisition.status_is(acquisition.ViewStatus.FETCHED)]
    if config.filters.first_party_only:
        preds.append(acquisition.provider_is(acquisition.Provider.FIRST_PARTY))
    if config.filters.year_range is not None:
        preds.append(acquisition.year_between(*config.filters.year_range))
    return acquisition.all_of(*preds)


def _load_scores_csv(path: Path) -> list[metrics.LocationScore]:
    scores = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            scores.append(
                metrics.LocationScore(
                    point_id=row["point_id"],
                    g_value=float(row["g_value"]),
                    k_planned=int(row["k_planned"]),
                    k_actual=int(row["k_actual"]),
                    threshold=float(row["threshold"]),
                )
            )
    return scores


def _load_aggregates_csv(path: Path) -> list[metrics.RegionAggregate]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.append(
                metrics.RegionAggregate(
                    region_id=row["region_id"],
                    g_region=float(row["g_region"]),
                    n=int(row["n"]),
                    class_index=int(row["class_index"]),
                )
            )
    return out


# ---------------------------------------------------------------------------
# Stage commands
# ---------------------------------------------------------------------------


def cmd_sample(config: PipelineConfig, force: bool = False) -> None:
    with run_lock(config.output_dir):
        manifest = RunManifest.load_or_create(config.output_dir, config_hash(config))
        if force:
            manifest.clear_from("sampled")
        manifest.require_stage("sampled", config_hash(config))

        region = _load_single_region(config.region_geojson)
        if isinstance(config.sampling, Systematic):
            sample = geo.systematic_grid(region, config.sampling.spacing_m)
        else:
            assert isinstance(config.sampling, Random)
            sample = geo.random_sample(region, config.sampling.n, config.sampling.rng_seed)

        csv_path = config.output_dir / SAMPLE_CSV
        geojson_path = config.output_dir / SAMPLE_GEOJSON
        geo.write_sample_csv(sample, csv_path)
        geo.write_sample_geojson(sample, geojson_path)

        manifest.config_hash = config_hash(config)
        manifest.complete_stage("sampled", [csv_path, geojson_path])
        print(f"sample: {len(sample.points)} points -> {csv_path}")


def cmd_fetch(config: PipelineConfig, force: bool = False) -> None:
    with run_lock(config.output_dir):
        manifest = RunManifest.load_or_create(config.output_dir, config_hash(config))
        if force:
            manifest.clear_from("fetched")
        manifest.require_stage("fetched", config_hash(config))

        sample = geo.load_sample_geojson(config.output_dir / SAMPLE_GEOJSON)
        specs = acquisition.plan_views(sample, list(config.headings))
        client = _build_client(config)
        records = acquisition.fetch_views(
            specs, client, config.output_dir / "cache", max_in_flight=config.max_in_flight
        )
        report = acquisition.coverage_report(records, sample)

        views_path = config.output_dir / VIEWS_JSON
        coverage_path = config.output_dir / COVERAGE_JSON
        census_path = config.output_dir / YEAR_CENSUS_CSV
        acquisition.write_view_index(records, views_path)
        acquisition.write_coverage_json(report, coverage_path)
        acquisition.write_year_census_csv(report, census_path)

        manifest.complete_stage("fetched", [views_path, coverage_path, census_path])
        fetched = sum(1 for r in records if r.status is acquisition.ViewStatus.FETCHED)
        print(f"fetch: {fetched}/{len(records)} views fetched, {report.mapped_points}/{report.total_points} points mapped -> {views_path}")


def cmd_detect(config: PipelineConfig, detections_file: str | Path, force: bool = False) -> None:
    with run_lock(config.output_dir):
        manifest = RunManifest.load_or_create(config.output_dir, config_hash(config))
        if force:
            manifest.clear_from("detected")
        manifest.require_stage("detected", config_hash(config))

        data = Path(detections_file).read_bytes()
        sets = detection.parse_detection_file(data)
        records = acquisition.load_view_index(config.output_dir / VIEWS_JSON)
        known = {r.image_id for r in records if r.status is acquisition.ViewStatus.FETCHED}
        unknown = [d.image_id for d in sets if d.image_id not in known]
        if unknown:
            raise ValueError(
                f"detect: {len(unknown)} detection image_ids match no fetched view "
                f"(first: {unknown[0]})"
            )

        out_path = config.output_dir / DETECTIONS_JSON
        out_path.write_bytes(detection.emit_detection_file(sets))
        manifest.complete_stage("detected", [out_path])
        covered = len([d for d in sets if d.instances])
        print(f"detect: {len(sets)} images ingested ({covered} with instances) -> {out_path}")


def cmd_score(config: PipelineConfig, force: bool = False) -> None:
    with run_lock(config.output_dir):
        manifest = RunManifest.load_or_create(config.output_dir, config_hash(config))
        if force:
            manifest.clear_from("scored")
        manifest.require_stage("scored", config_hash(config))

        sample = geo.load_sample_geojson(config.output_dir / SAMPLE_GEOJSON)
        records = acquisition.load_view_index(config.output_dir / VIEWS_JSON)
        sets = detection.parse_detection_file((config.output_dir / DETECTIONS_JSON).read_bytes())
        dets_by_image = {d.image_id: d for d in sets}
        eligible = _metadata_predicate(config)

        by_point: dict[str, list] = {}
        for r in records:
            by_point.setdefault(r.spec.point_id, []).append(r)

        scores = []
        for pid in sample.point_ids:
            views = [
                (r, dets_by_image.get(r.image_id) if eligible(r) else None)
                for r in by_point.get(pid, [])
            ]
            if not views:
                continue
            s = metrics.location_score(views, config.confidence_threshold)
            if config.rescale_partial_views and 0 < s.k_actual < s.k_planned:
                s = metrics.LocationScore(
                    s.point_id,
                    s.g_value * s.k_planned / s.k_actual,
                    s.k_planned,
                    s.k_actual,
                    s.threshold,
                )
            scores.append(s)

        csv_path = config.output_dir / SCORES_CSV
        metrics.write_scores_csv(scores, sample.by_id(), csv_path)
        manifest.complete_stage("scored", [csv_path])
        scored = sum(1 for s in scores if s.k_actual > 0)
        print(f"score: {scored}/{len(scores)} locations scored -> {csv_path}")


def cmd_aggregate(config: PipelineConfig, force: bool = False) -> None:
    with run_lock(config.output_dir):
        manifest = RunManifest.load_or_create(config.output_dir, config_hash(config))
        if force:
            manifest.clear_from("aggregated")
        manifest.require_stage("aggregated", config_hash(config))

        sample = geo.load_sample_geojson(config.output_dir / SAMPLE_GEOJSON)
        scores = _load_scores_csv(config.output_dir / SCORES_CSV)
        districts = geo.load_regions_geojson(config.districts_geojson)
        assignment = metrics.assign_districts(sample, districts)
        # Locations outside every district cannot contribute to any region.
        assigned_scores = [s for s in scores if s.point_id in assignment]
        aggregates = metrics.region_aggregate(assigned_scores, assignment, min_views=config.min_views)
        aggregates = metrics.log_class_breaks(aggregates, config.n_classes, config.log_epsilon)

        csv_path = config.output_dir / AGGREGATES_CSV
        geojson_path = config.output_dir / AGGREGATES_GEOJSON
        metrics.write_aggregates_csv(aggregates, csv_path)
        metrics.write_aggregates_geojson(aggregates, districts, geojson_path)
        artifacts = [csv_path, geojson_path]

        if config.indicator_csv is not None:
            indicator = metrics.load_indicator_csv(config.indicator_csv)
            rho = metrics.rank_correlation(aggregates, indicator)
            common = len({a.region_id for a in aggregates} & set(indicator.values))
            corr_path = config.output_dir / CORRELATION_JSON
            corr_path.write_text(
                json.dumps({"spearman_rho": rho, "regions_compared": common}, indent=2) + "\n",
                encoding="utf-8",
            )
            artifacts.append(corr_path)
            print(f"aggregate: spearman rho vs indicator = {rho:.4f} over {common} regions")

        manifest.complete_stage("aggregated", artifacts)
        print(f"aggregate: {len(aggregates)} regions -> {csv_path}")


def cmd_render(config: PipelineConfig, force: bool = False) -> None:
    with run_lock(config.output_dir):
        manifest = RunManifest.load_or_create(config.output_dir, config_hash(config))
        if force:
            manifest.clear_from("rendered")
        manifest.require_stage("rendered", config_hash(config))

        districts = geo.load_regions_geojson(config.districts_geojson)
        aggregates = _load_aggregates_csv(config.output_dir / AGGREGATES_CSV)

        svg_path = config.output_dir / CHOROPLETH_SVG
        render.write_choropleth_svg(districts, aggregates, svg_path)

        figures_dir = config.output_dir / FIGURES_DIR
        figures_dir.mkdir(exist_ok=True)
        render.save_choropleth_png(districts, aggregates, figures_dir / "choropleth.png")
        scores = _load_scores_csv(config.output_dir / SCORES_CSV)
        render.save_score_histogram_png(scores, figures_dir / "score_histogram.png")
        coverage_path = config.output_dir / COVERAGE_JSON
        if coverage_path.exists():
            report = acquisition.load_coverage_json(coverage_path)
            if report.per_year_counts:
                render.save_year_census_png(report, figures_dir / "year_census.png")

        manifest.complete_stage("rendered", [svg_path])
        print(f"render: choropleth -> {svg_path}, figures -> {figures_dir}")


def cmd_evaluate(
    detections_file: str | Path,
    annotations_file: str | Path,
    iou_threshold: float = 0.5,
    out_path: str | Path | None = None,
) -> dict:
    dets = detection.parse_detection_file(Path(detections_file).read_bytes())
    anns = detection.parse_annotation_file(Path(annotations_file).read_bytes())
    ap = detection.average_precision(dets, anns, iou_threshold)
    report = {
        "average_precision": ap,
        "iou_threshold": iou_threshold,
        "matching": "mask-iou",
        "interpolation": "all-points",
        "n_images": len(anns),
        "n_detections": sum(len(d.instances) for d in dets),
        "n_annotations": sum(len(a.instances) for a in anns),
    }
    if out_path is not None:
        Path(out_path).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    print(f"evaluate: average precision {ap:.4f} at IoU {iou_threshold:g} over {report['n_annotations']} annotations")
    return report


# ---------------------------------------------------------------------------
# Argument parsing and dispatch
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="graffmap", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in [
        ("sample", "generate sample locations over the region"),
        ("fetch", "fetch views for every sample location through the provider"),
        ("score", "score locations from ingested detections"),
        ("aggregate", "aggregate scores per district and bin for the choropleth"),
        ("render", "render the SVG choropleth and report figures"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="pipeline config file (YAML)")
        p.add_argument("--force", action="store_true", help="redo this stage and clear downstream stages")

    p = sub.add_parser("detect", help="validate and ingest a detection wire-format file")
    p.add_argument("detections_file", help="detection wire-format JSON produced by a segmenter adapter")
    p.add_argument("--config", required=True)
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("evaluate", help="average precision of detections against annotations")
    p.add_argument("detections_file")
    p.add_argument("annotations_file")
    p.add_argument("--iou", type=float, default=0.5, help="mask IoU threshold (default 0.5)")
    p.add_argument("--out", default=None, help="write the evaluation report JSON here")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "evaluate":
            cmd_evaluate(args.detections_file, args.annotations_file, args.iou, args.out)
            return 0
        config = load_config(args.config)
        config.output_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "sample":
            cmd_sample(config, args.force)
        elif args.command == "fetch":
            cmd_fetch(config, args.force)
        elif args.command == "detect":
            cmd_detect(config, args.detections_file, args.force)
        elif args.command == "score":
            cmd_score(config, args.force)
        elif args.command == "aggregate":
            cmd_aggregate(config, args.force)
        elif args.command == "render":
            cmd_render(config, args.force)
        return 0
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except StageOrderViolation as exc:
        print(f"stage error: {exc}", file=sys.stderr)
        return 3
    except (ManifestLocked, detection.SchemaViolation, ValueError, KeyError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
