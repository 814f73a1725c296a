"""graffmap: quantify street-level graffiti over a geographic region.

The library samples locations over a region, acquires heading-spaced street
views through pluggable providers, scores graffiti coverage from instance
segmentation masks, aggregates scores into district levels, and renders
choropleth map data. The `graffmap` CLI wires these stages into a resumable
pipeline.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .acquisition import (
    CoverageReport,
    Provider,
    ProviderClient,
    ViewRecord,
    ViewSpec,
    ViewStatus,
    coverage_report,
    fetch_views,
    filter_views,
    plan_views,
)
from .detection import (
    AnnotationSet,
    DetectionSet,
    Instance,
    RleMask,
    area_fraction,
    average_precision,
    decode_mask,
    emit_detection_file,
    encode_mask,
    mask_iou,
    parse_annotation_file,
    parse_detection_file,
)
from .geo import (
    GeoPoint,
    LocalProjection,
    RegionPolygon,
    SampleSet,
    coverage_radius,
    load_regions_geojson,
    make_projection,
    point_in_polygon,
    random_sample,
    systematic_grid,
)
from .metrics import (
    IndicatorTable,
    LocationScore,
    RegionAggregate,
    assign_districts,
    location_score,
    log_class_breaks,
    rank_correlation,
    region_aggregate,
)
from .synth import IntensityField, SimulatedDetector, sample_scores, standard_field, true_region_mean
