"""Instance-mask wire format, per-view graffiti areas, and detector evaluation.

Masks travel as row-major run-length encodings: alternating background and
foreground run counts starting with background (a leading zero is allowed so
masks can open with foreground). This encoding is the bit-exact contract with
external segmenter adapters, so the test vectors in tests/test_detection.py
double as the format reference.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

GRAFFITI_LABEL = "graffiti"
WIRE_FORMAT_VERSION = 1


class MalformedRle(ValueError):
    """Run counts violate the encoding invariants."""


class DimensionMismatch(ValueError):
    """Two masks with different shapes were combined."""


class MissingAnnotationForImage(KeyError):
    """A detection references an image with no annotation entry."""


class ZeroAnnotations(ValueError):
    """Average precision is undefined without any annotated instance."""


class SchemaViolation(ValueError):
    """Wire-format document violates the schema; `pointer` locates the problem."""

    def __init__(self, pointer: str, message: str) -> None:
        super().__init__(f"{pointer}: {message}")
        self.pointer = pointer


@dataclass(frozen=True)
class RleMask:
    height: int
    width: int
    counts: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if self.height <= 0 or self.width <= 0:
            raise MalformedRle(f"mask dimensions must be positive, got {self.height}x{self.width}")
        if any(c < 0 for c in self.counts):
            raise MalformedRle("negative run count")
        if any(c == 0 for c in self.counts[1:]):
            raise MalformedRle("zero run count after the leading run")
        total = sum(self.counts)
        if total != self.height * self.width:
            raise MalformedRle(
                f"run counts sum to {total}, expected {self.height * self.width} "
                f"for a {self.height}x{self.width} mask"
            )

    @property
    def foreground_pixels(self) -> int:
        return sum(self.counts[1::2])


@dataclass(frozen=True)
class Instance:
    """One detected graffiti instance with its confidence."""

    mask: RleMask
    confidence: float
    label: str = GRAFFITI_LABEL

    def __post_init__(self) -> None:
        c = self.confidence
        if not (isinstance(c, (int, float)) and np.isfinite(c) and 0.0 <= c <= 1.0):
            raise ValueError(f"confidence must be finite in [0, 1], got {c!r}")


@dataclass(frozen=True)
class Annotation:
    """One ground-truth graffiti instance (no confidence)."""

    mask: RleMask
    label: str = GRAFFITI_LABEL


@dataclass(frozen=True)
class DetectionSet:
    image_id: str
    width: int
    height: int
    instances: tuple[Instance, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "instances", tuple(self.instances))
        _check_instance_dims(self.instances, self.height, self.width)


@dataclass(frozen=True)
class AnnotationSet:
    image_id: str
    width: int
    height: int
    instances: tuple[Annotation, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "instances", tuple(self.instances))
        _check_instance_dims(self.instances, self.height, self.width)


def _check_instance_dims(instances: Sequence[Instance | Annotation], height: int, width: int) -> None:
    for i, inst in enumerate(instances):
        if inst.mask.height != height or inst.mask.width != width:
            raise DimensionMismatch(
                f"instance {i} mask is {inst.mask.height}x{inst.mask.width}, image is {height}x{width}"
            )


# ---------------------------------------------------------------------------
# Mask arithmetic
# ---------------------------------------------------------------------------


def decode_mask(m: RleMask) -> np.ndarray:
    """Expand run counts to an (height, width) boolean grid, row-major."""
    values = np.zeros(len(m.counts), dtype=bool)
    values[1::2] = True
    flat = np.repeat(values, np.asarray(m.counts, dtype=np.int64))
    return flat.reshape(m.height, m.width)


def encode_mask(grid: np.ndarray) -> RleMask:
    """Inverse of decode_mask; accepts any boolean (h, w) grid."""
    if grid.ndim != 2:
        raise ValueError(f"expected a 2-d grid, got shape {grid.shape}")
    flat = np.asarray(grid, dtype=bool).ravel()
    counts: list[int] = []
    if flat.size == 0:
        raise MalformedRle("cannot encode an empty grid")
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    edges = np.concatenate([[0], changes, [flat.size]])
    runs = np.diff(edges)
    if flat[0]:
        counts.append(0)  # leading zero: mask opens with foreground
    counts.extend(int(r) for r in runs)
    return RleMask(int(grid.shape[0]), int(grid.shape[1]), tuple(counts))


def _union_grid(d: DetectionSet, confidence_threshold: float) -> np.ndarray:
    union = np.zeros((d.height, d.width), dtype=bool)
    for inst in d.instances:
        if inst.confidence >= confidence_threshold:
            union |= decode_mask(inst.mask)
    return union


def area_fraction(d: DetectionSet, confidence_threshold: float) -> float:
    """Fraction of the image covered by the union of confident instances.

    Overlapping instances are unioned, not summed, so the result never exceeds
    the visible graffiti area. Zero instances give 0.
    """
    if not d.instances:
        return 0.0
    union = _union_grid(d, confidence_threshold)
    return float(union.sum()) / float(d.width * d.height)


def mask_iou(a: RleMask, b: RleMask) -> float:
    """Intersection over union of two masks; 0 when both are empty."""
    if (a.height, a.width) != (b.height, b.width):
        raise DimensionMismatch(f"mask shapes differ: {a.height}x{a.width} vs {b.height}x{b.width}")
    ga = decode_mask(a)
    gb = decode_mask(b)
    union = int((ga | gb).sum())
    if union == 0:
        return 0.0
    return float((ga & gb).sum()) / float(union)


# ---------------------------------------------------------------------------
# Average precision (pooled ranking, all-points interpolation)
# ---------------------------------------------------------------------------


def average_precision(
    dets: Sequence[DetectionSet],
    anns: Sequence[AnnotationSet],
    iou_threshold: float = 0.5,
) -> float:
    """Average precision of pooled detections against annotations.

    Detections are ranked by confidence (ties broken by image_id, then
    instance index) and matched greedily to the highest-IoU unmatched
    annotation of their image; a match at or above `iou_threshold` is a true
    positive. The score is the area under the precision envelope over the
    pooled precision-recall curve, with recall measured against the total
    annotation count.
    """
    if not (0.0 < iou_threshold <= 1.0):
        raise ValueError(f"iou_threshold must be in (0, 1], got {iou_threshold}")
    ann_by_image: dict[str, AnnotationSet] = {}
    for a in anns:
        if a.image_id in ann_by_image:
            raise ValueError(f"duplicate annotation entry for image {a.image_id!r}")
        ann_by_image[a.image_id] = a
    for d in dets:
        if d.image_id not in ann_by_image:
            raise MissingAnnotationForImage(d.image_id)
    total_annotations = sum(len(a.instances) for a in anns)
    if total_annotations == 0:
        raise ZeroAnnotations("no annotated instances; average precision is undefined")

    pooled = sorted(
        (
            (inst.confidence, d.image_id, idx, inst)
            for d in dets
            for idx, inst in enumerate(d.instances)
        ),
        key=lambda t: (-t[0], t[1], t[2]),
    )
    if not pooled:
        return 0.0

    ann_grids = {
        image_id: [decode_mask(inst.mask) for inst in a.instances] for image_id, a in ann_by_image.items()
    }
    matched: dict[str, list[bool]] = {image_id: [False] * len(g) for image_id, g in ann_grids.items()}

    is_tp = np.zeros(len(pooled), dtype=bool)
    for rank, (_conf, image_id, _idx, inst) in enumerate(pooled):
        det_grid = decode_mask(inst.mask)
        det_area = int(det_grid.sum())
        best_iou = 0.0
        best_j = -1
        for j, ann_grid in enumerate(ann_grids[image_id]):
            if matched[image_id][j]:
                continue
            inter = int((det_grid & ann_grid).sum())
            union = det_area + int(ann_grid.sum()) - inter
            iou = inter / union if union > 0 else 0.0
            if iou > best_iou:
                best_iou = iou
                best_j = j
        if best_j >= 0 and best_iou >= iou_threshold:
            is_tp[rank] = True
            matched[image_id][best_j] = True

    tp_cum = np.cumsum(is_tp)
    ranks = np.arange(1, len(pooled) + 1)
    precision = tp_cum / ranks
    recall = tp_cum / total_annotations

    # Precision envelope: at each rank, the best precision achievable at any
    # equal-or-higher recall.
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    prev_recall = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev_recall) * envelope))


# ---------------------------------------------------------------------------
# Wire format
# ---------------------------------------------------------------------------


def _require(condition: bool, pointer: str, message: str) -> None:
    if not condition:
        raise SchemaViolation(pointer, message)


def _parse_images(data: bytes, require_confidence: bool) -> list[dict]:
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SchemaViolation("", f"not a JSON document: {exc}") from exc
    _require(isinstance(doc, dict), "", "top level must be an object")
    version = doc.get("format_version")
    _require(version == WIRE_FORMAT_VERSION, "/format_version", f"unknown format_version {version!r}")
    images = doc.get("images")
    _require(isinstance(images, list), "/images", "missing or non-array 'images'")

    out: list[dict] = []
    seen_ids: set[str] = set()
    for i, img in enumerate(images):
        ptr = f"/images/{i}"
        _require(isinstance(img, dict), ptr, "image entry must be an object")
        image_id = img.get("image_id")
        _require(isinstance(image_id, str) and image_id != "", f"{ptr}/image_id", "missing image_id")
        _require(image_id not in seen_ids, f"{ptr}/image_id", f"duplicate image_id {image_id!r}")
        seen_ids.add(image_id)
        width = img.get("width")
        height = img.get("height")
        _require(isinstance(width, int) and width > 0, f"{ptr}/width", "width must be a positive integer")
        _require(isinstance(height, int) and height > 0, f"{ptr}/height", "height must be a positive integer")
        raw_instances = img.get("instances")
        _require(isinstance(raw_instances, list), f"{ptr}/instances", "missing or non-array 'instances'")
        instances: list[dict] = []
        for j, inst in enumerate(raw_instances):
            iptr = f"{ptr}/instances/{j}"
            _require(isinstance(inst, dict), iptr, "instance must be an object")
            label = inst.get("label")
            _require(label == GRAFFITI_LABEL, f"{iptr}/label", f"label must be {GRAFFITI_LABEL!r}, got {label!r}")
            confidence = inst.get("confidence")
            if require_confidence:
                _require(
                    isinstance(confidence, (int, float)) and not isinstance(confidence, bool),
                    f"{iptr}/confidence",
                    "missing or non-numeric confidence",
                )
                _require(
                    np.isfinite(confidence) and 0.0 <= confidence <= 1.0,
                    f"{iptr}/confidence",
                    f"confidence {confidence!r} outside [0, 1]",
                )
            rle = inst.get("rle")
            _require(isinstance(rle, dict), f"{iptr}/rle", "missing 'rle' object")
            size = rle.get("size")
            _require(
                isinstance(size, list) and len(size) == 2 and all(isinstance(v, int) for v in size),
                f"{iptr}/rle/size",
                "size must be [height, width] integers",
            )
            _require(
                size == [height, width],
                f"{iptr}/rle/size",
                f"mask size {size} does not match image size [{height}, {width}]",
            )
            counts = rle.get("counts")
            _require(
                isinstance(counts, list) and all(isinstance(c, int) for c in counts),
                f"{iptr}/rle/counts",
                "counts must be an array of integers",
            )
            try:
                mask = RleMask(height, width, tuple(counts))
            except MalformedRle as exc:
                raise SchemaViolation(f"{iptr}/rle/counts", str(exc)) from exc
            instances.append({"mask": mask, "confidence": confidence})
        out.append({"image_id": image_id, "width": width, "height": height, "instances": instances})
    return out


def parse_detection_file(data: bytes) -> list[DetectionSet]:
    """Parse a detection wire-format document; rejects violations with a JSON pointer."""
    parsed = _parse_images(data, require_confidence=True)
    return [
        DetectionSet(
            image_id=img["image_id"],
            width=img["width"],
            height=img["height"],
            instances=tuple(
                Instance(mask=i["mask"], confidence=float(i["confidence"])) for i in img["instances"]
            ),
        )
        for img in parsed
    ]


def parse_annotation_file(data: bytes) -> list[AnnotationSet]:
    """Parse annotations: same schema, confidence absent (ignored when present)."""
    parsed = _parse_images(data, require_confidence=False)
    return [
        AnnotationSet(
            image_id=img["image_id"],
            width=img["width"],
            height=img["height"],
            instances=tuple(Annotation(mask=i["mask"]) for i in img["instances"]),
        )
        for img in parsed
    ]


def emit_detection_file(sets: Sequence[DetectionSet]) -> bytes:
    """Serialize DetectionSets to the canonical wire layout.

    The layout (2-space indent, schema key order, trailing newline) is part of
    the cross-component contract: adapters emitting the same structure must
    produce byte-identical files.
    """
    doc = {
        "format_version": WIRE_FORMAT_VERSION,
        "images": [
            {
                "image_id": d.image_id,
                "width": d.width,
                "height": d.height,
                "instances": [
                    {
                        "label": inst.label,
                        "confidence": inst.confidence,
                        "rle": {
                            "size": [inst.mask.height, inst.mask.width],
                            "counts": list(inst.mask.counts),
                        },
                    }
                    for inst in d.instances
                ],
            }
            for d in sets
        ],
    }
    return (json.dumps(doc, indent=2) + "\n").encode("utf-8")
