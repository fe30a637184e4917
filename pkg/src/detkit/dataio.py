"""COCO-format annotation and result I/O, defect validation and cleaning,
and box-space geometric augmentations (flip, scale, jitter).

The loader is deliberately permissive about referential and geometric
defects (orphan annotations, degenerate or out-of-bounds boxes, ...):
those load fine and are reported by :func:`validate`, then removed by
:func:`clean`. Structural problems (unparseable JSON, wrong field types,
crowd annotations) fail the load instead.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .assign import Detection
from .evaluation import GroundTruth
from .geometry import BBox


class MalformedFileError(ValueError):
    """Raised for unparseable or structurally invalid annotation/result files."""


class StaleReportError(RuntimeError):
    """Raised when a validation report is applied to a set it was not built from."""


@dataclass
class ImageRecord:
    id: int
    file_name: str
    width: float
    height: float


@dataclass
class AnnotationRecord:
    id: int
    image_id: int
    category_id: int
    bbox: tuple[float, float, float, float]  # raw (x, y, w, h); may be degenerate
    area: float


@dataclass
class CategoryRecord:
    id: int
    name: str


@dataclass
class AnnotationSet:
    images: list[ImageRecord] = field(default_factory=list)
    annotations: list[AnnotationRecord] = field(default_factory=list)
    categories: list[CategoryRecord] = field(default_factory=list)

    def to_payload(self) -> dict:
        return {
            "images": [
                {"id": im.id, "file_name": im.file_name, "width": im.width, "height": im.height}
                for im in self.images
            ],
            "annotations": [
                {
                    "id": an.id,
                    "image_id": an.image_id,
                    "category_id": an.category_id,
                    "bbox": list(an.bbox),
                    "area": an.area,
                }
                for an in self.annotations
            ],
            "categories": [{"id": c.id, "name": c.name} for c in self.categories],
        }

    def digest(self) -> str:
        canonical = json.dumps(self.to_payload(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()


@dataclass(frozen=True)
class ValidationReport:
    """Offending record ids per defect class, plus a fingerprint of the source set."""

    orphan_annotations: tuple[int, ...]
    duplicate_image_ids: tuple[int, ...]
    out_of_bounds_boxes: tuple[int, ...]
    degenerate_boxes: tuple[int, ...]
    unknown_categories: tuple[int, ...]
    failed_image_check: tuple[int, ...]
    source_digest: str

    DEFECT_FIELDS = (
        "orphan_annotations",
        "duplicate_image_ids",
        "out_of_bounds_boxes",
        "degenerate_boxes",
        "unknown_categories",
        "failed_image_check",
    )

    @property
    def counts(self) -> dict[str, int]:
        return {name: len(getattr(self, name)) for name in self.DEFECT_FIELDS}

    @property
    def total_flagged(self) -> int:
        return sum(self.counts.values())

    @property
    def is_clean(self) -> bool:
        return self.total_flagged == 0

    def to_dict(self) -> dict:
        out: dict = {name: list(getattr(self, name)) for name in self.DEFECT_FIELDS}
        out["counts"] = self.counts
        out["total_flagged"] = self.total_flagged
        out["source_digest"] = self.source_digest
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def _decode_json(path: str | Path):
    raw = Path(path).read_bytes()
    text = raw.decode("utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        byte_offset = len(text[: e.pos].encode("utf-8"))
        raise MalformedFileError(
            f"{path}: invalid JSON at byte offset {byte_offset}: {e.msg}"
        ) from e


def _require(cond: bool, path, what: str) -> None:
    if not cond:
        raise MalformedFileError(f"{path}: {what}")


def _as_number(value, path, what) -> float:
    _require(isinstance(value, (int, float)) and not isinstance(value, bool), path, what)
    return float(value)


def _as_int(value, path, what) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise MalformedFileError(f"{path}: {what}")
    if float(value) != int(value):
        raise MalformedFileError(f"{path}: {what}")
    return int(value)


def load_annotations(path: str | Path) -> AnnotationSet:
    """Parse a COCO-style annotation file.

    Referential defects survive the load so that validate() can report
    them; crowd annotations (truthy ``iscrowd``) are rejected outright
    because their matching semantics are not implemented.
    """
    data = _decode_json(path)
    _require(isinstance(data, dict), path, "top level must be a JSON object")
    for key in ("images", "annotations", "categories"):
        _require(isinstance(data.get(key), list), path, f"missing or non-array {key!r}")

    images = []
    for rec in data["images"]:
        _require(isinstance(rec, dict), path, "image record must be an object")
        images.append(
            ImageRecord(
                id=_as_int(rec.get("id"), path, f"image id must be an integer: {rec}"),
                file_name=str(rec.get("file_name", "")),
                width=_as_number(rec.get("width"), path, f"image width must be numeric: {rec}"),
                height=_as_number(rec.get("height"), path, f"image height must be numeric: {rec}"),
            )
        )

    annotations = []
    for rec in data["annotations"]:
        _require(isinstance(rec, dict), path, "annotation record must be an object")
        if rec.get("iscrowd"):
            raise MalformedFileError(
                f"{path}: annotation {rec.get('id')} has iscrowd set; "
                "crowd matching semantics are not supported"
            )
        bbox = rec.get("bbox")
        _require(
            isinstance(bbox, list) and len(bbox) == 4,
            path,
            f"annotation bbox must be [x, y, w, h]: {rec}",
        )
        x, y, w, h = (_as_number(v, path, f"bbox values must be numeric: {rec}") for v in bbox)
        area = rec.get("area")
        annotations.append(
            AnnotationRecord(
                id=_as_int(rec.get("id"), path, f"annotation id must be an integer: {rec}"),
                image_id=_as_int(rec.get("image_id"), path, f"annotation image_id must be an integer: {rec}"),
                category_id=_as_int(rec.get("category_id"), path, f"annotation category_id must be an integer: {rec}"),
                bbox=(x, y, w, h),
                area=w * h if area is None else _as_number(area, path, f"area must be numeric: {rec}"),
            )
        )

    categories = []
    for rec in data["categories"]:
        _require(isinstance(rec, dict), path, "category record must be an object")
        categories.append(
            CategoryRecord(
                id=_as_int(rec.get("id"), path, f"category id must be an integer: {rec}"),
                name=str(rec.get("name", "")),
            )
        )
    return AnnotationSet(images=images, annotations=annotations, categories=categories)


def save_annotations(a: AnnotationSet, path: str | Path) -> None:
    Path(path).write_text(json.dumps(a.to_payload(), sort_keys=True, indent=2) + "\n")


def validate(
    a: AnnotationSet,
    image_check: Callable[[ImageRecord], bool] | None = None,
) -> ValidationReport:
    """Report every referential and geometric defect; never raises.

    ``image_check`` models an external existence/size test of the image a
    record points at (the mismatched-file case); records failing it are
    flagged for removal.
    """
    seen: set[int] = set()
    duplicates: set[int] = set()
    for im in a.images:
        (duplicates if im.id in seen else seen).add(im.id)
    image_by_id = {}
    for im in a.images:
        image_by_id.setdefault(im.id, im)
    category_ids = {c.id for c in a.categories}

    orphans, oob, degenerate, unknown = [], [], [], []
    for an in a.annotations:
        x, y, w, h = an.bbox
        if w <= 0 or h <= 0:
            degenerate.append(an.id)
        if an.category_id not in category_ids:
            unknown.append(an.id)
        img = image_by_id.get(an.image_id)
        if img is None:
            orphans.append(an.id)
        elif x < 0 or y < 0 or x + w > img.width or y + h > img.height:
            oob.append(an.id)

    failed = []
    if image_check is not None:
        failed = [im.id for im in a.images if not image_check(im)]

    return ValidationReport(
        orphan_annotations=tuple(sorted(orphans)),
        duplicate_image_ids=tuple(sorted(duplicates)),
        out_of_bounds_boxes=tuple(sorted(oob)),
        degenerate_boxes=tuple(sorted(degenerate)),
        unknown_categories=tuple(sorted(unknown)),
        failed_image_check=tuple(sorted(set(failed))),
        source_digest=a.digest(),
    )


def clean(a: AnnotationSet, r: ValidationReport) -> AnnotationSet:
    """Drop every flagged record; removing an image removes its annotations.

    All copies of a duplicated image id are removed (an ambiguous id
    cannot be trusted). The result revalidates with zero counts.
    """
    if r.source_digest != a.digest():
        raise StaleReportError("validation report does not match this annotation set")
    bad_images = set(r.duplicate_image_ids) | set(r.failed_image_check)
    bad_anns = (
        set(r.orphan_annotations)
        | set(r.out_of_bounds_boxes)
        | set(r.degenerate_boxes)
        | set(r.unknown_categories)
    )
    return AnnotationSet(
        images=[im for im in a.images if im.id not in bad_images],
        annotations=[
            an
            for an in a.annotations
            if an.id not in bad_anns and an.image_id not in bad_images
        ],
        categories=list(a.categories),
    )


def ground_truths_from(a: AnnotationSet) -> list[GroundTruth]:
    """Convert a (clean) annotation set into evaluation ground truths."""
    out = []
    for an in a.annotations:
        x, y, w, h = an.bbox
        if w < 0 or h < 0:
            raise MalformedFileError(
                f"annotation {an.id} has a degenerate box; run validate/clean first"
            )
        out.append(
            GroundTruth(
                box=BBox.from_xywh(x, y, w, h),
                class_id=an.category_id,
                image_id=an.image_id,
                area=an.area,
            )
        )
    return out


def load_results(path: str | Path) -> list[Detection]:
    """Parse a detection-result file: a flat array of
    {image_id, category_id, bbox: [x, y, w, h], score}."""
    data = _decode_json(path)
    _require(isinstance(data, list), path, "result file must be a JSON array")
    out = []
    for rec in data:
        _require(isinstance(rec, dict), path, "result record must be an object")
        bbox = rec.get("bbox")
        _require(
            isinstance(bbox, list) and len(bbox) == 4,
            path,
            f"result bbox must be [x, y, w, h]: {rec}",
        )
        x, y, w, h = (_as_number(v, path, f"bbox values must be numeric: {rec}") for v in bbox)
        if w < 0 or h < 0:
            raise MalformedFileError(f"{path}: result bbox has negative size: {rec}")
        score = _as_number(rec.get("score"), path, f"score must be numeric: {rec}")
        if not 0.0 <= score <= 1.0:
            raise MalformedFileError(f"{path}: score must lie in [0, 1]: {rec}")
        out.append(
            Detection(
                box=BBox.from_xywh(x, y, w, h),
                score=score,
                class_id=_as_int(rec.get("category_id"), path, f"category_id must be an integer: {rec}"),
                image_id=_as_int(rec.get("image_id"), path, f"image_id must be an integer: {rec}"),
            )
        )
    return out


def save_results(dets: Sequence[Detection], path: str | Path) -> None:
    payload = [
        {
            "image_id": d.image_id,
            "category_id": d.class_id,
            "bbox": list(d.box.to_xywh()),
            "score": d.score,
        }
        for d in dets
    ]
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def hflip_boxes(boxes: Sequence[BBox], image_width: float) -> list[BBox]:
    """Mirror boxes about the vertical image axis; an involution."""
    for b in boxes:
        if b.x1 < 0 or b.x2 > image_width:
            raise ValueError(f"box {b} exceeds image width {image_width}")
    return [BBox(image_width - b.x2, b.y1, image_width - b.x1, b.y2) for b in boxes]


def scale_boxes(boxes: Sequence[BBox], factor: float) -> list[BBox]:
    """Uniformly scale all coordinates about the origin."""
    if not factor > 0:
        raise ValueError(f"scale factor must be positive, got {factor}")
    return [BBox(b.x1 * factor, b.y1 * factor, b.x2 * factor, b.y2 * factor) for b in boxes]


def jitter_boxes(
    boxes: Sequence[BBox],
    seed: int,
    magnitude: float,
    image_size: tuple[float, float] | None = None,
) -> list[BBox]:
    """Add seeded uniform noise in [-magnitude, magnitude] per coordinate,
    clip to the image when its size is given, and re-canonicalize corners."""
    if magnitude < 0:
        raise ValueError(f"magnitude must be >= 0, got {magnitude}")
    noise = np.random.default_rng(seed).uniform(-magnitude, magnitude, size=(len(boxes), 4))
    out = []
    for b, n in zip(boxes, noise):
        x1, y1, x2, y2 = b.x1 + n[0], b.y1 + n[1], b.x2 + n[2], b.y2 + n[3]
        if image_size is not None:
            w, h = image_size
            x1, x2 = min(max(x1, 0.0), w), min(max(x2, 0.0), w)
            y1, y2 = min(max(y1, 0.0), h), min(max(y2, 0.0), h)
        out.append(BBox(min(x1, x2), min(y1, y2), max(x1, x2), max(y1, y2)))
    return out
