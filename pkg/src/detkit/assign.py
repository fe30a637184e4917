"""Greedy non-maximum suppression and cascade-stage proposal labeling.

Suppression happens only among detections of the same image (and of the
same class when class-aware); score ties break by (image_id, class_id,
box coordinates) so outputs are bit-reproducible. Stage assignment uses
the max-IoU ground truth per proposal with no per-gt rescue rule.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

from .geometry import BBox, iou

if TYPE_CHECKING:
    from .evaluation import GroundTruth

NEGATIVE = -1

DEFAULT_STAGE_THRESHOLDS = (0.5, 0.6, 0.7)


@dataclass(frozen=True)
class Detection:
    """A scored, classified box on one image."""

    box: BBox
    score: float
    class_id: int
    image_id: int

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must lie in [0, 1], got {self.score}")
        if self.class_id < 0:
            raise ValueError(f"class_id must be >= 0, got {self.class_id}")


@dataclass(frozen=True)
class CascadeConfig:
    """Per-stage IoU thresholds; later stages demand tighter boxes."""

    stage_thresholds: tuple[float, ...] = DEFAULT_STAGE_THRESHOLDS

    def __post_init__(self) -> None:
        ts = tuple(float(t) for t in self.stage_thresholds)
        object.__setattr__(self, "stage_thresholds", ts)
        if not ts:
            raise ValueError("at least one stage threshold is required")
        if any(not 0.0 < t < 1.0 for t in ts):
            raise ValueError(f"stage thresholds must lie in (0, 1), got {ts}")
        if any(a >= b for a, b in zip(ts, ts[1:])):
            raise ValueError(f"stage thresholds must be strictly increasing, got {ts}")


@dataclass(frozen=True)
class StageAssignment:
    """Per-proposal labels for one stage: matched gt index or NEGATIVE (-1)."""

    labels: tuple[int, ...]
    matched_iou: tuple[float, ...]

    @property
    def num_positive(self) -> int:
        return sum(1 for l in self.labels if l != NEGATIVE)


def _rank_key(d: Detection):
    return (-d.score, d.image_id, d.class_id, d.box.x1, d.box.y1, d.box.x2, d.box.y2)


def nms(
    dets: Sequence[Detection],
    iou_threshold: float,
    class_aware: bool = True,
) -> list[Detection]:
    """Greedy score-descending suppression.

    A detection is dropped when it overlaps an already-kept detection of
    the same image (and same class, when ``class_aware``) with IoU
    strictly above the threshold. The survivors come back sorted by
    descending score.
    """
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError(f"iou_threshold must lie in (0, 1), got {iou_threshold}")
    keep: list[Detection] = []
    for d in sorted(dets, key=_rank_key):
        suppressed = False
        for k in keep:
            if k.image_id != d.image_id:
                continue
            if class_aware and k.class_id != d.class_id:
                continue
            if iou(k.box, d.box) > iou_threshold:
                suppressed = True
                break
        if not suppressed:
            keep.append(d)
    return keep


def assign_stage(
    proposals: Sequence[BBox],
    gts: Sequence["GroundTruth"],
    threshold: float,
) -> StageAssignment:
    """Label each proposal by its max-IoU ground truth at one stage threshold.

    Positive means the best IoU reaches the threshold; the label then
    carries the index of that ground truth (first index on ties). With no
    ground truths everything is negative with matched IoU 0.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    labels: list[int] = []
    matched: list[float] = []
    for p in proposals:
        best, best_iou = NEGATIVE, 0.0
        for j, g in enumerate(gts):
            v = iou(p, g.box)
            if v > best_iou:
                best, best_iou = j, v
        labels.append(best if best_iou >= threshold and best != NEGATIVE else NEGATIVE)
        matched.append(best_iou)
    return StageAssignment(tuple(labels), tuple(matched))


def cascade_assign(
    proposals: Sequence[BBox],
    gts: Sequence["GroundTruth"],
    cfg: CascadeConfig,
) -> list[StageAssignment]:
    """Apply assign_stage per cascade threshold, in order."""
    return [assign_stage(proposals, gts, t) for t in cfg.stage_thresholds]
