"""COCO-protocol detection evaluation.

Average precision over an IoU-threshold sweep (default 0.50:0.05:0.95),
the fixed 0.50/0.75 slices, area-stratified AP and recall for small
(area < 32^2), medium ([32^2, 96^2)) and large (>= 96^2) objects.

Protocol summary, per (class, area range):

* detections of each image are ranked by score and truncated to the
  configured per-image cap before matching;
* at each IoU threshold, detections greedily claim the best still-free
  ground truth, preferring non-ignored ones; ground truths outside the
  area range are ignored, detections matched to ignored ground truths
  (or unmatched with out-of-range area) are dropped from both the TP and
  FP counts rather than penalized;
* the precision envelope (max precision at recall >= r) is sampled at
  101 evenly spaced recall points and averaged;
* strata with no ground truths stay undefined (None) and are excluded
  from every average rather than counted as zero.

Matching within one (image, class) pair is independent of every other
pair, so the per-pair work may run on any number of threads; the
accumulation below is a deterministic merge over sorted keys, making the
final report identical regardless of parallelism.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .assign import Detection
from .geometry import BBox, area, iou

COCO_AREA_RANGES: dict[str, tuple[float, float]] = {
    "small": (0.0, 32.0**2),
    "medium": (32.0**2, 96.0**2),
    "large": (96.0**2, math.inf),
}
AREA_RANGE_NAMES = ("small", "medium", "large")
DEFAULT_IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
RECALL_SAMPLES = np.linspace(0.0, 1.0, 101)

_ALL = "all"


class IdSpaceMismatchError(ValueError):
    """Raised when detections or ground truths fall outside the declared id universe."""


@dataclass(frozen=True)
class GroundTruth:
    """An annotated box. ``area`` defaults to the box area when absent."""

    box: BBox
    class_id: int
    image_id: int
    area: float | None = None

    def __post_init__(self) -> None:
        if self.area is None:
            object.__setattr__(self, "area", area(self.box))
        if self.area < 0:
            raise ValueError(f"area must be >= 0, got {self.area}")
        if self.class_id < 0:
            raise ValueError(f"class_id must be >= 0, got {self.class_id}")


@dataclass(frozen=True)
class EvalConfig:
    iou_thresholds: tuple[float, ...] = DEFAULT_IOU_THRESHOLDS
    area_ranges: Mapping[str, tuple[float, float]] = field(
        default_factory=lambda: dict(COCO_AREA_RANGES)
    )
    max_detections: int = 100
    recall_max_detections: int | None = None

    def __post_init__(self) -> None:
        ts = tuple(float(t) for t in self.iou_thresholds)
        object.__setattr__(self, "iou_thresholds", ts)
        if not ts or any(not 0.0 < t < 1.0 for t in ts):
            raise ValueError(f"iou thresholds must lie in (0, 1), got {ts}")
        if any(a >= b for a, b in zip(ts, ts[1:])):
            raise ValueError(f"iou thresholds must be strictly increasing, got {ts}")
        if set(self.area_ranges) != set(AREA_RANGE_NAMES):
            raise ValueError(
                f"area_ranges must name exactly {AREA_RANGE_NAMES}, got "
                f"{sorted(self.area_ranges)}"
            )
        spans = sorted(self.area_ranges.values())
        if spans[0][0] != 0.0 or not math.isinf(spans[-1][1]):
            raise ValueError("area ranges must cover [0, inf)")
        for (_, hi), (lo, _) in zip(spans, spans[1:]):
            if hi != lo:
                raise ValueError("area ranges must be disjoint and exhaustive")
        if self.recall_max_detections is None:
            object.__setattr__(self, "recall_max_detections", self.max_detections)
        if self.max_detections < 1 or self.recall_max_detections < 1:
            raise ValueError("detection caps must be >= 1")


@dataclass(frozen=True)
class EvalReport:
    """The metric columns: AP over the sweep, fixed slices, area strata, recall.

    Values are in [0, 1]; None marks a stratum with no ground truths.
    """

    ap_all: float | None
    ap50: float | None
    ap75: float | None
    ap_s: float | None
    ap_m: float | None
    ap_l: float | None
    recall_s: float | None
    recall_m: float | None
    recall_l: float | None
    recall_all: float | None

    FIELDS = (
        "ap_all", "ap50", "ap75", "ap_s", "ap_m", "ap_l",
        "recall_s", "recall_m", "recall_l", "recall_all",
    )

    def to_dict(self) -> dict[str, float | None]:
        return {name: getattr(self, name) for name in self.FIELDS}

    def format_table(self) -> str:
        headers = (
            "AP_all", "AP_50", "AP_75", "AP_s", "AP_m", "AP_l",
            "Recall_s", "Recall_m", "Recall_l", "Recall_all",
        )
        cells = [
            "-" if v is None else f"{v:.3f}" for v in (getattr(self, f) for f in self.FIELDS)
        ]
        widths = [max(len(h), len(c)) for h, c in zip(headers, cells)]
        head = "  ".join(h.rjust(w) for h, w in zip(headers, widths))
        row = "  ".join(c.rjust(w) for c, w in zip(cells, widths))
        return head + "\n" + row + "\n"


def match_image(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruth],
    iou_threshold: float,
) -> list[bool]:
    """TP/FP flags for one image and one class at a single IoU threshold.

    Detections are processed in score-descending order; each claims the
    highest-IoU still-unmatched ground truth with IoU >= threshold. The
    returned flags align with the input order.
    """
    order = sorted(range(len(dets)), key=lambda i: _det_sort_key(dets[i]))
    flags = [False] * len(dets)
    taken = [False] * len(gts)
    for i in order:
        best, best_iou = -1, iou_threshold
        for j, g in enumerate(gts):
            if taken[j]:
                continue
            v = iou(dets[i].box, g.box)
            if v >= best_iou:
                best, best_iou = j, v
        if best >= 0:
            taken[best] = True
            flags[i] = True
    return flags


def average_precision(
    flags: Sequence[bool],
    scores: Sequence[float],
    n_gt: int,
) -> float | None:
    """101-point interpolated AP from per-detection TP flags and scores.

    Returns None when there are no ground truths (undefined stratum).
    """
    if n_gt < 0:
        raise ValueError(f"n_gt must be >= 0, got {n_gt}")
    if len(flags) != len(scores):
        raise ValueError("flags and scores must be aligned")
    if n_gt == 0:
        return None
    if not flags:
        return 0.0
    order = np.argsort(-np.asarray(scores, dtype=float), kind="mergesort")
    tp = np.asarray(flags, dtype=bool)[order]
    tp_cum = np.cumsum(tp)
    fp_cum = np.cumsum(~tp)
    return _ap_from_counts(tp_cum, fp_cum, n_gt)


def _ap_from_counts(tp_cum: np.ndarray, fp_cum: np.ndarray, n_gt: int) -> float:
    recall = tp_cum / n_gt
    denom = tp_cum + fp_cum
    # denom can be zero when every detection so far is ignored
    precision = np.divide(
        tp_cum, denom, out=np.zeros(len(denom), dtype=float), where=denom > 0
    )
    # envelope: best precision at recall >= r
    for i in range(len(precision) - 1, 0, -1):
        precision[i - 1] = max(precision[i - 1], precision[i])
    idx = np.searchsorted(recall, RECALL_SAMPLES, side="left")
    sampled = np.where(idx < len(precision), precision[np.minimum(idx, len(precision) - 1)], 0.0)
    return float(sampled.mean())


def _det_sort_key(d: Detection):
    return (-d.score, d.box.x1, d.box.y1, d.box.x2, d.box.y2)


def _gt_sort_key(g: GroundTruth):
    return (g.box.x1, g.box.y1, g.box.x2, g.box.y2, g.area)


@dataclass
class _PairMatches:
    """Match state of one (image, class) pair for one area range.

    Arrays are indexed [threshold, detection] with detections already in
    score order and truncated to the largest configured cap.
    """

    scores: np.ndarray     # (D,)
    dt_matched: np.ndarray  # (T, D) bool
    dt_ignored: np.ndarray  # (T, D) bool
    n_gt: int              # non-ignored ground truths


def _match_pair(
    dets: list[Detection],
    gts: list[GroundTruth],
    thresholds: Sequence[float],
    ranges: Mapping[str, tuple[float, float]],
    max_det: int,
) -> dict[str, _PairMatches]:
    dets = sorted(dets, key=_det_sort_key)[:max_det]
    gts = sorted(gts, key=_gt_sort_key)
    n_thr, n_det, n_gt = len(thresholds), len(dets), len(gts)
    iou_mat = np.array(
        [[iou(d.box, g.box) for g in gts] for d in dets], dtype=float
    ).reshape(n_det, n_gt)
    det_areas = [area(d.box) for d in dets]
    scores = np.array([d.score for d in dets], dtype=float)

    out: dict[str, _PairMatches] = {}
    for name, (lo, hi) in ranges.items():
        gt_ig = [not (lo <= g.area < hi) for g in gts]
        # non-ignored ground truths first, original order within each group
        gt_order = sorted(range(n_gt), key=lambda j: (gt_ig[j], j))
        dt_matched = np.zeros((n_thr, n_det), dtype=bool)
        dt_ignored = np.zeros((n_thr, n_det), dtype=bool)
        for ti, t in enumerate(thresholds):
            taken = [False] * n_gt
            for di in range(n_det):
                best, best_iou = -1, t
                for j in gt_order:
                    if taken[j]:
                        continue
                    # once a real match is held, do not trade it for an ignored one
                    if best >= 0 and not gt_ig[best] and gt_ig[j]:
                        break
                    v = iou_mat[di, j]
                    if v < best_iou:
                        continue
                    best, best_iou = j, v
                if best >= 0:
                    taken[best] = True
                    dt_matched[ti, di] = True
                    dt_ignored[ti, di] = gt_ig[best]
            for di in range(n_det):
                if not dt_matched[ti, di] and not (lo <= det_areas[di] < hi):
                    dt_ignored[ti, di] = True
        out[name] = _PairMatches(scores, dt_matched, dt_ignored, n_gt - sum(gt_ig))
    return out


def _accumulate(
    pair_results: dict[tuple[int, int], dict[str, _PairMatches]],
    image_ids: Sequence[int],
    class_ids: Sequence[int],
    range_names: Sequence[str],
    n_thresholds: int,
    max_det: int,
    recall_max_det: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-(threshold, class, range) AP and recall; NaN marks undefined."""
    n_cls, n_rng = len(class_ids), len(range_names)
    ap = np.full((n_thresholds, n_cls, n_rng), np.nan)
    rec = np.full((n_thresholds, n_cls, n_rng), np.nan)
    for ki, k in enumerate(class_ids):
        for ri, rname in enumerate(range_names):
            chunks = [
                pair_results[(img, k)][rname]
                for img in image_ids
                if (img, k) in pair_results
            ]
            n_gt = sum(c.n_gt for c in chunks)
            if n_gt == 0:
                continue
            for cap, target in ((max_det, ap), (recall_max_det, rec)):
                scores = np.concatenate([c.scores[:cap] for c in chunks])
                matched = np.concatenate([c.dt_matched[:, :cap] for c in chunks], axis=1)
                ignored = np.concatenate([c.dt_ignored[:, :cap] for c in chunks], axis=1)
                order = np.argsort(-scores, kind="mergesort")
                matched = matched[:, order]
                ignored = ignored[:, order]
                for ti in range(n_thresholds):
                    tp = matched[ti] & ~ignored[ti]
                    fp = ~matched[ti] & ~ignored[ti]
                    tp_cum = np.cumsum(tp)
                    fp_cum = np.cumsum(fp)
                    if target is ap:
                        target[ti, ki, ri] = (
                            _ap_from_counts(tp_cum, fp_cum, n_gt) if len(tp_cum) else 0.0
                        )
                    else:
                        target[ti, ki, ri] = tp_cum[-1] / n_gt if len(tp_cum) else 0.0
    return ap, rec


def _nanmean(values: np.ndarray) -> float | None:
    finite = values[~np.isnan(values)]
    if finite.size == 0:
        return None
    return float(finite.mean())


def evaluate(
    dets: Iterable[Detection],
    gts: Iterable[GroundTruth],
    cfg: EvalConfig | None = None,
    image_ids: Sequence[int] | None = None,
    class_ids: Sequence[int] | None = None,
    threads: int = 1,
) -> EvalReport:
    """Full evaluation over flat multi-image detection / ground-truth lists.

    ``image_ids`` / ``class_ids`` pin the id universes (e.g. from an
    annotation file); anything outside them raises IdSpaceMismatchError.
    Left unset, the universes are taken from the inputs. AP averages only
    over classes that own at least one ground truth.
    """
    cfg = cfg or EvalConfig()
    dets = list(dets)
    gts = list(gts)
    if threads < 1:
        raise ValueError(f"threads must be >= 1, got {threads}")

    if image_ids is None:
        image_ids = sorted({g.image_id for g in gts} | {d.image_id for d in dets})
    else:
        image_ids = sorted(set(image_ids))
        universe = set(image_ids)
        stray = {x.image_id for x in (*dets, *gts)} - universe
        if stray:
            raise IdSpaceMismatchError(f"unknown image ids: {sorted(stray)}")
    if class_ids is None:
        class_ids = sorted({g.class_id for g in gts} | {d.class_id for d in dets})
    else:
        class_ids = sorted(set(class_ids))
        universe = set(class_ids)
        stray = {x.class_id for x in (*dets, *gts)} - universe
        if stray:
            raise IdSpaceMismatchError(f"unknown class ids: {sorted(stray)}")

    by_pair_dets: dict[tuple[int, int], list[Detection]] = {}
    for d in dets:
        by_pair_dets.setdefault((d.image_id, d.class_id), []).append(d)
    by_pair_gts: dict[tuple[int, int], list[GroundTruth]] = {}
    for g in gts:
        by_pair_gts.setdefault((g.image_id, g.class_id), []).append(g)

    ranges = dict(cfg.area_ranges)
    ranges[_ALL] = (0.0, math.inf)
    match_cap = max(cfg.max_detections, cfg.recall_max_detections)
    pairs = sorted(set(by_pair_dets) | set(by_pair_gts))

    def work(key: tuple[int, int]) -> dict[str, _PairMatches]:
        return _match_pair(
            by_pair_dets.get(key, []),
            by_pair_gts.get(key, []),
            cfg.iou_thresholds,
            ranges,
            match_cap,
        )

    if threads == 1:
        pair_results = {key: work(key) for key in pairs}
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            pair_results = dict(zip(pairs, pool.map(work, pairs)))

    range_names = [_ALL, *AREA_RANGE_NAMES]
    ap, rec = _accumulate(
        pair_results,
        image_ids,
        class_ids,
        range_names,
        len(cfg.iou_thresholds),
        cfg.max_detections,
        cfg.recall_max_detections,
    )

    def ap_slice(rname: str, threshold: float | None = None) -> float | None:
        ri = range_names.index(rname)
        if threshold is None:
            return _nanmean(ap[:, :, ri])
        matches = [i for i, t in enumerate(cfg.iou_thresholds) if math.isclose(t, threshold)]
        if not matches:
            return None
        return _nanmean(ap[matches[0], :, ri])

    def rec_slice(rname: str) -> float | None:
        return _nanmean(rec[:, :, range_names.index(rname)])

    return EvalReport(
        ap_all=ap_slice(_ALL),
        ap50=ap_slice(_ALL, 0.5),
        ap75=ap_slice(_ALL, 0.75),
        ap_s=ap_slice("small"),
        ap_m=ap_slice("medium"),
        ap_l=ap_slice("large"),
        recall_s=rec_slice("small"),
        recall_m=rec_slice("medium"),
        recall_l=rec_slice("large"),
        recall_all=rec_slice(_ALL),
    )
