"""detkit: detection math and evaluation toolkit.

Box geometry, IoU-family regression losses and a generalized focal loss
with analytic gradients, greedy NMS and cascade IoU-threshold
assignment, a deterministic toy FPN / PA-FPN fusion pipeline, warmup +
cosine learning-rate schedules, COCO-protocol AP/recall evaluation, and
annotation validation/cleaning.
"""

__version__ = "0.1.0"

from .assign import (
    CascadeConfig,
    Detection,
    StageAssignment,
    assign_stage,
    cascade_assign,
    nms,
)
from .geometry import (
    BBox,
    area,
    center_distance_sq,
    diagonal_sq,
    enclosing_box,
    intersection_area,
    iou,
)
from .evaluation import (
    EvalConfig,
    EvalReport,
    GroundTruth,
    average_precision,
    evaluate,
    match_image,
)
from .losses import (
    BoxLossResult,
    GflSample,
    box_loss_batch,
    diou_loss,
    gfl_loss,
    giou_loss,
    l1_box_loss,
)
from .pyramid import (
    FeatureMap,
    PyramidWeights,
    fpn_forward,
    make_input_pyramid,
    pafpn_forward,
    pyramid_pipeline,
)
from .schedule import ScheduleConfig, lr_at, schedule_dump

__all__ = [
    "BBox",
    "BoxLossResult",
    "CascadeConfig",
    "Detection",
    "EvalConfig",
    "EvalReport",
    "FeatureMap",
    "GflSample",
    "GroundTruth",
    "PyramidWeights",
    "ScheduleConfig",
    "StageAssignment",
    "area",
    "assign_stage",
    "average_precision",
    "box_loss_batch",
    "cascade_assign",
    "center_distance_sq",
    "diagonal_sq",
    "diou_loss",
    "enclosing_box",
    "evaluate",
    "fpn_forward",
    "gfl_loss",
    "giou_loss",
    "intersection_area",
    "iou",
    "l1_box_loss",
    "lr_at",
    "make_input_pyramid",
    "match_image",
    "nms",
    "pafpn_forward",
    "pyramid_pipeline",
    "schedule_dump",
]
