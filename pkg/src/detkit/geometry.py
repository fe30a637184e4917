"""Axis-aligned bounding-box algebra.

Boxes live in corner form (x1, y1, x2, y2) with continuous pixel
coordinates; COCO-style (x, y, w, h) is converted at the I/O boundary
only. All functions here are pure and operate on immutable values.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in corner form. Zero-area (degenerate) boxes are allowed."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self) -> None:
        for name in ("x1", "y1", "x2", "y2"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (self.x1 <= self.x2 and self.y1 <= self.y2):
            raise ValueError(f"box corners out of order: {self}")

    @classmethod
    def from_xywh(cls, x: float, y: float, w: float, h: float) -> "BBox":
        if w < 0 or h < 0:
            raise ValueError(f"negative box size: w={w}, h={h}")
        return cls(x, y, x + w, y + h)

    def to_xywh(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2 - self.x1, self.y2 - self.y1)

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)

    def translated(self, dx: float, dy: float) -> "BBox":
        return BBox(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)


def area(b: BBox) -> float:
    """Box area, zero for degenerate boxes."""
    return (b.x2 - b.x1) * (b.y2 - b.y1)


def intersection_area(a: BBox, b: BBox) -> float:
    """Area of the overlap region (zero when disjoint)."""
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    return iw * ih


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union in [0, 1]; zero when the union has zero area."""
    inter = intersection_area(a, b)
    union = area(a) + area(b) - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def enclosing_box(a: BBox, b: BBox) -> BBox:
    """Smallest box covering both inputs."""
    return BBox(
        min(a.x1, b.x1),
        min(a.y1, b.y1),
        max(a.x2, b.x2),
        max(a.y2, b.y2),
    )


def center_distance_sq(a: BBox, b: BBox) -> float:
    """Squared Euclidean distance between the box centers."""
    acx, acy = a.center
    bcx, bcy = b.center
    return (acx - bcx) ** 2 + (acy - bcy) ** 2


def diagonal_sq(b: BBox) -> float:
    """Squared diagonal length of a box."""
    return (b.x2 - b.x1) ** 2 + (b.y2 - b.y1) ** 2
