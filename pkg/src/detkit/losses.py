"""Box-regression and quality-focal losses with analytic gradients.

Three per-pair box losses (distance-IoU, generalized-IoU, coordinate L1)
return both the loss value and the exact gradient with respect to the
predicted box corners. The focal loss over a bracketed quality label
returns its value and the gradient through the two-way softmax.

Min/max branch switches (intersection corners, enclosing-box corners,
the empty-intersection boundary, coordinate ties) are genuine kinks; at
a kink a one-sided subgradient is returned, with the convention that the
predicted coordinate is treated as the active branch on exact ties.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import BBox, area


class DegenerateEnclosureError(ValueError):
    """Raised when the enclosing box of the pair is too degenerate to normalize by."""


class InvalidBracketError(ValueError):
    """Raised when a quality label does not sit inside its discretization bracket."""


@dataclass(frozen=True)
class BoxLossResult:
    """Loss value plus d(loss)/d(x1, y1, x2, y2) of the predicted box."""

    value: float
    grad_pred: np.ndarray


@dataclass
class GflSample:
    """One focal-loss sample: true quality y bracketed by nodes y_l < y_r.

    ``logits`` are the two pre-normalization scores for the bracket nodes;
    the probabilities are their two-way softmax, so p_l + p_r = 1 holds by
    construction. ``beta`` controls the slope of the focal weight.
    """

    y: float
    y_l: float
    y_r: float
    logits: tuple[float, float]
    beta: float = 2.0

    def __post_init__(self) -> None:
        self.logits = (float(self.logits[0]), float(self.logits[1]))
        if len(self.logits) != 2 or not all(math.isfinite(z) for z in self.logits):
            raise ValueError(f"logits must be two finite reals, got {self.logits}")
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if not self.y_l < self.y_r:
            raise InvalidBracketError(f"bracket is empty: y_l={self.y_l} >= y_r={self.y_r}")
        if not self.y_l <= self.y <= self.y_r:
            raise InvalidBracketError(
                f"label y={self.y} outside bracket [{self.y_l}, {self.y_r}]"
            )


def _iou_with_grad(pred: BBox, gt: BBox):
    """IoU plus gradients of IoU, union, intersection w.r.t. pred corners."""
    px1, py1, px2, py2 = pred.x1, pred.y1, pred.x2, pred.y2
    gx1, gy1, gx2, gy2 = gt.x1, gt.y1, gt.x2, gt.y2

    ix1 = max(px1, gx1)
    iy1 = max(py1, gy1)
    ix2 = min(px2, gx2)
    iy2 = min(py2, gy2)
    # active-branch indicators (pred wins ties)
    d_ix1 = 1.0 if px1 >= gx1 else 0.0
    d_iy1 = 1.0 if py1 >= gy1 else 0.0
    d_ix2 = 1.0 if px2 <= gx2 else 0.0
    d_iy2 = 1.0 if py2 <= gy2 else 0.0

    iw = ix2 - ix1
    ih = iy2 - iy1
    if iw > 0.0 and ih > 0.0:
        inter = iw * ih
        g_inter = np.array(
            [-ih * d_ix1, -iw * d_iy1, ih * d_ix2, iw * d_iy2]
        )
    else:
        inter = 0.0
        g_inter = np.zeros(4)

    pw = px2 - px1
    ph = py2 - py1
    g_area = np.array([-ph, -pw, ph, pw])

    union = pw * ph + area(gt) - inter
    g_union = g_area - g_inter

    if union <= 0.0:
        return 0.0, np.zeros(4), union, g_union
    iou_val = inter / union
    g_iou = (g_inter * union - inter * g_union) / (union * union)
    return iou_val, g_iou, union, g_union


def _enclosure_with_grad(pred: BBox, gt: BBox):
    """Enclosing-box width/height, their gradients w.r.t. pred corners."""
    ex1 = min(pred.x1, gt.x1)
    ey1 = min(pred.y1, gt.y1)
    ex2 = max(pred.x2, gt.x2)
    ey2 = max(pred.y2, gt.y2)
    d_ex1 = 1.0 if pred.x1 <= gt.x1 else 0.0
    d_ey1 = 1.0 if pred.y1 <= gt.y1 else 0.0
    d_ex2 = 1.0 if pred.x2 >= gt.x2 else 0.0
    d_ey2 = 1.0 if pred.y2 >= gt.y2 else 0.0
    ew = ex2 - ex1
    eh = ey2 - ey1
    g_ew = np.array([-d_ex1, 0.0, d_ex2, 0.0])
    g_eh = np.array([0.0, -d_ey1, 0.0, d_ey2])
    return ew, eh, g_ew, g_eh


def diou_loss(pred: BBox, gt: BBox) -> BoxLossResult:
    """Distance-IoU loss: 1 - IoU + (center distance)^2 / (enclosing diagonal)^2."""
    iou_val, g_iou, _, _ = _iou_with_grad(pred, gt)
    ew, eh, g_ew, g_eh = _enclosure_with_grad(pred, gt)
    c2 = ew * ew + eh * eh
    if c2 <= 0.0:
        raise DegenerateEnclosureError(
            "enclosing box has zero diagonal (both boxes collapse to one point)"
        )
    g_c2 = 2.0 * ew * g_ew + 2.0 * eh * g_eh

    pcx, pcy = pred.center
    gcx, gcy = gt.center
    rho2 = (pcx - gcx) ** 2 + (pcy - gcy) ** 2
    # d(rho2)/d(corner) = 2 * (center delta) * d(center)/d(corner), d(center)/d(corner) = 1/2
    g_rho2 = np.array([pcx - gcx, pcy - gcy, pcx - gcx, pcy - gcy])

    penalty = rho2 / c2
    g_penalty = (g_rho2 * c2 - rho2 * g_c2) / (c2 * c2)
    return BoxLossResult(1.0 - iou_val + penalty, -g_iou + g_penalty)


def giou_loss(pred: BBox, gt: BBox) -> BoxLossResult:
    """Generalized-IoU loss: 1 - IoU + |hull minus union| / |hull|."""
    iou_val, g_iou, union, g_union = _iou_with_grad(pred, gt)
    ew, eh, g_ew, g_eh = _enclosure_with_grad(pred, gt)
    hull = ew * eh
    if hull <= 0.0:
        raise DegenerateEnclosureError("enclosing box has zero area")
    g_hull = eh * g_ew + ew * g_eh

    slack = (hull - union) / hull
    g_slack = ((g_hull - g_union) * hull - (hull - union) * g_hull) / (hull * hull)
    return BoxLossResult(1.0 - iou_val + slack, -g_iou + g_slack)


def l1_box_loss(pred: BBox, gt: BBox) -> BoxLossResult:
    """Sum of absolute corner differences; subgradient 0 at coordinate ties."""
    diffs = np.array(
        [pred.x1 - gt.x1, pred.y1 - gt.y1, pred.x2 - gt.x2, pred.y2 - gt.y2]
    )
    return BoxLossResult(float(np.abs(diffs).sum()), np.sign(diffs))


def gfl_loss(s: GflSample) -> tuple[float, np.ndarray]:
    """Focal loss over a bracketed quality label; returns (value, d(value)/d(logits)).

    value = -|y - yhat|^beta * ((y_r - y) log p_l + (y - y_l) log p_r)
    with yhat = y_l p_l + y_r p_r and (p_l, p_r) the softmax of the logits.
    Log-probabilities come from a fused log-sum-exp, never from log of a
    stored probability. Conventions: 0 * log 0 = 0 for a vanishing linear
    weight, and |.|^0 = 1 everywhere when beta = 0.
    """
    zl, zr = s.logits
    m = max(zl, zr)
    lse = m + math.log(math.exp(zl - m) + math.exp(zr - m))
    log_pl = zl - lse
    log_pr = zr - lse
    pl = math.exp(log_pl)
    pr = math.exp(log_pr)

    y, y_l, y_r = s.y, s.y_l, s.y_r
    wl = y_r - y
    wr = y - y_l
    ce = (wl * log_pl if wl != 0.0 else 0.0) + (wr * log_pr if wr != 0.0 else 0.0)

    y_hat = y_l * pl + y_r * pr
    delta = y - y_hat
    if s.beta == 0.0:
        weight = 1.0
        dweight_dyhat = 0.0
    else:
        weight = abs(delta) ** s.beta
        if delta == 0.0:
            dweight_dyhat = 0.0  # subgradient at the focal kink
        else:
            dweight_dyhat = -s.beta * abs(delta) ** (s.beta - 1.0) * math.copysign(1.0, delta)

    value = -weight * ce

    span = y_r - y_l
    dyhat_dzl = pl * pr * (y_l - y_r)
    dyhat_dzr = pl * pr * (y_r - y_l)
    dce_dzl = wl - pl * span
    dce_dzr = wr - pr * span
    grad = np.array(
        [
            -(dweight_dyhat * dyhat_dzl * ce + weight * dce_dzl),
            -(dweight_dyhat * dyhat_dzr * ce + weight * dce_dzr),
        ]
    )
    return value, grad


_BOX_LOSSES = {"diou": diou_loss, "giou": giou_loss, "l1": l1_box_loss}


def box_loss_batch(
    preds: list[BBox],
    gts: list[BBox],
    loss: str = "diou",
    reduction: str = "mean",
) -> tuple[float, np.ndarray]:
    """Reduce a per-pair box loss over aligned lists.

    Returns the reduced value and the (N, 4) per-pair gradients scaled to
    match it (so for ``mean`` each row is grad / N).
    """
    if loss not in _BOX_LOSSES:
        raise ValueError(f"unknown loss {loss!r}, expected one of {sorted(_BOX_LOSSES)}")
    if reduction not in ("mean", "sum"):
        raise ValueError(f"unknown reduction {reduction!r}, expected 'mean' or 'sum'")
    fn = _BOX_LOSSES[loss]
    results = [fn(p, g) for p, g in zip(preds, gts, strict=True)]
    if not results:
        return 0.0, np.zeros((0, 4))
    values = np.array([r.value for r in results])
    grads = np.stack([r.grad_pred for r in results])
    if reduction == "mean":
        return float(values.mean()), grads / len(results)
    return float(values.sum()), grads
