"""Finite-difference verification of the analytic loss gradients.

Central differences only touch loss *values*, so they are an oracle
independent of the gradient code. Relative error uses the scale
max(1, |analytic|, |numeric|), i.e. absolute for small gradients and
relative for large ones. Samplers avoid non-differentiable points: box
pairs stay at least 1e-3 away from every min/max branch switch, and
focal samples keep the prediction away from the |y - yhat| kink where
the beta < 1 weight has unbounded slope.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .geometry import BBox
from .losses import GflSample, diou_loss, gfl_loss, giou_loss, l1_box_loss

BOX_TOLERANCE = 1e-4
GFL_TOLERANCE = 1e-6
BOX_STEP = 1e-5
GFL_STEP = 1e-6
KINK_MARGIN = 1e-3
GFL_BETAS = (0.5, 1.0, 2.0)

BOX_LOSSES = {"diou": diou_loss, "giou": giou_loss, "l1": l1_box_loss}
LOSS_NAMES = (*BOX_LOSSES, "gfl")


@dataclass(frozen=True)
class GradCheckResult:
    loss: str
    trials: int
    max_rel_err: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= self.tolerance


def central_difference(f: Callable[[np.ndarray], float], x: np.ndarray, h: float) -> np.ndarray:
    """Central-difference gradient of a scalar function."""
    grad = np.zeros_like(x, dtype=float)
    for i in range(x.size):
        plus = x.copy()
        minus = x.copy()
        plus[i] += h
        minus[i] -= h
        grad[i] = (f(plus) - f(minus)) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / scale))


def sample_box_pair(rng: np.random.Generator) -> tuple[BBox, BBox]:
    """Non-degenerate box pair clear of every min/max branch switch."""
    while True:
        coords = rng.uniform(0.0, 64.0, size=8)
        px1, px2 = sorted(coords[0:2])
        py1, py2 = sorted(coords[2:4])
        gx1, gx2 = sorted(coords[4:6])
        gy1, gy2 = sorted(coords[6:8])
        if min(px2 - px1, py2 - py1, gx2 - gx1, gy2 - gy1) < 0.05:
            continue
        deltas = (abs(px1 - gx1), abs(py1 - gy1), abs(px2 - gx2), abs(py2 - gy2))
        if min(deltas) < KINK_MARGIN:
            continue
        # stay away from the empty-intersection boundary as well
        iw = min(px2, gx2) - max(px1, gx1)
        ih = min(py2, gy2) - max(py1, gy1)
        if abs(iw) < KINK_MARGIN or abs(ih) < KINK_MARGIN:
            continue
        return BBox(px1, py1, px2, py2), BBox(gx1, gy1, gx2, gy2)


def sample_gfl(rng: np.random.Generator, beta: float) -> GflSample:
    """Random bracketed sample with the prediction clear of the focal kink."""
    while True:
        y_l = rng.uniform(0.0, 0.8)
        y_r = y_l + rng.uniform(0.1, 0.2)
        y = rng.uniform(y_l, y_r)
        logits = rng.uniform(-3.0, 3.0, size=2)
        sample = GflSample(y=y, y_l=y_l, y_r=y_r, logits=tuple(logits), beta=beta)
        p_r = 1.0 / (1.0 + np.exp(logits[0] - logits[1]))
        y_hat = y_l + (y_r - y_l) * p_r
        if abs(y - y_hat) >= 0.05:
            return sample


def check_box_loss(
    loss: str,
    trials: int = 1000,
    seed: int = 0,
    step: float = BOX_STEP,
    tolerance: float = BOX_TOLERANCE,
    perturb: float = 0.0,
) -> GradCheckResult:
    """Compare the analytic gradient of one box loss against central
    differences on ``trials`` kink-excluded random pairs.

    ``perturb`` adds a constant to every analytic component; it exists so
    the harness can prove it catches wrong gradients.
    """
    fn = BOX_LOSSES[loss]
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        pred, gt = sample_box_pair(rng)
        analytic = fn(pred, gt).grad_pred + perturb
        numeric = central_difference(
            lambda v: fn(BBox(*v), gt).value,
            np.array([pred.x1, pred.y1, pred.x2, pred.y2]),
            step,
        )
        worst = max(worst, relative_error(analytic, numeric))
    return GradCheckResult(loss, trials, worst, tolerance)


def check_gfl(
    trials: int = 1000,
    seed: int = 0,
    step: float = GFL_STEP,
    tolerance: float = GFL_TOLERANCE,
    betas: tuple[float, ...] = GFL_BETAS,
    perturb: float = 0.0,
) -> GradCheckResult:
    """Compare the analytic focal-loss gradient against central differences,
    cycling through the configured beta values."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(trials):
        beta = betas[i % len(betas)]
        s = sample_gfl(rng, beta)
        analytic = gfl_loss(s)[1] + perturb
        numeric = central_difference(
            lambda z: gfl_loss(GflSample(s.y, s.y_l, s.y_r, (z[0], z[1]), beta))[0],
            np.array(s.logits),
            step,
        )
        worst = max(worst, relative_error(analytic, numeric))
    return GradCheckResult("gfl", trials, worst, tolerance)


def run_check(loss: str, trials: int, seed: int, perturb: float = 0.0) -> GradCheckResult:
    """Dispatch by loss name; used by the command-line front end."""
    if loss == "gfl":
        return check_gfl(trials=trials, seed=seed, perturb=perturb)
    if loss in BOX_LOSSES:
        return check_box_loss(loss, trials=trials, seed=seed, perturb=perturb)
    raise ValueError(f"unknown loss {loss!r}, expected one of {LOSS_NAMES}")
