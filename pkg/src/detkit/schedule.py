"""Learning-rate schedule: linear warmup from zero, cosine decay after,
with linear batch-size auto-scaling of the base rate."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import IO, Iterable

DEFAULT_WARMUP_ITERS = 3000


@dataclass(frozen=True)
class ScheduleConfig:
    base_lr: float
    total_iters: int
    warmup_iters: int = DEFAULT_WARMUP_ITERS
    min_lr: float = 0.0
    base_batch: int = 1
    actual_batch: int | None = None

    def __post_init__(self) -> None:
        if self.actual_batch is None:
            object.__setattr__(self, "actual_batch", self.base_batch)
        if self.base_lr <= 0:
            raise ValueError(f"base_lr must be positive, got {self.base_lr}")
        if not 0 <= self.min_lr < self.base_lr:
            raise ValueError(f"need 0 <= min_lr < base_lr, got min_lr={self.min_lr}")
        if self.warmup_iters < 0 or self.warmup_iters >= self.total_iters:
            raise ValueError(
                f"need 0 <= warmup_iters < total_iters, got "
                f"{self.warmup_iters} / {self.total_iters}"
            )
        if self.base_batch < 1 or self.actual_batch < 1:
            raise ValueError("batch sizes must be >= 1")

    @property
    def scaled_base_lr(self) -> float:
        """Base rate scaled linearly by the actual-to-base batch ratio."""
        return self.base_lr * self.actual_batch / self.base_batch


def lr_at(cfg: ScheduleConfig, iteration: int) -> float:
    """Learning rate at one iteration in [0, total_iters].

    Warmup ramps linearly from 0 to the scaled base rate; afterwards a
    half cosine decays from the scaled base rate to min_lr at the end.
    """
    if not 0 <= iteration <= cfg.total_iters:
        raise ValueError(
            f"iteration {iteration} outside schedule range [0, {cfg.total_iters}]"
        )
    peak = cfg.scaled_base_lr
    if iteration < cfg.warmup_iters:
        return peak * iteration / cfg.warmup_iters
    progress = (iteration - cfg.warmup_iters) / (cfg.total_iters - cfg.warmup_iters)
    return cfg.min_lr + (peak - cfg.min_lr) * 0.5 * (1.0 + math.cos(math.pi * progress))


def schedule_dump(cfg: ScheduleConfig, stride: int) -> list[tuple[int, float]]:
    """Sample the curve every ``stride`` iterations, always ending at total_iters."""
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    iters = list(range(0, cfg.total_iters, stride))
    iters.append(cfg.total_iters)
    return [(i, lr_at(cfg, i)) for i in iters]


def write_schedule_csv(rows: Iterable[tuple[int, float]], stream: IO[str]) -> None:
    """CSV with header iter,lr; rates carry 9 significant digits."""
    stream.write("iter,lr\n")
    for it, lr in rows:
        stream.write(f"{it},{lr:.9g}\n")
