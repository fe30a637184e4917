import io
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from detkit.schedule import ScheduleConfig, lr_at, schedule_dump, write_schedule_csv

BASE = ScheduleConfig(base_lr=0.001, total_iters=20000)


class TestConfig:
    def test_defaults(self):
        assert BASE.warmup_iters == 3000
        assert BASE.min_lr == 0.0
        assert BASE.actual_batch == BASE.base_batch

    def test_validation(self):
        with pytest.raises(ValueError):
            ScheduleConfig(base_lr=0.0, total_iters=10)
        with pytest.raises(ValueError):
            ScheduleConfig(base_lr=0.1, total_iters=3000)  # warmup not < total
        with pytest.raises(ValueError):
            ScheduleConfig(base_lr=0.1, total_iters=10, warmup_iters=5, min_lr=0.2)
        with pytest.raises(ValueError):
            ScheduleConfig(base_lr=0.1, total_iters=10, warmup_iters=5, base_batch=0)

    def test_batch_scaling(self):
        cfg = ScheduleConfig(base_lr=0.001, total_iters=10000, base_batch=16, actual_batch=48)
        assert cfg.scaled_base_lr == pytest.approx(0.003)


class TestLrAt:
    def test_starts_at_zero(self):
        assert lr_at(BASE, 0) == 0.0

    def test_reaches_base_at_warmup_end(self):
        assert lr_at(BASE, 3000) == pytest.approx(0.001, abs=1e-15)

    def test_half_decay_point(self):
        cfg = ScheduleConfig(base_lr=0.001, total_iters=19000, warmup_iters=3000)
        mid = 3000 + (19000 - 3000) // 2  # even span, exact midpoint
        assert lr_at(cfg, mid) == pytest.approx(0.0005, abs=1e-12)

    def test_ends_at_min_lr(self):
        assert lr_at(BASE, 20000) == pytest.approx(0.0, abs=1e-18)
        cfg = ScheduleConfig(base_lr=0.001, total_iters=10000, min_lr=1e-5)
        assert lr_at(cfg, 10000) == pytest.approx(1e-5, abs=1e-18)

    def test_continuity_at_warmup_boundary(self):
        left = lr_at(BASE, 2999) + BASE.scaled_base_lr / BASE.warmup_iters
        right = lr_at(BASE, 3000)
        assert abs(left - right) <= 1e-12

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            lr_at(BASE, -1)
        with pytest.raises(ValueError):
            lr_at(BASE, 20001)

    @settings(max_examples=200)
    @given(it=st.integers(0, 20000), k=st.integers(1, 8))
    def test_batch_scaling_homogeneity(self, it, k):
        cfg = ScheduleConfig(
            base_lr=0.001, total_iters=20000, base_batch=4, actual_batch=4 * k
        )
        assert lr_at(cfg, it) == pytest.approx(k * lr_at(BASE, it), rel=1e-12, abs=0)

    @settings(max_examples=100)
    @given(it=st.integers(0, 19999))
    def test_piecewise_monotone(self, it):
        a, b = lr_at(BASE, it), lr_at(BASE, it + 1)
        if it + 1 <= BASE.warmup_iters:
            assert b >= a
        if it >= BASE.warmup_iters:
            assert b <= a


class TestDump:
    def test_stride_equal_to_total(self):
        rows = schedule_dump(BASE, 20000)
        assert rows == [(0, 0.0), (20000, lr_at(BASE, 20000))]

    def test_covers_endpoint_for_ragged_stride(self):
        rows = schedule_dump(BASE, 7777)
        assert rows[0][0] == 0
        assert rows[-1][0] == 20000

    def test_doubling_batch_doubles_every_rate(self):
        doubled = ScheduleConfig(
            base_lr=0.001, total_iters=20000, base_batch=2, actual_batch=4
        )
        for (i1, v1), (i2, v2) in zip(schedule_dump(BASE, 500), schedule_dump(doubled, 500)):
            assert i1 == i2
            assert v2 == pytest.approx(2 * v1, rel=1e-12, abs=0)

    def test_monotone_segments(self):
        rows = schedule_dump(BASE, 100)
        warm = [v for i, v in rows if i <= 3000]
        decay = [v for i, v in rows if i >= 3000]
        assert all(b >= a for a, b in zip(warm, warm[1:]))
        assert all(b <= a for a, b in zip(decay, decay[1:]))

    def test_stride_validated(self):
        with pytest.raises(ValueError):
            schedule_dump(BASE, 0)

    def test_csv_format(self):
        buf = io.StringIO()
        write_schedule_csv(schedule_dump(BASE, 10000), buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == "iter,lr"
        assert lines[1] == "0,0"
        it, lr = lines[2].split(",")
        assert it == "10000"
        # 9 significant digits
        assert float(lr) == pytest.approx(lr_at(BASE, 10000), rel=1e-8)
        assert len(lr.replace(".", "").replace("-", "").lstrip("0e").split("e")[0]) <= 9
