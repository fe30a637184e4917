"""Deterministic toy-scale feature pyramid: FPN top-down pass plus the
bottom-up augmentation pass.

Level l of a pyramid has spatial size (H0 / 2^l, W0 / 2^l) for a base
size divisible by 32. Operators are fixed: 1x1 lateral convs, 3x3
smoothing convs (zero padding 1), 3x3 stride-2 downsampling convs
(padding 1), nearest-neighbor x2 upsampling, elementwise-add fusion.
There are no biases, so zero input maps to zero output, and with the
default identity activation every pass is exactly linear.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

LEVELS = (2, 3, 4, 5)
WEIGHT_INIT_SCALE = 0.1


class ShapeMismatchError(ValueError):
    """Raised when a level's channels or spatial size break the pyramid contract."""


@dataclass(frozen=True)
class FeatureMap:
    """One dense pyramid level holding a (channels, height, width) array."""

    level: int
    data: np.ndarray

    def __post_init__(self) -> None:
        if self.level not in LEVELS:
            raise ValueError(f"level must be one of {LEVELS}, got {self.level}")
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3:
            raise ValueError(f"feature data must be (C, H, W), got shape {arr.shape}")
        object.__setattr__(self, "data", arr)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


Pyramid = dict[int, FeatureMap]


@dataclass(frozen=True)
class PyramidWeights:
    """All kernels of one pipeline, keyed by level.

    lateral[l]: (out, in_l, 1, 1) applied to backbone level l.
    smooth[l]: (out, out, 3, 3) producing the final map of level l
    (used by the top-down pass for its outputs and by the bottom-up pass
    for levels 3..5).
    downsample[l]: (out, out, 3, 3) stride-2 kernel producing level l of
    the bottom-up pass from level l-1, for l in 3..5.
    """

    lateral: Mapping[int, np.ndarray]
    smooth: Mapping[int, np.ndarray]
    downsample: Mapping[int, np.ndarray]
    seed: int | None = None

    @property
    def out_channels(self) -> int:
        return self.smooth[LEVELS[0]].shape[0]

    @classmethod
    def generate(
        cls,
        seed: int,
        in_channels: int | Mapping[int, int] = 4,
        out_channels: int = 4,
    ) -> "PyramidWeights":
        """Seeded uniform [-0.1, 0.1] kernels; same seed, same weights."""
        if isinstance(in_channels, int):
            in_channels = {l: in_channels for l in LEVELS}
        rng = np.random.default_rng(seed)

        def draw(shape):
            return rng.uniform(-WEIGHT_INIT_SCALE, WEIGHT_INIT_SCALE, size=shape)

        lateral = {l: draw((out_channels, in_channels[l], 1, 1)) for l in LEVELS}
        smooth = {l: draw((out_channels, out_channels, 3, 3)) for l in LEVELS}
        downsample = {l: draw((out_channels, out_channels, 3, 3)) for l in LEVELS[1:]}
        return cls(lateral=lateral, smooth=smooth, downsample=downsample, seed=seed)


def identity_kernel(channels: int) -> np.ndarray:
    """3x3 kernel that is the identity under zero-padded stride-1 convolution."""
    k = np.zeros((channels, channels, 3, 3))
    for c in range(channels):
        k[c, c, 1, 1] = 1.0
    return k


def severed_weights(w: PyramidWeights) -> PyramidWeights:
    """Diagnostic reduction: zero the bottom-up path and make smoothing identity.

    With these weights the bottom-up pass returns its input unchanged, so
    the pafpn pipeline collapses onto the fpn pipeline.
    """
    out = w.out_channels
    return PyramidWeights(
        lateral=dict(w.lateral),
        smooth={l: identity_kernel(out) for l in LEVELS},
        downsample={l: np.zeros_like(k) for l, k in w.downsample.items()},
        seed=w.seed,
    )


def conv2d(x: np.ndarray, kernel: np.ndarray, stride: int = 1, padding: int = 0) -> np.ndarray:
    """Dense 2-D cross-correlation of (Cin, H, W) with (Cout, Cin, kh, kw)."""
    cout, cin, kh, kw = kernel.shape
    if x.shape[0] != cin:
        raise ShapeMismatchError(
            f"channel mismatch: input has {x.shape[0]} channels, kernel expects {cin}"
        )
    if padding:
        x = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    windows = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(1, 2))
    windows = windows[:, ::stride, ::stride]
    return np.einsum("ihwyx,oiyx->ohw", windows, kernel)


def upsample2(x: np.ndarray) -> np.ndarray:
    """Nearest-neighbor x2 upsampling of (C, H, W)."""
    return np.repeat(np.repeat(x, 2, axis=1), 2, axis=2)


def _activate(x: np.ndarray, activation: str) -> np.ndarray:
    if activation == "identity":
        return x
    if activation == "relu":
        return np.maximum(x, 0.0)
    raise ValueError(f"unknown activation {activation!r}")


def _check_levels(maps: Mapping[int, FeatureMap], what: str) -> None:
    missing = [l for l in LEVELS if l not in maps]
    if missing:
        raise ShapeMismatchError(f"{what} is missing levels {missing}")
    for lo, hi in zip(LEVELS, LEVELS[1:]):
        a, b = maps[lo], maps[hi]
        if a.height != 2 * b.height:
            raise ShapeMismatchError(
                f"level {hi}: height {b.height} is not half of level {lo} height {a.height}"
            )
        if a.width != 2 * b.width:
            raise ShapeMismatchError(
                f"level {hi}: width {b.width} is not half of level {lo} width {a.width}"
            )


def fpn_forward(
    c: Mapping[int, FeatureMap],
    w: PyramidWeights,
    activation: str = "identity",
) -> Pyramid:
    """Top-down pass: lateral projections accumulated coarse-to-fine.

    The running top-down sum is kept pre-smoothing; each output level is
    the smoothed (and optionally rectified) sum at that level.
    """
    _check_levels(c, "backbone input")
    for l in LEVELS:
        expect = w.lateral[l].shape[1]
        if c[l].channels != expect:
            raise ShapeMismatchError(
                f"level {l}: expected {expect} input channels, got {c[l].channels}"
            )
    merged: dict[int, np.ndarray] = {}
    merged[5] = conv2d(c[5].data, w.lateral[5])
    for l in (4, 3, 2):
        merged[l] = conv2d(c[l].data, w.lateral[l]) + upsample2(merged[l + 1])
    return {
        l: FeatureMap(l, _activate(conv2d(merged[l], w.smooth[l], padding=1), activation))
        for l in LEVELS
    }


def pafpn_forward(
    p: Mapping[int, FeatureMap],
    w: PyramidWeights,
    activation: str = "identity",
) -> Pyramid:
    """Bottom-up pass: level 2 passes through; each coarser level fuses a
    stride-2 downsampling of the level below with the top-down map."""
    _check_levels(p, "top-down input")
    out = w.out_channels
    for l in LEVELS:
        if p[l].channels != out:
            raise ShapeMismatchError(
                f"level {l}: expected {out} channels, got {p[l].channels}"
            )
    n: dict[int, np.ndarray] = {2: p[2].data}
    for l in (3, 4, 5):
        fused = conv2d(n[l - 1], w.downsample[l], stride=2, padding=1) + p[l].data
        n[l] = _activate(conv2d(fused, w.smooth[l], padding=1), activation)
    return {l: FeatureMap(l, n[l]) for l in LEVELS}


def pyramid_pipeline(
    c: Mapping[int, FeatureMap],
    w: PyramidWeights,
    mode: str = "fpn",
    activation: str = "identity",
) -> Pyramid:
    """Run the top-down pass alone (fpn) or followed by the bottom-up pass (pafpn)."""
    if mode not in ("fpn", "pafpn"):
        raise ValueError(f"mode must be 'fpn' or 'pafpn', got {mode!r}")
    p = fpn_forward(c, w, activation=activation)
    if mode == "fpn":
        return p
    return pafpn_forward(p, w, activation=activation)


def make_input_pyramid(
    seed: int,
    base_size: int = 64,
    in_channels: int | Mapping[int, int] = 4,
) -> Pyramid:
    """Seeded uniform [-1, 1] backbone levels for a base size divisible by 32."""
    if base_size <= 0 or base_size % 32 != 0:
        raise ValueError(f"base size must be a positive multiple of 32, got {base_size}")
    if isinstance(in_channels, int):
        in_channels = {l: in_channels for l in LEVELS}
    rng = np.random.default_rng(seed)
    out: Pyramid = {}
    for l in LEVELS:
        side = base_size // (2**l)
        out[l] = FeatureMap(l, rng.uniform(-1.0, 1.0, size=(in_channels[l], side, side)))
    return out
