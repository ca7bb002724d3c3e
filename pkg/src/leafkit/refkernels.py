"""Pure-numpy inference-mode reference kernels for the network's novel
operations: pyramid alignment and adaptive fusion, the depthwise block,
the four-branch asymmetric perception block, the dual-residual head,
centerness, the dynamic mask controller, and the two top-down fusion
strategies.

All convolutions are cross-correlations with zero "same" padding; batch
normalization appears only as a folded per-channel affine. Nothing here
mutates its inputs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ValidationError

CONTROLLER_PARAM_COUNT = 169
# 10-channel input (8 features + 2 relative coordinates), 8-channel hidden
_LAYER_SHAPES = [(8, 10), (8, 8), (1, 8)]  # (out, in) of the 1x1 layers
DASP_RESIDUAL_GAIN = 0.3


def _check_map(x, name: str = "feature map") -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 3:
        raise ValidationError(f"{name} must be rank-3 (C, H, W), got shape "
                              f"{x.shape}")
    if min(x.shape) < 1:
        raise ValidationError(f"{name} has an empty axis: {x.shape}")
    if not np.isfinite(x).all():
        raise ValidationError(f"{name} contains non-finite values")
    return x


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def softmax(v: np.ndarray) -> np.ndarray:
    e = np.exp(v - np.max(v))
    return e / e.sum()


@dataclass
class ConvParams:
    weight: np.ndarray  # (out_ch, in_ch_per_group, kH, kW)
    bias: Optional[np.ndarray] = None
    stride: int = 1
    groups: int = 1
    scale: Optional[np.ndarray] = None  # folded-BN per-channel affine
    shift: Optional[np.ndarray] = None

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=float)
        if self.weight.ndim != 4:
            raise ValidationError("kernel must be (out, in/groups, kH, kW)")
        if self.stride < 1:
            raise ValidationError(f"stride {self.stride} < 1")
        out_ch = self.weight.shape[0]
        if out_ch % self.groups != 0:
            raise ValidationError("output channels not divisible by groups")
        if self.bias is None:
            self.bias = np.zeros(out_ch)
        self.bias = np.asarray(self.bias, dtype=float)
        if self.bias.shape != (out_ch,):
            raise ValidationError("bias length must equal output channels")
        for name in ("scale", "shift"):
            v = getattr(self, name)
            if v is not None:
                v = np.asarray(v, dtype=float)
                if v.shape != (out_ch,):
                    raise ValidationError(f"{name} length must equal output "
                                          "channels")
                setattr(self, name, v)

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1] * self.groups


def _affine(out: np.ndarray, p: ConvParams) -> np.ndarray:
    if p.scale is not None:
        out = out * p.scale[:, None, None]
    if p.shift is not None:
        out = out + p.shift[:, None, None]
    return out


def conv2d(x, p: ConvParams, apply_affine: bool = True) -> np.ndarray:
    """Grouped same-padded cross-correlation, then bias and folded affine."""
    x = _check_map(x)
    out_ch, in_per_group, kh, kw = p.weight.shape
    if x.shape[0] != p.in_channels:
        raise ValidationError(f"input has {x.shape[0]} channels, kernel "
                              f"expects {p.in_channels}")
    _, h, w = x.shape
    pad_top, pad_left = (kh - 1) // 2, (kw - 1) // 2
    pad_bot, pad_right = kh - 1 - pad_top, kw - 1 - pad_left
    xp = np.pad(x, ((0, 0), (pad_top, pad_bot), (pad_left, pad_right)))
    out_h = (h - 1) // p.stride + 1
    out_w = (w - 1) // p.stride + 1
    out = np.zeros((out_ch, out_h, out_w))
    out_per_group = out_ch // p.groups
    for o in range(out_ch):
        g = o // out_per_group
        acc = np.zeros((out_h, out_w))
        for i in range(in_per_group):
            ch = g * in_per_group + i
            for r in range(kh):
                for c in range(kw):
                    patch = xp[ch, r:r + h:p.stride, c:c + w:p.stride]
                    acc += p.weight[o, i, r, c] * patch[:out_h, :out_w]
        out[o] = acc + p.bias[o]
    return _affine(out, p) if apply_affine else out


# ---------------------------------------------------------------------------
# resolution alignment and adaptive fusion


def bilinear_resize(x, out_h: int, out_w: int) -> np.ndarray:
    """Separable bilinear resize with endpoints pinned to the corners."""
    x = _check_map(x)
    c, h, w = x.shape
    ys = np.zeros(out_h) if h == 1 else np.linspace(0.0, h - 1.0, out_h)
    xs = np.zeros(out_w) if w == 1 else np.linspace(0.0, w - 1.0, out_w)
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    y1 = np.clip(y0 + 1, 0, h - 1)
    fy = ys - y0
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    x1 = np.clip(x0 + 1, 0, w - 1)
    fx = xs - x0
    rows = x[:, y0, :] * (1.0 - fy)[None, :, None] + \
        x[:, y1, :] * fy[None, :, None]
    return rows[:, :, x0] * (1.0 - fx)[None, None, :] + \
        rows[:, :, x1] * fx[None, None, :]


def max_pool(x, factor: int) -> np.ndarray:
    x = _check_map(x)
    c, h, w = x.shape
    if h % factor or w % factor:
        raise ValidationError(f"{h}x{w} map not divisible by pool factor "
                              f"{factor}")
    return x.reshape(c, h // factor, factor, w // factor, factor).max(
        axis=(2, 4))


def align_level(src, target_hw: tuple[int, int], mode: str) -> np.ndarray:
    """Resolution alignment: bilinear up, max-pool down, identity on match."""
    src = _check_map(src)
    th, tw = target_hw
    _, h, w = src.shape
    if (h, w) == (th, tw):
        return src.copy()
    if mode == "up":
        if th % h or tw % w:
            raise ValidationError(f"non-integral upsample ratio {h}x{w} -> "
                                  f"{th}x{tw}")
        return bilinear_resize(src, th, tw)
    if mode == "down":
        if h % th or w % tw or h // th != w // tw:
            raise ValidationError(f"non-integral downsample ratio {h}x{w} -> "
                                  f"{th}x{tw}")
        return max_pool(src, h // th)
    raise ValidationError(f"unknown alignment mode '{mode}'")


def asff_fuse(sources: Sequence[np.ndarray], weights,
              target_hw: tuple[int, int]) -> np.ndarray:
    """Normalized weighted sum of resolution-aligned pyramid sources.

    Weights must be nonnegative and are L1-normalized before mixing, so a
    one-hot weight vector returns the corresponding aligned source exactly.
    """
    sources = [_check_map(s, f"source {k}") for k, s in enumerate(sources)]
    weights = np.asarray(weights, dtype=float)
    if len(sources) == 0 or weights.shape != (len(sources),):
        raise ValidationError("need one weight per source")
    if weights.min() < 0 or weights.sum() <= 0:
        raise ValidationError("weights must be nonnegative with positive sum")
    channels = {s.shape[0] for s in sources}
    if len(channels) != 1:
        raise ValidationError(f"channel counts differ across sources: "
                              f"{sorted(channels)}")
    th, tw = target_hw
    w = weights / weights.sum()
    out = np.zeros((sources[0].shape[0], th, tw))
    for wk, src in zip(w, sources):
        mode = "up" if src.shape[1] * src.shape[2] < th * tw else "down"
        out += wk * align_level(src, (th, tw), mode)
    return out


# ---------------------------------------------------------------------------
# depthwise block and DASP branches


@dataclass
class DwBlockParams:
    depthwise: ConvParams  # groups == input channels
    pointwise: ConvParams  # 1x1 channel expansion; carries the folded BN


def dwconv_block(x, p: DwBlockParams) -> np.ndarray:
    """Depthwise conv -> pointwise conv -> folded affine -> ReLU."""
    x = _check_map(x)
    if p.depthwise.groups != x.shape[0]:
        raise ValidationError("depthwise kernel groups must equal input "
                              "channels")
    y = conv2d(x, p.depthwise)
    y = conv2d(y, p.pointwise)
    return relu(y)


def _bilinear_sample(plane: np.ndarray, ys: np.ndarray,
                     xs: np.ndarray) -> np.ndarray:
    """Sample a 2-D plane at fractional positions, zero outside bounds."""
    h, w = plane.shape
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    fy = ys - y0
    fx = xs - x0
    out = np.zeros(ys.shape)
    for dy, wy in ((0, 1.0 - fy), (1, fy)):
        for dx, wx in ((0, 1.0 - fx), (1, fx)):
            yy = y0 + dy
            xx = x0 + dx
            valid = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
            vals = np.where(valid, plane[np.clip(yy, 0, h - 1),
                                         np.clip(xx, 0, w - 1)], 0.0)
            out += wy * wx * vals
    return out


def deform_conv(x, p: ConvParams, offsets) -> np.ndarray:
    """Deformable convolution: per-position fractional sampling offsets."""
    x = _check_map(x)
    offsets = np.asarray(offsets, dtype=float)
    out_ch, in_ch, kh, kw = p.weight.shape
    _, h, w = x.shape
    if x.shape[0] != in_ch or p.groups != 1:
        raise ValidationError("deformable kernel must be ungrouped and match "
                              "input channels")
    if offsets.shape != (2 * kh * kw, h, w):
        raise ValidationError(f"offset field must be ({2 * kh * kw}, {h}, "
                              f"{w}), got {offsets.shape}")
    pad_top, pad_left = (kh - 1) // 2, (kw - 1) // 2
    rows = np.arange(h)[:, None] * np.ones((1, w))
    cols = np.ones((h, 1)) * np.arange(w)[None, :]
    out = np.zeros((out_ch, h, w))
    for r in range(kh):
        for c in range(kw):
            k = r * kw + c
            ys = rows + (r - pad_top) + offsets[2 * k]
            xs = cols + (c - pad_left) + offsets[2 * k + 1]
            for i in range(in_ch):
                sampled = _bilinear_sample(x[i], ys, xs)
                for o in range(out_ch):
                    out[o] += p.weight[o, i, r, c] * sampled
    out += p.bias[:, None, None]
    return _affine(out, p)


def shape_conv(x, kind: str, p: ConvParams, offsets=None) -> np.ndarray:
    """One of the four branch geometries: 1xK, Kx1, depthwise KxK, or
    deformable KxK."""
    x = _check_map(x)
    kh, kw = p.weight.shape[2:]
    if kind == "horizontal":
        if kh != 1:
            raise ValidationError(f"horizontal branch needs a 1xK kernel, "
                                  f"got {kh}x{kw}")
        return conv2d(x, p)
    if kind == "vertical":
        if kw != 1:
            raise ValidationError(f"vertical branch needs a Kx1 kernel, got "
                                  f"{kh}x{kw}")
        return conv2d(x, p)
    if kind == "deep":
        if p.groups != x.shape[0]:
            raise ValidationError("deep branch must be depthwise (groups == "
                                  "channels)")
        return conv2d(x, p)
    if kind == "deform":
        if offsets is None:
            raise ValidationError("deformable branch requires an offset "
                                  "field")
        return deform_conv(x, p, offsets)
    raise ValidationError(f"unknown branch kind '{kind}'")


@dataclass
class DaspParams:
    horizontal: ConvParams
    vertical: ConvParams
    deep: ConvParams
    deform: ConvParams
    deform_offsets: np.ndarray
    projection: ConvParams  # 1x1, restores the full channel depth


def dasp_concat(x_up, p: DaspParams) -> np.ndarray:
    """Split -> four shape branches -> concat -> 1x1 projection (the
    pre-residual DASP output)."""
    x_up = _check_map(x_up)
    c = x_up.shape[0]
    if c % 4:
        raise ValidationError(f"channel count {c} not divisible by 4")
    q = c // 4
    parts = [
        shape_conv(x_up[0 * q:1 * q], "horizontal", p.horizontal),
        shape_conv(x_up[1 * q:2 * q], "vertical", p.vertical),
        shape_conv(x_up[2 * q:3 * q], "deep", p.deep),
        shape_conv(x_up[3 * q:4 * q], "deform", p.deform, p.deform_offsets),
    ]
    return conv2d(np.concatenate(parts, axis=0), p.projection)


def dasp_forward(x_up, p: DaspParams,
                 alpha: float = DASP_RESIDUAL_GAIN) -> np.ndarray:
    """DASP block with its fixed-gain residual."""
    x_up = _check_map(x_up)
    return alpha * x_up + dasp_concat(x_up, p)


# ---------------------------------------------------------------------------
# dual-residual head


@dataclass(frozen=True)
class ResidualGains:
    inner: float  # gain on the DASP concat inside the expansion path
    outer: float  # gain on the identity shortcut
    dasp: float = DASP_RESIDUAL_GAIN

    def __post_init__(self):
        for v in (self.inner, self.outer, self.dasp):
            if not math.isfinite(v):
                raise ValidationError("residual gains must be finite")


@dataclass
class DarhParams:
    block: DwBlockParams    # channel expansion of the head input
    dasp: DaspParams        # branches over the expanded features
    restore: ConvParams     # channel-aligning expansion conv with folded BN


def darh_forward(x, p: DarhParams, gains: ResidualGains) -> np.ndarray:
    """Dual-residual head: beta * x + ReLU(BN(restore(x_up + alpha * x_T)))."""
    x = _check_map(x)
    x_up = dwconv_block(x, p.block)
    x_t = dasp_concat(x_up, p.dasp)
    inner = conv2d(x_up + gains.inner * x_t, p.restore)
    out = gains.outer * x + relu(inner)
    if out.shape != x.shape:
        raise ValidationError(f"restore conv must map back to {x.shape}, "
                              f"got {out.shape}")
    return out


# ---------------------------------------------------------------------------
# centerness and the dynamic mask controller


def centerness_target(l: float, r: float, t: float, b: float) -> float:
    """sqrt(min/max ratio along each axis); 1 at the box center, 0 on an
    edge."""
    for v in (l, r, t, b):
        if v < 0:
            raise ValidationError("distances must be nonnegative")
    if l + r == 0 or t + b == 0:
        raise ValidationError("degenerate box: a full axis has zero extent")
    return math.sqrt((min(l, r) / max(l, r)) * (min(t, b) / max(t, b)))


@dataclass
class DynamicMaskParams:
    w1: np.ndarray  # (8, 10)
    b1: np.ndarray  # (8,)
    w2: np.ndarray  # (8, 8)
    b2: np.ndarray  # (8,)
    w3: np.ndarray  # (1, 8)
    b3: np.ndarray  # (1,)

    def layer_sizes(self) -> tuple[int, int, int]:
        return (self.w1.size + self.b1.size,
                self.w2.size + self.b2.size,
                self.w3.size + self.b3.size)


def controller_split(theta) -> DynamicMaskParams:
    """Partition the 169 controller outputs into the three 1x1 layers of
    the mask head: (80 + 8) + (64 + 8) + (8 + 1)."""
    theta = np.asarray(theta, dtype=float).ravel()
    if theta.size != CONTROLLER_PARAM_COUNT:
        raise ValidationError(f"controller vector has {theta.size} entries, "
                              f"expected {CONTROLLER_PARAM_COUNT}")
    pos = 0
    parts = []
    for out_ch, in_ch in _LAYER_SHAPES:
        w = theta[pos:pos + out_ch * in_ch].reshape(out_ch, in_ch)
        pos += out_ch * in_ch
        b = theta[pos:pos + out_ch]
        pos += out_ch
        parts.extend([w, b])
    return DynamicMaskParams(*parts)


def dynamic_mask_head(features, params: DynamicMaskParams) -> np.ndarray:
    """Three pointwise layers with ReLU between and sigmoid on the output."""
    features = _check_map(features)
    if features.shape[0] != _LAYER_SHAPES[0][1]:
        raise ValidationError(f"mask head expects {_LAYER_SHAPES[0][1]} "
                              f"input channels, got {features.shape[0]}")

    def pointwise(x, w, b):
        return np.tensordot(w, x, axes=([1], [0])) + b[:, None, None]

    y = relu(pointwise(features, params.w1, params.b1))
    y = relu(pointwise(y, params.w2, params.b2))
    return sigmoid(pointwise(y, params.w3, params.b3))


# ---------------------------------------------------------------------------
# top-down fusion strategies


def tafu_fuse(low, high) -> np.ndarray:
    """Pixel-wise addition fusion: bilinear-upsample the coarser map x2 and
    add."""
    low = _check_map(low, "low")
    high = _check_map(high, "high")
    if low.shape[0] != high.shape[0]:
        raise ValidationError("channel counts differ")
    if high.shape[1] != 2 * low.shape[1] or high.shape[2] != 2 * low.shape[2]:
        raise ValidationError(f"low {low.shape} is not one pyramid step "
                              f"coarser than high {high.shape}")
    return bilinear_resize(low, high.shape[1], high.shape[2]) + high


def transposed_conv2x(x, weight) -> np.ndarray:
    """Stride-2 transposed convolution with a 2x2 kernel (exact x2 upsample).

    ``weight`` has shape (out_ch, in_ch, 2, 2).
    """
    x = _check_map(x)
    weight = np.asarray(weight, dtype=float)
    if weight.ndim != 4 or weight.shape[2:] != (2, 2):
        raise ValidationError("transposed kernel must be (out, in, 2, 2)")
    out_ch, in_ch = weight.shape[:2]
    if x.shape[0] != in_ch:
        raise ValidationError(f"input has {x.shape[0]} channels, kernel "
                              f"expects {in_ch}")
    _, h, w = x.shape
    out = np.zeros((out_ch, 2 * h, 2 * w))
    for i in range(2):
        for j in range(2):
            contrib = np.tensordot(weight[:, :, i, j], x, axes=([1], [0]))
            out[:, i::2, j::2] += contrib
    return out


@dataclass
class TcfuParams:
    reduce: ConvParams   # 1x1, C -> C/2
    upsample: np.ndarray  # transposed kernel (C/2, C/2, 2, 2)


def tcfu_fuse(low, high, p: TcfuParams) -> np.ndarray:
    """Concatenation-decoder fusion: 1x1 channel halving, transposed-conv
    x2 upsample, then channel concat with the finer map."""
    low = _check_map(low, "low")
    high = _check_map(high, "high")
    c = low.shape[0]
    if c % 2:
        raise ValidationError(f"low channel count {c} must be even")
    if p.reduce.weight.shape[0] != c // 2 or p.reduce.in_channels != c:
        raise ValidationError(f"reduce conv must map {c} -> {c // 2} "
                              "channels")
    reduced = conv2d(low, p.reduce)
    up = transposed_conv2x(reduced, p.upsample)
    if up.shape[1:] != high.shape[1:]:
        raise ValidationError(f"upsampled low {up.shape[1:]} does not match "
                              f"high resolution {high.shape[1:]}")
    return np.concatenate([up, high], axis=0)


def tcfu_cascade(levels: Sequence[np.ndarray],
                 params: Sequence[TcfuParams]) -> np.ndarray:
    """Recursive top-down application of tcfu_fuse from the coarsest level."""
    if len(levels) < 2 or len(params) != len(levels) - 1:
        raise ValidationError("need n >= 2 levels and n - 1 parameter sets")
    fused = _check_map(levels[0], "level 0")
    for k, (high, p) in enumerate(zip(levels[1:], params), start=1):
        fused = tcfu_fuse(fused, high, p)
    return fused


# ---------------------------------------------------------------------------
# parameter manifests


def load_tensor_manifest(path) -> dict[str, np.ndarray]:
    """Read a JSON tensor manifest: name -> {shape, values (row-major)}."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    out = {}
    for name, entry in doc.items():
        shape = tuple(int(s) for s in entry["shape"])
        values = np.asarray(entry["values"], dtype=float)
        if values.size != int(np.prod(shape)):
            raise ValidationError(f"tensor '{name}': {values.size} values "
                                  f"for shape {shape}")
        out[name] = values.reshape(shape)
    return out


def save_tensor_manifest(tensors: dict[str, np.ndarray], path) -> None:
    doc = {name: {"shape": list(arr.shape),
                  "values": np.asarray(arr, dtype=float).ravel().tolist()}
           for name, arr in tensors.items()}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")
