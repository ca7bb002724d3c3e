"""The four training losses (focal, GIoU, centerness BCE, Dice), the
weighted total objective, and a finite-difference gradient checker.

Each loss comes with its analytic gradient so the checker can verify the
formulas independently of how they are written down. Probabilities passed
to a log are clamped at 1e-7.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

PROB_EPS = 1e-7


@dataclass
class LossConfig:
    lambda_cls: float = 0.5
    lambda_bbox: float = 2.0
    lambda_cent: float = 0.5
    lambda_mask: float = 2.0
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0
    dice_eps: float = 1e-6

    def __post_init__(self):
        for name in ("lambda_cls", "lambda_bbox", "lambda_cent",
                     "lambda_mask"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")
        if not (0.0 < self.focal_alpha < 1.0):
            raise ValidationError("focal_alpha must lie in (0, 1)")
        if self.focal_gamma < 0:
            raise ValidationError("focal_gamma must be nonnegative")
        if self.dice_eps <= 0:
            raise ValidationError("dice_eps must be positive")


def _clamped(p: np.ndarray) -> np.ndarray:
    return np.clip(p, PROB_EPS, 1.0)


def focal_loss(p, config: LossConfig = None) -> float:
    """Mean focal loss over true-class probabilities."""
    config = config or LossConfig()
    p = _clamped(np.asarray(p, dtype=float).ravel())
    a, g = config.focal_alpha, config.focal_gamma
    return float(-(a * (1.0 - p) ** g * np.log(p)).mean())


def focal_grad(p, config: LossConfig = None) -> np.ndarray:
    config = config or LossConfig()
    p = _clamped(np.asarray(p, dtype=float).ravel())
    a, g = config.focal_alpha, config.focal_gamma
    term = -(1.0 - p) ** g / p
    if g > 0:
        term = term + g * (1.0 - p) ** (g - 1.0) * np.log(p)
    return (a / p.size) * term


def _box_dims(box) -> tuple[float, float, float, float]:
    x1, y1, x2, y2 = (float(v) for v in box)
    if x2 <= x1 or y2 <= y1:
        raise ValidationError(f"zero-area box ({x1}, {y1}, {x2}, {y2})")
    return x1, y1, x2, y2


def giou(box, box_hat) -> float:
    """Generalized IoU of two (x1, y1, x2, y2) boxes, in [-1, 1]."""
    x1, y1, x2, y2 = _box_dims(box)
    u1, v1, u2, v2 = _box_dims(box_hat)
    iw = max(0.0, min(x2, u2) - max(x1, u1))
    ih = max(0.0, min(y2, v2) - max(y1, v1))
    inter = iw * ih
    union = (x2 - x1) * (y2 - y1) + (u2 - u1) * (v2 - v1) - inter
    hull = (max(x2, u2) - min(x1, u1)) * (max(y2, v2) - min(y1, v1))
    return inter / union - (hull - union) / hull


def giou_loss(box, box_hat) -> float:
    return 1.0 - giou(box, box_hat)


def giou_loss_grad(box, box_hat) -> np.ndarray:
    """d(giou_loss)/d(box_hat); undefined exactly on coordinate ties."""
    x1, y1, x2, y2 = _box_dims(box)
    u1, v1, u2, v2 = _box_dims(box_hat)
    iw = max(0.0, min(x2, u2) - max(x1, u1))
    ih = max(0.0, min(y2, v2) - max(y1, v1))
    inter = iw * ih
    area_hat = (u2 - u1) * (v2 - v1)
    union = (x2 - x1) * (y2 - y1) + area_hat - inter
    cw = max(x2, u2) - min(x1, u1)
    ch = max(y2, v2) - min(y1, v1)
    hull = cw * ch

    d_ahat = np.array([-(v2 - v1), -(u2 - u1), (v2 - v1), (u2 - u1)])
    d_inter = np.zeros(4)
    if inter > 0.0:
        if u1 > x1:
            d_inter[0] = -ih
        if v1 > y1:
            d_inter[1] = -iw
        if u2 < x2:
            d_inter[2] = ih
        if v2 < y2:
            d_inter[3] = iw
    d_union = d_ahat - d_inter
    d_hull = np.zeros(4)
    if u1 < x1:
        d_hull[0] = -ch
    if v1 < y1:
        d_hull[1] = -cw
    if u2 > x2:
        d_hull[2] = ch
    if v2 > y2:
        d_hull[3] = cw

    d_giou = (d_inter * union - inter * d_union) / union ** 2 \
        + (d_union * hull - union * d_hull) / hull ** 2
    return -d_giou


def centerness_loss(targets, preds) -> float:
    """Mean binary cross-entropy between centerness targets and
    predictions."""
    c = np.asarray(targets, dtype=float).ravel()
    c_hat = np.asarray(preds, dtype=float).ravel()
    if c.shape != c_hat.shape or c.size == 0:
        raise ValidationError("targets and predictions must be equal-length "
                              "non-empty vectors")
    if c.min() < 0 or c.max() > 1:
        raise ValidationError("centerness targets must lie in [0, 1]")
    c_hat = np.clip(c_hat, PROB_EPS, 1.0 - PROB_EPS)
    return float(-(c * np.log(c_hat) + (1.0 - c) * np.log(1.0 - c_hat)).mean())


def centerness_grad(targets, preds) -> np.ndarray:
    c = np.asarray(targets, dtype=float).ravel()
    c_hat = np.clip(np.asarray(preds, dtype=float).ravel(), PROB_EPS,
                    1.0 - PROB_EPS)
    return -(c / c_hat - (1.0 - c) / (1.0 - c_hat)) / c.size


def dice_loss(mask, mask_hat, eps: float = 1e-6) -> float:
    """Soft Dice loss between mask values in [0, 1]."""
    m = np.asarray(mask, dtype=float).ravel()
    m_hat = np.asarray(mask_hat, dtype=float).ravel()
    if m.shape != m_hat.shape:
        raise ValidationError("mask shapes differ")
    num = 2.0 * float(m_hat @ m) + eps
    den = float(m_hat @ m_hat) + float(m @ m) + eps
    return 1.0 - num / den


def dice_grad(mask, mask_hat, eps: float = 1e-6) -> np.ndarray:
    """d(dice_loss)/d(mask_hat)."""
    m = np.asarray(mask, dtype=float).ravel()
    m_hat = np.asarray(mask_hat, dtype=float).ravel()
    num = 2.0 * float(m_hat @ m) + eps
    den = float(m_hat @ m_hat) + float(m @ m) + eps
    return -(2.0 * m * den - num * 2.0 * m_hat) / den ** 2


def total_loss(l_cls: float, l_bbox: float, l_cent: float, l_mask: float,
               config: LossConfig = None) -> float:
    """Weighted multi-task objective."""
    config = config or LossConfig()
    return (config.lambda_cls * l_cls + config.lambda_bbox * l_bbox
            + config.lambda_cent * l_cent + config.lambda_mask * l_mask)


def grad_check(loss_fn, point, step: float = 1e-5) -> float:
    """Max relative error between the analytic gradient and central finite
    differences. ``loss_fn(x)`` returns ``(value, gradient)``."""
    x = np.asarray(point, dtype=float).ravel()
    value, grad = loss_fn(x)
    grad = np.asarray(grad, dtype=float).ravel()
    if not (math.isfinite(value) and np.isfinite(grad).all()):
        raise ValidationError("loss or gradient is non-finite at the "
                              "evaluation point")
    worst = 0.0
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = step
        hi, _ = loss_fn(x + e)
        lo, _ = loss_fn(x - e)
        if not (math.isfinite(hi) and math.isfinite(lo)):
            raise ValidationError("loss is non-finite near the evaluation "
                                  "point")
        fd = (hi - lo) / (2.0 * step)
        rel = abs(grad[k] - fd) / max(abs(grad[k]), abs(fd), 1.0)
        worst = max(worst, rel)
    return worst
