"""Self-verification: collapse identities for the reference kernels,
gradient checks for the losses, and a brute-force precision/recall oracle
that the fast metric path must agree with to 1e-9.

The oracle here deliberately re-implements matching and AP integration in
plain Python (per-threshold nested loops, explicit staircase scan) so it
shares no code with `evalsuite`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import losses, refkernels
from .evalsuite import COCO_THRESHOLDS, coco_map
from .ingest import InstanceMask, decode_rle, encode_rle


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


# ---------------------------------------------------------------------------
# random scene generation (shared with the acceptance suite)


def random_scene(rng: np.random.Generator, height: int = 14, width: int = 14,
                 max_instances: int = 10, image_id: int = 0,
                 id_base: int = 0):
    """Random blobby masks with scores; returns (preds, gts)."""

    def random_mask():
        while True:
            r0 = rng.integers(0, height - 2)
            c0 = rng.integers(0, width - 2)
            rh = rng.integers(2, max(3, height // 2))
            rw = rng.integers(2, max(3, width // 2))
            grid = np.zeros((height, width), dtype=bool)
            grid[r0:r0 + rh, c0:c0 + rw] = True
            # chip a random corner to vary the shapes
            if rng.random() < 0.5:
                grid[r0, c0] = False
            if grid.any():
                return grid

    n_gt = int(rng.integers(1, max_instances + 1))
    n_pred = int(rng.integers(0, max_instances + 1))
    gts = [InstanceMask(id_base + k, image_id, random_mask())
           for k in range(n_gt)]
    preds = []
    for k in range(n_pred):
        if gts and rng.random() < 0.6:
            # perturb an existing GT so some predictions are near-hits
            base = gts[int(rng.integers(0, len(gts)))].grid.copy()
            rows, cols = np.nonzero(base)
            drop = rng.random(rows.size) < 0.25
            base[rows[drop], cols[drop]] = False
            grid = base if base.any() else random_mask()
        else:
            grid = random_mask()
        preds.append(InstanceMask(id_base + 1000 + k, image_id, grid,
                                  float(np.round(rng.random(), 6))))
    return preds, gts


# ---------------------------------------------------------------------------
# brute-force PR oracle


def _pair_iou(a: InstanceMask, b: InstanceMask, kind: str) -> float:
    if kind == "mask":
        inter = int(np.logical_and(a.grid, b.grid).sum())
        union = int(a.grid.sum()) + int(b.grid.sum()) - inter
        return inter / union if union else 0.0
    ax, ay, bx, by = a.bbox.x_min, a.bbox.y_min, a.bbox.x_max, a.bbox.y_max
    cx, cy, dx, dy = b.bbox.x_min, b.bbox.y_min, b.bbox.x_max, b.bbox.y_max
    iw = min(bx, dx) - max(ax, cx) + 1
    ih = min(by, dy) - max(ay, cy) + 1
    inter = max(iw, 0) * max(ih, 0)
    union = (bx - ax + 1) * (by - ay + 1) + (dx - cx + 1) * (dy - cy + 1) \
        - inter
    return inter / union if union else 0.0


def brute_force_ap(preds: Sequence[InstanceMask],
                   gts: Sequence[InstanceMask],
                   threshold: float, kind: str = "mask") -> float:
    """Plain-Python AP at one IoU threshold, 101-point interpolation."""
    n_gt = len(gts)
    if n_gt == 0 or len(preds) == 0:
        return 0.0
    flags = []  # (score, image_id, pred_id, is_tp)
    image_ids = sorted({p.image_id for p in preds})
    for image_id in image_ids:
        image_preds = sorted(
            [p for p in preds if p.image_id == image_id],
            key=lambda p: (-p.effective_score, p.id))
        image_gts = [g for g in gts if g.image_id == image_id]
        used = [False] * len(image_gts)
        for p in image_preds:
            best, best_j = 0.0, None
            for j, g in enumerate(image_gts):
                if used[j]:
                    continue
                v = _pair_iou(p, g, kind)
                if v > best:
                    best, best_j = v, j
            hit = best_j is not None and best >= threshold
            if hit:
                used[best_j] = True
            flags.append((p.effective_score, p.image_id, p.id, hit))
    flags.sort(key=lambda f: (-f[0], f[1], f[2]))
    points = []  # (recall, precision) after each prediction
    tp = fp = 0
    for _, _, _, hit in flags:
        if hit:
            tp += 1
        else:
            fp += 1
        points.append((tp / n_gt, tp / (tp + fp)))
    total = 0.0
    for k in range(101):
        r = k / 100.0
        best_p = 0.0
        for recall, precision in points:
            if recall >= r - 1e-12 and precision > best_p:
                best_p = precision
        total += best_p
    return total / 101.0


def brute_force_metrics(preds, gts) -> dict[str, float]:
    seg = [brute_force_ap(preds, gts, t, "mask") for t in COCO_THRESHOLDS]
    box = [brute_force_ap(preds, gts, t, "box") for t in COCO_THRESHOLDS]
    return {
        "seg/mAP": sum(seg) / len(seg), "seg/AP50": seg[0],
        "seg/AP75": seg[5],
        "box/mAP": sum(box) / len(box), "box/AP50": box[0],
        "box/AP75": box[5],
    }


def metric_equivalence(trials: int = 200, seed: int = 0,
                       tol: float = 1e-9) -> float:
    """Max |coco_map - oracle| over random scenes; raises nothing."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        preds, gts = random_scene(rng)
        fast = coco_map(preds, gts).as_dict()
        slow = brute_force_metrics(preds, gts)
        for key, want in slow.items():
            worst = max(worst, abs(fast[key] - want))
    return worst


# ---------------------------------------------------------------------------
# kernel and loss checks


def _random_conv(rng, out_ch, in_ch, kh, kw, groups=1):
    return refkernels.ConvParams(
        rng.normal(size=(out_ch, in_ch // groups, kh, kw)),
        rng.normal(size=out_ch), groups=groups)


def check_deform_collapse(trials: int = 100, seed: int = 1,
                          tol: float = 1e-9) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        c = int(rng.integers(1, 4))
        h, w = int(rng.integers(3, 8)), int(rng.integers(3, 8))
        x = rng.normal(size=(c, h, w))
        p = _random_conv(rng, int(rng.integers(1, 4)), c, 3, 3)
        zero_off = np.zeros((18, h, w))
        diff = np.abs(refkernels.deform_conv(x, p, zero_off)
                      - refkernels.conv2d(x, p)).max()
        worst = max(worst, float(diff))
    return CheckResult("deform_zero_offset", worst <= tol,
                       f"max |deform - conv| = {worst:.3e}")


def check_asff_one_hot(seed: int = 2, tol: float = 1e-12) -> CheckResult:
    rng = np.random.default_rng(seed)
    sources = [rng.normal(size=(2, 4, 4)), rng.normal(size=(2, 2, 2)),
               rng.normal(size=(2, 8, 8))]
    worst = 0.0
    for k in range(3):
        w = np.zeros(3)
        w[k] = 1.0
        fused = refkernels.asff_fuse(sources, w, (4, 4))
        mode = "up" if sources[k].shape[1] < 4 else "down"
        aligned = refkernels.align_level(sources[k], (4, 4), mode)
        worst = max(worst, float(np.abs(fused - aligned).max()))
    return CheckResult("asff_one_hot", worst <= tol,
                       f"max deviation = {worst:.3e}")


def check_dasp_zero_branches(seed: int = 3, tol: float = 1e-12) -> CheckResult:
    rng = np.random.default_rng(seed)
    c, h, w = 8, 5, 5
    x = rng.normal(size=(c, h, w))
    q = c // 4
    zeros = lambda *shape: np.zeros(shape)
    p = refkernels.DaspParams(
        horizontal=refkernels.ConvParams(zeros(q, q, 1, 3)),
        vertical=refkernels.ConvParams(zeros(q, q, 3, 1)),
        deep=refkernels.ConvParams(zeros(q, 1, 3, 3), groups=q),
        deform=refkernels.ConvParams(zeros(q, q, 3, 3)),
        deform_offsets=zeros(18, h, w),
        projection=refkernels.ConvParams(zeros(c, c, 1, 1)),
    )
    out = refkernels.dasp_forward(x, p)
    dev = float(np.abs(out - refkernels.DASP_RESIDUAL_GAIN * x).max())
    return CheckResult("dasp_zero_branches", dev <= tol,
                       f"max |out - 0.3 x| = {dev:.3e}")


def check_centerness(tol: float = 1e-12) -> CheckResult:
    ok = (refkernels.centerness_target(2, 2, 3, 3) == 1.0
          and refkernels.centerness_target(0, 4, 2, 2) == 0.0
          and abs(refkernels.centerness_target(1, 3, 2, 2)
                  - math.sqrt(1.0 / 3.0)) <= tol)
    return CheckResult("centerness_values", ok)


def check_controller_partition() -> CheckResult:
    params = refkernels.controller_split(np.arange(1.0, 170.0))
    sizes = params.layer_sizes()
    ok = sizes == (88, 72, 9) and sum(sizes) == 169
    # order preservation: first weight block is theta[:80] row-major
    ok = ok and params.w1[0, 0] == 1.0 and params.b3[0] == 169.0
    return CheckResult("controller_partition", ok, f"layer sizes {sizes}")


def check_rle_roundtrip(trials: int = 200, seed: int = 4) -> CheckResult:
    rng = np.random.default_rng(seed)
    for _ in range(trials):
        h, w = int(rng.integers(1, 17)), int(rng.integers(1, 17))
        grid = rng.random((h, w)) < 0.5
        counts = encode_rle(grid)
        if not np.array_equal(decode_rle(counts, h, w), grid):
            return CheckResult("rle_roundtrip", False, f"failed at {h}x{w}")
    return CheckResult("rle_roundtrip", True)


def gradient_checks(points: int = 100, seed: int = 5, tol: float = 1e-4,
                    dice_grad_fn: Optional[Callable] = None
                    ) -> list[CheckResult]:
    """Finite-difference verification of every loss gradient.

    ``dice_grad_fn`` exists so a test harness can inject a broken gradient
    and confirm the failure is reported.
    """
    rng = np.random.default_rng(seed)
    config = losses.LossConfig()
    dice_grad_fn = dice_grad_fn or losses.dice_grad
    results = []

    def run(name, sampler, fn):
        worst = 0.0
        for _ in range(points):
            worst = max(worst, losses.grad_check(fn, sampler()))
        results.append(CheckResult(name, worst <= tol,
                                   f"max rel err = {worst:.3e}"))

    run("focal_gradient",
        lambda: rng.uniform(0.1, 0.9, size=rng.integers(1, 8)),
        lambda x: (losses.focal_loss(x, config), losses.focal_grad(x,
                                                                   config)))

    def bce_point():
        n = int(rng.integers(1, 8))
        return rng.uniform(0.05, 0.95, size=n), rng.uniform(0.1, 0.9, size=n)

    bce_targets = []

    def bce_sampler():
        c, c_hat = bce_point()
        bce_targets.append(c)
        return c_hat

    run("centerness_gradient", bce_sampler,
        lambda x: (losses.centerness_loss(bce_targets[-1], x),
                   losses.centerness_grad(bce_targets[-1], x)))

    dice_masks = []

    def dice_sampler():
        n = int(rng.integers(2, 10))
        dice_masks.append((rng.random(n) < 0.5).astype(float))
        return rng.uniform(0.05, 0.95, size=n)

    run("dice_gradient", dice_sampler,
        lambda x: (losses.dice_loss(dice_masks[-1], x),
                   dice_grad_fn(dice_masks[-1], x)))

    def giou_point():
        # overlapping boxes away from coordinate ties (non-smooth points)
        x1, y1 = rng.uniform(0, 3, size=2)
        gt = np.array([x1, y1, x1 + rng.uniform(2, 5),
                       y1 + rng.uniform(2, 5)])
        shift = rng.uniform(0.3, 1.2, size=2)
        hat = np.array([gt[0] + shift[0], gt[1] + shift[1],
                        gt[2] + shift[0] + rng.uniform(0.2, 0.8),
                        gt[3] + shift[1] + rng.uniform(0.2, 0.8)])
        return gt, hat

    giou_gts = []

    def giou_sampler():
        gt, hat = giou_point()
        giou_gts.append(gt)
        return hat

    run("giou_gradient", giou_sampler,
        lambda x: (losses.giou_loss(giou_gts[-1], x),
                   losses.giou_loss_grad(giou_gts[-1], x)))
    return results


def run_checks(metric_trials: int = 200, gradient_points: int = 100,
               kernel_trials: int = 100,
               dice_grad_fn: Optional[Callable] = None) -> list[CheckResult]:
    """Full verification sweep, as run by the `verify` subcommand."""
    results = [
        check_deform_collapse(trials=kernel_trials),
        check_asff_one_hot(),
        check_dasp_zero_branches(),
        check_centerness(),
        check_controller_partition(),
        check_rle_roundtrip(),
    ]
    results.extend(gradient_checks(points=gradient_points,
                                   dice_grad_fn=dice_grad_fn))
    worst = metric_equivalence(trials=metric_trials)
    results.append(CheckResult("metric_brute_force_equivalence",
                               worst <= 1e-9,
                               f"max |fast - oracle| = {worst:.3e}"))
    return results
