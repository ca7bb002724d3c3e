"""Prediction-to-ground-truth matching and the detection, segmentation,
and regression metrics.

AP follows the COCO convention: greedy matching in descending score order
and 101-point interpolated precision, averaged over IoU thresholds
0.50:0.05:0.95 for mAP. Boxes use the inclusive pixel-area convention so a
box equals the tight box of its mask.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError
from .ingest import BoundingBox, InstanceMask

COCO_THRESHOLDS = [0.5 + 0.05 * k for k in range(10)]
_RECALL_GRID = np.linspace(0.0, 1.0, 101)


@dataclass
class MatchResult:
    pairs: list[tuple[int, int, float]]  # (pred id, gt id, IoU)
    unmatched_preds: list[int]
    unmatched_gts: list[int]


@dataclass
class DetectionMetrics:
    seg_map: float
    seg_ap50: float
    seg_ap75: float
    box_map: float
    box_ap50: float
    box_ap75: float
    precision: float = 0.0
    recall: float = 0.0

    def as_dict(self) -> dict[str, float]:
        return {
            "seg/mAP": self.seg_map, "seg/AP50": self.seg_ap50,
            "seg/AP75": self.seg_ap75, "box/mAP": self.box_map,
            "box/AP50": self.box_ap50, "box/AP75": self.box_ap75,
            "precision": self.precision, "recall": self.recall,
        }


@dataclass
class RegressionMetrics:
    r2: float
    rmse: float
    mae: float
    degenerate: bool = False


def _box_area(b: BoundingBox) -> float:
    return float(b.width * b.height)


def iou(a, b) -> float:
    """Mask IoU or box IoU depending on the argument kind."""
    a_mask = isinstance(a, (InstanceMask, np.ndarray))
    b_mask = isinstance(b, (InstanceMask, np.ndarray))
    if a_mask != b_mask:
        raise ValidationError("cannot mix mask and box IoU operands")
    if a_mask:
        ga = a.grid if isinstance(a, InstanceMask) else np.asarray(a, bool)
        gb = b.grid if isinstance(b, InstanceMask) else np.asarray(b, bool)
        if ga.shape != gb.shape:
            raise ValidationError(f"mask shapes differ: {ga.shape} vs "
                                  f"{gb.shape}")
        union = np.logical_or(ga, gb).sum()
        if union == 0:
            return 0.0
        return float(np.logical_and(ga, gb).sum() / union)
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min) + 1
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min) + 1
    inter = max(ix, 0) * max(iy, 0)
    union = _box_area(a) + _box_area(b) - inter
    return float(inter / union) if union > 0 else 0.0


def _instance_iou(pred: InstanceMask, gt: InstanceMask,
                  kind: str) -> float:
    if kind == "mask":
        return iou(pred, gt)
    return iou(pred.bbox, gt.bbox)


def match_instances(preds: Sequence[InstanceMask],
                    gts: Sequence[InstanceMask],
                    iou_threshold: float,
                    kind: str = "mask") -> MatchResult:
    """One-to-one greedy matching in descending prediction-score order."""
    if not (0.0 < iou_threshold <= 1.0):
        raise ValidationError(f"IoU threshold {iou_threshold} outside (0, 1]")
    order = sorted(range(len(preds)),
                   key=lambda i: (-preds[i].effective_score, preds[i].id))
    taken = set()
    pairs = []
    for i in order:
        best_iou, best_j = 0.0, None
        for j, gt in enumerate(gts):
            if j in taken:
                continue
            v = _instance_iou(preds[i], gt, kind)
            if v > best_iou:  # ties keep the lowest gt index
                best_iou, best_j = v, j
        if best_j is not None and best_iou >= iou_threshold:
            taken.add(best_j)
            pairs.append((preds[i].id, gts[best_j].id, best_iou))
    matched_preds = {p for p, _, _ in pairs}
    matched_gts = {g for _, g, _ in pairs}
    return MatchResult(
        pairs=pairs,
        unmatched_preds=[p.id for p in preds if p.id not in matched_preds],
        unmatched_gts=[g.id for g in gts if g.id not in matched_gts],
    )


def match_instances_by_iou(preds: Sequence[InstanceMask],
                           gts: Sequence[InstanceMask],
                           iou_threshold: float,
                           kind: str = "mask") -> MatchResult:
    """Score-free greedy matching: accept candidate pairs in descending IoU
    order. Used for phenotype alignment where predictions may be unscored."""
    if not (0.0 < iou_threshold <= 1.0):
        raise ValidationError(f"IoU threshold {iou_threshold} outside (0, 1]")
    candidates = []
    for i, p in enumerate(preds):
        for j, g in enumerate(gts):
            v = _instance_iou(p, g, kind)
            if v >= iou_threshold:
                candidates.append((v, i, j))
    candidates.sort(key=lambda t: (-t[0], preds[t[1]].id, gts[t[2]].id))
    used_p, used_g = set(), set()
    pairs = []
    for v, i, j in candidates:
        if i in used_p or j in used_g:
            continue
        used_p.add(i)
        used_g.add(j)
        pairs.append((preds[i].id, gts[j].id, v))
    matched_preds = {p for p, _, _ in pairs}
    matched_gts = {g for _, g, _ in pairs}
    return MatchResult(
        pairs=pairs,
        unmatched_preds=[p.id for p in preds if p.id not in matched_preds],
        unmatched_gts=[g.id for g in gts if g.id not in matched_gts],
    )


def precision_recall(match: MatchResult) -> tuple[float, float]:
    tp = len(match.pairs)
    fp = len(match.unmatched_preds)
    fn = len(match.unmatched_gts)
    precision = tp / (tp + fp) if (tp + fp) > 0 else 0.0
    recall = tp / (tp + fn) if (tp + fn) > 0 else 0.0
    return precision, recall


def _group_by_image(instances: Iterable[InstanceMask]):
    groups: dict[int, list[InstanceMask]] = {}
    for inst in instances:
        groups.setdefault(inst.image_id, []).append(inst)
    return groups


def _score_hits(preds, gts, iou_threshold, kind):
    """Per-image greedy matching; returns (score, is_tp) rows."""
    rows = []
    gt_groups = _group_by_image(gts)
    for image_id, image_preds in sorted(_group_by_image(preds).items()):
        image_gts = gt_groups.get(image_id, [])
        taken = set()
        order = sorted(range(len(image_preds)),
                       key=lambda i: (-image_preds[i].effective_score,
                                      image_preds[i].id))
        for i in order:
            best_iou, best_j = 0.0, None
            for j, gt in enumerate(image_gts):
                if j in taken:
                    continue
                v = _instance_iou(image_preds[i], gt, kind)
                if v > best_iou:
                    best_iou, best_j = v, j
            hit = best_j is not None and best_iou >= iou_threshold
            if hit:
                taken.add(best_j)
            rows.append((image_preds[i].effective_score,
                         image_preds[i].image_id, image_preds[i].id, hit))
    return rows


def average_precision(preds: Sequence[InstanceMask],
                      gts: Sequence[InstanceMask],
                      iou_threshold: float,
                      kind: str = "mask") -> float:
    """101-point interpolated AP at a single IoU threshold."""
    n_gt = len(gts)
    if n_gt == 0 or len(preds) == 0:
        return 0.0
    rows = _score_hits(preds, gts, iou_threshold, kind)
    rows.sort(key=lambda r: (-r[0], r[1], r[2]))
    hits = np.array([r[3] for r in rows], dtype=float)
    tp = np.cumsum(hits)
    fp = np.cumsum(1.0 - hits)
    recall = tp / n_gt
    precision = tp / (tp + fp)
    # precision envelope, then sample on the 101-point recall grid; the
    # tiny slack keeps grid points that tie a recall value on the step
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, _RECALL_GRID - 1e-12, side="left")
    sampled = np.where(idx < envelope.size, envelope[np.minimum(idx,
                       envelope.size - 1)], 0.0)
    return float(sampled.mean())


def coco_map(preds: Sequence[InstanceMask],
             gts: Sequence[InstanceMask],
             pr_threshold: float = 0.5) -> DetectionMetrics:
    """mAP over the COCO threshold ladder plus AP50/AP75, boxes and masks."""
    seg_aps = [average_precision(preds, gts, t, "mask")
               for t in COCO_THRESHOLDS]
    box_aps = [average_precision(preds, gts, t, "box")
               for t in COCO_THRESHOLDS]
    tp = fp = fn = 0
    gt_groups = _group_by_image(gts)
    for image_id, image_preds in sorted(_group_by_image(preds).items()):
        m = match_instances(image_preds, gt_groups.get(image_id, []),
                            pr_threshold)
        tp += len(m.pairs)
        fp += len(m.unmatched_preds)
        fn += len(m.unmatched_gts)
    for image_id, image_gts in gt_groups.items():
        if not any(p.image_id == image_id for p in preds):
            fn += len(image_gts)
    precision = tp / (tp + fp) if (tp + fp) > 0 else 0.0
    recall = tp / (tp + fn) if (tp + fn) > 0 else 0.0
    return DetectionMetrics(
        seg_map=float(np.mean(seg_aps)), seg_ap50=seg_aps[0],
        seg_ap75=seg_aps[5],
        box_map=float(np.mean(box_aps)), box_ap50=box_aps[0],
        box_ap75=box_aps[5],
        precision=precision, recall=recall,
    )


def acc_vis(tp_vis: int, n_g: int) -> float:
    """Visual-inspection accuracy as a percentage."""
    if n_g <= 0:
        raise ValidationError("no ground-truth instances")
    if not (0 <= tp_vis <= n_g):
        raise ValidationError(f"tp_vis {tp_vis} outside [0, {n_g}]")
    return 100.0 * tp_vis / n_g


def regression_metrics(pred, gt) -> RegressionMetrics:
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if pred.shape != gt.shape or pred.ndim != 1 or pred.size == 0:
        raise ValidationError("pred and gt must be equal-length non-empty "
                              "vectors")
    err = pred - gt
    rmse = float(np.sqrt(np.mean(err ** 2)))
    mae = float(np.mean(np.abs(err)))
    ss_tot = float(np.sum((gt - gt.mean()) ** 2))
    if ss_tot == 0.0:
        return RegressionMetrics(0.0, rmse, mae, degenerate=True)
    r2 = 1.0 - float(np.sum(err ** 2)) / ss_tot
    return RegressionMetrics(r2, rmse, mae)
