"""Detection metrics: IoU-matched average precision (11-point interpolation).

One ground-truth box per scene, single class. Detections across the corpus
are ranked by score; a detection is a true positive if it overlaps its
scene's unmatched ground truth at IoU >= 0.5.
"""

from __future__ import annotations

import numpy as np

from .oracle import Detection, iou

RECALL_GRID = [i / 10.0 for i in range(11)]


def average_precision(
    detections: list[tuple[str, Detection]],
    gt_boxes: dict[str, tuple[float, float, float, float]],
    iou_threshold: float = 0.5,
) -> float:
    """AP@IoU over (scene_id, Detection) pairs against one box per scene."""
    n_gt = len(gt_boxes)
    if n_gt == 0:
        raise ValueError("no ground truth boxes")
    if not detections:
        return 0.0

    order = sorted(range(len(detections)), key=lambda k: (-detections[k][1].score, detections[k][0], k))
    matched: set[str] = set()
    tp = np.zeros(len(order))
    for rank, k in enumerate(order):
        sid, det = detections[k]
        gt = gt_boxes.get(sid)
        if gt is not None and sid not in matched and iou(det.box, gt) >= iou_threshold:
            matched.add(sid)
            tp[rank] = 1.0
    cum_tp = np.cumsum(tp)
    recall = cum_tp / n_gt
    precision = cum_tp / np.arange(1, len(order) + 1)

    ap = 0.0
    for r in RECALL_GRID:
        mask = recall >= r
        ap += float(precision[mask].max()) if mask.any() else 0.0
    return ap / len(RECALL_GRID)
