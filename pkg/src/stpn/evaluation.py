"""Interval IoU and per-class average precision, averaged into mAP per IoU threshold.

Matching follows the ActivityNet detection benchmark: detections are visited in
descending score order and each one claims the unmatched ground truth of the
same video with the highest IoU; it is a true positive only if that IoU reaches
the threshold. AP is the all-point interpolated area under the PR curve.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

MAP_ROW = "__mAP__"


def iou(a, b) -> float:
    a0, a1 = a
    b0, b1 = b
    if not (a0 < a1 and b0 < b1):
        raise ValueError(f"malformed interval(s) {a}, {b}")
    inter = min(a1, b1) - max(a0, b0)
    if inter <= 0:
        return 0.0
    return inter / (max(a1, b1) - min(a0, b0))


def _ranked(dets):
    # dets: iterable of (video_id, start, end, score)
    return sorted(dets, key=lambda d: (-d[3], d[0], d[1]))


def match_detections(dets, gts: dict, iou_t: float) -> np.ndarray:
    """Boolean TP flags for ``dets`` in ranked order."""
    ranked = _ranked(dets)
    used = {v: np.zeros(len(g), dtype=bool) for v, g in gts.items()}
    tp = np.zeros(len(ranked), dtype=bool)
    for k, (vid, start, end, _) in enumerate(ranked):
        cand = gts.get(vid, ())
        best, best_iou = -1, -1.0
        for j, g in enumerate(cand):
            if used[vid][j]:
                continue
            o = iou((start, end), g)
            if o > best_iou:
                best, best_iou = j, o
        if best >= 0 and best_iou >= iou_t:
            used[vid][best] = True
            tp[k] = True
    return tp


def ap_from_tp(tp, n_gt: int) -> float:
    """All-point interpolated AP from ranked TP flags."""
    tp = np.asarray(tp, dtype=np.float64)
    if n_gt == 0 or tp.size == 0:
        return 0.0
    ctp = np.cumsum(tp)
    prec = ctp / np.arange(1, tp.size + 1)
    rec = ctp / n_gt
    mprec = np.concatenate([[0.0], prec, [0.0]])
    mrec = np.concatenate([[0.0], rec, [1.0]])
    mprec = np.maximum.accumulate(mprec[::-1])[::-1]
    idx = np.flatnonzero(mrec[1:] != mrec[:-1]) + 1
    return float(np.sum((mrec[idx] - mrec[idx - 1]) * mprec[idx]))


def average_precision(dets, gts: dict, iou_t: float) -> float:
    """AP of one class.

    ``dets`` holds ``(video_id, start_s, end_s, score)`` tuples or Detection
    objects; ``gts`` maps video id to a list of ``(start_s, end_s)``.
    """
    dets = [_as_tuple(d) for d in dets]
    n_gt = sum(len(g) for g in gts.values())
    return ap_from_tp(match_detections(dets, gts, iou_t), n_gt)


def _as_tuple(d):
    if hasattr(d, "video_id"):
        return (d.video_id, d.start_s, d.end_s, d.score)
    return tuple(d)


@dataclass
class EvalReport:
    thresholds: list
    num_classes: int
    ap: dict = field(default_factory=dict)       # (threshold, class) -> AP
    mAP: dict = field(default_factory=dict)      # threshold -> mAP
    n_gt: list = field(default_factory=list)
    n_det: list = field(default_factory=list)

    def rows(self):
        for t in self.thresholds:
            for c in range(self.num_classes):
                yield t, str(c), self.ap[(t, c)]
            yield t, MAP_ROW, self.mAP[t]


def evaluate(dets, manifest, thresholds, threads: int = 1) -> EvalReport:
    """AP per class and mAP per IoU threshold.

    mAP averages over classes that have ground truth; per-(threshold, class)
    work units are independent, so ``threads`` does not change the result.
    """
    C = manifest.num_classes
    known = {v.id for v in manifest.videos}
    gts = [dict() for _ in range(C)]
    for v in manifest.videos:
        if v.gt_intervals is None:
            raise ValueError(f"video {v.id!r} has no ground truth")
        for c, s, e in v.gt_intervals:
            gts[c].setdefault(v.id, []).append((s, e))
    per_class = [[] for _ in range(C)]
    for d in dets:
        if d.video_id not in known:
            raise ValueError(f"detection references unknown video {d.video_id!r}")
        if not 0 <= d.c < C:
            raise ValueError(f"detection references unknown class {d.c}")
        per_class[d.c].append(_as_tuple(d))
    n_gt = [sum(len(g) for g in gts[c].values()) for c in range(C)]
    present = [c for c in range(C) if n_gt[c] > 0]
    report = EvalReport(thresholds=[float(t) for t in thresholds], num_classes=C,
                        n_gt=n_gt, n_det=[len(p) for p in per_class])
    units = [(t, c) for t in report.thresholds for c in range(C)]

    def one(unit):
        t, c = unit
        return average_precision(per_class[c], gts[c], t)

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(threads) as pool:
            aps = list(pool.map(one, units))
    else:
        aps = [one(u) for u in units]
    report.ap = dict(zip(units, aps))
    for t in report.thresholds:
        report.mAP[t] = float(np.mean([report.ap[(t, c)] for c in present])) if present else 0.0
    return report


def write_report(report: EvalReport, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["iou", "class", "ap"])
        for t, c, ap in report.rows():
            w.writerow([repr(t), c, repr(float(ap))])


def read_report(path) -> list[tuple[float, str, float]]:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0] != ["iou", "class", "ap"]:
        raise ValueError(f"{path}: not an evaluation report")
    return [(float(r[0]), r[1], float(r[2])) for r in rows[1:] if r]
