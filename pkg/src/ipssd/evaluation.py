"""VOC-style average precision for rotated (OBB) or envelope (HBB) boxes.

Matching, per class and image, in descending score order (input order on
ties): a detection takes the unmatched non-difficult ground truth with the
highest IoU at or above the threshold.  If none qualifies but a difficult
box does, the detection is ignored; otherwise it is a false positive.

AP is the area under the all-point interpolated precision/recall curve.
Precision and recall are kept as exact fractions so small fixtures give
exact values.
"""
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import ContractViolation
from .geometry import iou_axis_aligned, iou_rotated, to_horizontal

MODES = ("obb", "hbb")


@dataclass
class ClassResult:
    ap: float
    precision: list
    recall: list
    tp: int
    fp: int
    npos: int
    ignored: int = 0


@dataclass
class EvalReport:
    per_class: dict
    mAP: float
    iou_threshold: float
    mode: str
    interpolation: str = "all-point"
    unknown_class_fp: int = 0

    def to_dict(self):
        return {
            "mode": self.mode,
            "iou_threshold": self.iou_threshold,
            "interpolation": self.interpolation,
            "mAP": self.mAP,
            "unknown_class_fp": self.unknown_class_fp,
            "per_class": {
                name: {"ap": r.ap, "tp": r.tp, "fp": r.fp, "npos": r.npos, "ignored": r.ignored,
                       "precision": [float(p) for p in r.precision],
                       "recall": [float(v) for v in r.recall]}
                for name, r in self.per_class.items()
            },
        }


def pair_iou(a, b, mode):
    if mode == "obb":
        return iou_rotated(a, b)
    return iou_axis_aligned(to_horizontal(a), to_horizontal(b))


def all_point_ap(precision, recall):
    """Area under the monotone precision envelope (exact if given Fractions)."""
    ap = 0
    env = list(precision)
    for i in range(len(env) - 2, -1, -1):
        env[i] = max(env[i], env[i + 1])
    prev_r = 0
    for p, r in zip(env, recall):
        if r > prev_r:
            ap += (r - prev_r) * p
            prev_r = r
    return ap


def _match_class(dets, gts, iou_thresh, mode):
    """Return per-detection outcome: 1 TP, 0 FP, None ignored (score order)."""
    by_img = {}
    for g in gts:
        by_img.setdefault(g.source_id, []).append(g)
    used = {k: [False] * len(v) for k, v in by_img.items()}
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)  # stable
    outcome = []
    for i in order:
        d = dets[i]
        cands = by_img.get(d.source_id, [])
        best, best_iou, hit_difficult = None, -1.0, False
        for j, g in enumerate(cands):
            ov = pair_iou(d.box, g.box, mode)
            if ov < iou_thresh:
                continue
            if g.difficulty:
                hit_difficult = True
            elif not used[d.source_id][j] and ov > best_iou:
                best, best_iou = j, ov
        if best is not None:
            used[d.source_id][best] = True
            outcome.append(1)
        elif hit_difficult:
            outcome.append(None)
        else:
            outcome.append(0)
    return outcome


def compute_ap(detections, ground_truth, iou_thresh=0.5, mode="obb"):
    """Evaluate detections against ground truth; returns an :class:`EvalReport`."""
    mode = mode.lower()
    if mode not in MODES:
        raise ContractViolation(f"mode must be one of {MODES}, got {mode!r}")
    classes = sorted({g.class_name for g in ground_truth})
    unknown = [d for d in detections if d.class_name not in classes]
    if unknown:
        names = sorted({d.class_name for d in unknown})
        warnings.warn(f"{len(unknown)} detections of classes without ground truth: {names}")
    per_class = {}
    for c in classes:
        gts = [g for g in ground_truth if g.class_name == c]
        dets = [d for d in detections if d.class_name == c]
        npos = sum(1 for g in gts if not g.difficulty)
        outcome = [o for o in _match_class(dets, gts, iou_thresh, mode) if o is not None]
        tp = fp = 0
        precision, recall = [], []
        for o in outcome:
            tp += o
            fp += 1 - o
            precision.append(Fraction(tp, tp + fp))
            recall.append(Fraction(tp, npos) if npos else Fraction(0))
        ap = float(all_point_ap(precision, recall)) if npos else 0.0
        per_class[c] = ClassResult(ap, precision, recall, tp, fp, npos,
                                   len(dets) - len(outcome))
    scored = [r.ap for r in per_class.values() if r.npos > 0]
    m_ap = float(np.mean(scored)) if scored else 0.0
    return EvalReport(per_class, m_ap, iou_thresh, mode, unknown_class_fp=len(unknown))
