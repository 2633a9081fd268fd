"""Slow, deliberately naive reference implementations.

Each function re-derives a result by a different route than the fast path
it checks (nested loops, exhaustive enumeration, full pairwise matrices),
and shares no helpers with it beyond box construction.
"""
import itertools
import math
from fractions import Fraction

import numpy as np

from .geometry import iou_rotated


def conv2d_naive(x, weight, bias, stride=1, padding=0):
    """Six nested loops of direct cross-correlation, float64 throughout."""
    x = np.asarray(x, dtype=np.float64)
    weight = np.asarray(weight, dtype=np.float64)
    n, c, h, w = x.shape
    oc, _, kh, kw = weight.shape
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    out = np.zeros((n, oc, oh, ow))
    for b in range(n):
        for o in range(oc):
            for i in range(oh):
                for j in range(ow):
                    acc = float(bias[o])
                    for ci in range(c):
                        for di in range(kh):
                            for dj in range(kw):
                                r = i * stride + di - padding
                                q = j * stride + dj - padding
                                if 0 <= r < h and 0 <= q < w:
                                    acc += x[b, ci, r, q] * weight[o, ci, di, dj]
                    out[b, o, i, j] = acc
    return out


def nms_quadratic(boxes, scores, iou_thresh):
    """Full pairwise IoU matrix, then a plain greedy pass."""
    n = len(boxes)
    ious = [[iou_rotated(boxes[i], boxes[j]) if i != j else 1.0 for j in range(n)]
            for i in range(n)]
    order = sorted(range(n), key=lambda i: (-float(scores[i]), i))
    keep = []
    for i in order:
        if all(ious[i][k] <= iou_thresh for k in keep):
            keep.append(i)
    return keep


def proposals_bruteforce(scores, deltas, anchors, pre_nms_k, nms_iou, post_nms_k):
    """Reference proposal selection over flat score/delta arrays."""
    n = len(scores)
    order = sorted(range(n), key=lambda i: (-float(scores[i]), i))[:pre_nms_k]
    boxes = []
    for i in order:
        ax, ay, ah, aw, at = (float(v) for v in anchors[i])
        dx, dy, dh, dw, dt = (float(v) for v in deltas[i])
        boxes.append((ax + dx * ah, ay + dy * aw, ah * math.exp(dh), aw * math.exp(dw),
                      (at + dt) % math.pi))
    keep = nms_quadratic(boxes, [scores[i] for i in order], nms_iou)[:post_nms_k]
    return [order[k] for k in keep]


def _bilinear_zero_pad(fmap, fx, fy):
    fh, fw = fmap.shape
    x0, y0 = math.floor(fx), math.floor(fy)
    total = 0.0
    for r, q, wgt in ((y0, x0, (1 - (fy - y0)) * (1 - (fx - x0))),
                      (y0, x0 + 1, (1 - (fy - y0)) * (fx - x0)),
                      (y0 + 1, x0, (fy - y0) * (1 - (fx - x0))),
                      (y0 + 1, x0 + 1, (fy - y0) * (fx - x0))):
        if 0 <= r < fh and 0 <= q < fw:
            total += wgt * fmap[r, q]
    return total


def roi_pool_axis_aligned(feat, roi, H, W, stride=1.0):
    """Axis-aligned RoI pooling with one sample per bin at the bin center.

    ``roi`` is ``(x, y, h, w)`` with ``h`` along x.  Output ``(C, H, W)``.
    """
    feat = np.asarray(feat, dtype=np.float64)[0]
    x, y, h, w = (float(v) for v in roi[:4])
    out = np.zeros((feat.shape[0], H, W))
    for u in range(H):
        px = x - h / 2 + (u + 0.5) * h / H
        for v in range(W):
            py = y - w / 2 + (v + 0.5) * w / W
            for c in range(feat.shape[0]):
                out[c, u, v] = _bilinear_zero_pad(feat[c], px / stride - 0.5, py / stride - 0.5)
    return out


def _lex_best_assignment(iou, thr):
    """Enumerate every injective partial assignment det -> gt and return the
    one maximizing the score-ordered sequence of (iou, -gt_index)."""
    nd, ng = iou.shape
    best_key, best = None, None
    for choice in itertools.product(range(-1, ng), repeat=nd):
        taken = [g for g in choice if g >= 0]
        if len(taken) != len(set(taken)):
            continue
        if any(g >= 0 and iou[d, g] < thr for d, g in enumerate(choice)):
            continue
        key = tuple(x for d, g in enumerate(choice)
                    for x in ((iou[d, g], -g) if g >= 0 else (-1.0, 0)))
        if best_key is None or key > best_key:
            best_key, best = key, choice
    return best


def average_precision_exhaustive(detections, ground_truth, iou_thresh=0.5, mode="obb"):
    """mAP by exhaustive assignment enumeration (tiny fixtures only).

    Returns ``{class: ap}`` and the mean as ``(per_class, mAP)``.
    """
    from .evaluation import pair_iou

    classes = sorted({g.class_name for g in ground_truth})
    per_class = {}
    for c in classes:
        dets = [d for d in detections if d.class_name == c]
        ranked = sorted(enumerate(dets), key=lambda t: (-t[1].score, t[0]))
        status = {}
        for img in sorted({d.source_id for d in dets}):
            idx = [i for i, d in ranked if d.source_id == img]
            normal = [g for g in ground_truth
                      if g.class_name == c and g.source_id == img and not g.difficulty]
            hard = [g for g in ground_truth
                    if g.class_name == c and g.source_id == img and g.difficulty]
            iou = np.array([[pair_iou(dets[i].box, g.box, mode) for g in normal] for i in idx])
            iou = iou.reshape(len(idx), len(normal))
            choice = _lex_best_assignment(iou, iou_thresh)
            for i, g in zip(idx, choice):
                if g >= 0:
                    status[i] = "tp"
                elif any(pair_iou(dets[i].box, h.box, mode) >= iou_thresh for h in hard):
                    status[i] = "ignore"
                else:
                    status[i] = "fp"
        npos = sum(1 for g in ground_truth if g.class_name == c and not g.difficulty)
        seq = [status[i] for i, _ in ranked if status[i] != "ignore"]
        prec = []
        tp = 0
        for k, s in enumerate(seq, 1):
            tp += s == "tp"
            prec.append(Fraction(tp, k))
        ap = Fraction(0)
        for k, s in enumerate(seq):
            if s == "tp":
                ap += max(prec[k:]) / npos
        per_class[c] = float(ap) if npos else 0.0
    scored = [per_class[c] for c in classes
              if any(g.class_name == c and not g.difficulty for g in ground_truth)]
    return per_class, (float(np.mean(scored)) if scored else 0.0)
