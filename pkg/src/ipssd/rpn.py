"""Oriented RPN heads, proposal selection and rotated NMS."""
from dataclasses import dataclass

import numpy as np

from .anchors import decode_delta
from .errors import ContractViolation
from .geometry import iou_rotated_many
from .tensor import ConvParams, as_tensor, conv2d, relu, sigmoid


@dataclass(frozen=True)
class RPNHeadParams:
    """``reg_conv`` (3x3, 512 wide by default) feeding score and delta 1x1 convs."""

    reg_conv: ConvParams
    score: ConvParams
    delta: ConvParams

    @property
    def anchors_per_cell(self):
        return self.score.out_channels

    def check(self, in_channels):
        if self.reg_conv.in_channels != in_channels:
            raise ContractViolation(
                f"rpn reg_conv expects {self.reg_conv.in_channels} channels, got {in_channels}")
        mid = self.reg_conv.out_channels
        if self.score.in_channels != mid or self.delta.in_channels != mid:
            raise ContractViolation("rpn score/delta convs do not match reg_conv width")
        if self.delta.out_channels != 5 * self.score.out_channels:
            raise ContractViolation(
                f"rpn delta conv must emit 5*A={5 * self.score.out_channels} channels, "
                f"got {self.delta.out_channels}")


def rpn_heads(feat, params):
    """Return ``(scores (1, A, h, w), deltas (1, 5A, h, w))``.

    Delta channels are grouped per anchor: channel ``5*a + j`` holds
    component ``j`` of anchor ``a``.
    """
    feat = as_tensor(feat, name="rpn input")
    params.check(feat.shape[1])
    hidden = relu(conv2d(feat, params.reg_conv))
    scores = sigmoid(conv2d(hidden, params.score))
    deltas = conv2d(hidden, params.delta)
    return scores, deltas


def flatten_head_outputs(scores, deltas):
    """Flatten head maps into anchor order: ``(N,)`` scores and ``(N, 5)`` deltas."""
    _, a, h, w = scores.shape
    s = scores[0].transpose(1, 2, 0).reshape(-1)
    d = deltas[0].reshape(a, 5, h, w).transpose(2, 3, 0, 1).reshape(-1, 5)
    return s.astype(np.float64), d.astype(np.float64)


def nms_rotated(boxes, scores, iou_thresh, max_keep=None):
    """Greedy rotated NMS; returns kept indices in descending-score order.

    Equal scores keep their input order.  A box is suppressed when its IoU
    with an already kept box is strictly greater than ``iou_thresh``.
    ``max_keep`` stops early; the result equals the full run truncated.
    """
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 5)
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    if len(boxes) != len(scores):
        raise ContractViolation(f"{len(boxes)} boxes but {len(scores)} scores")
    order = np.argsort(-scores, kind="stable")
    if iou_thresh >= 1.0:
        # IoU never exceeds 1, so nothing can be suppressed
        return order[:max_keep]
    keep = []
    alive = order
    while alive.size and (max_keep is None or len(keep) < max_keep):
        i = alive[0]
        keep.append(i)
        rest = alive[1:]
        if rest.size == 0:
            break
        ious = iou_rotated_many(boxes[i], boxes[rest])
        alive = rest[ious <= iou_thresh]
    return np.array(keep, dtype=np.intp)


def generate_proposals(scores, deltas, anchors, pre_nms_k=2000, nms_iou=0.7, post_nms_k=300,
                       min_score=0.0):
    """Decode, rank, suppress.

    ``scores``/``deltas`` are either the head maps ``(1, A, h, w)`` /
    ``(1, 5A, h, w)`` or already-flat ``(N,)`` / ``(N, 5)`` arrays in anchor
    order.  Returns ``(boxes (K, 5), scores (K,), anchor_index (K,))``.
    """
    scores = np.asarray(scores)
    deltas = np.asarray(deltas)
    if scores.ndim == 4:
        scores, deltas = flatten_head_outputs(scores, deltas)
    anchors = np.asarray(anchors, dtype=np.float64).reshape(-1, 5)
    if len(anchors) != len(scores) or len(deltas) != len(scores):
        raise ContractViolation(
            f"{len(anchors)} anchors for {len(scores)} scores / {len(deltas)} deltas")
    idx = np.argsort(-scores, kind="stable")
    if min_score > 0:
        idx = idx[scores[idx] >= min_score]
    idx = idx[:pre_nms_k]
    boxes = decode_delta(anchors[idx], deltas[idx]).reshape(-1, 5)
    keep = nms_rotated(boxes, scores[idx], nms_iou, max_keep=post_nms_k)
    return boxes[keep], scores[idx][keep], idx[keep]
