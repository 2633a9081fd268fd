"""Rotation pooling: max over bilinear samples inside rotated sub-regions.

A RoI ``(x, y, h, w, theta)`` is split into ``H x W`` sub-regions that share
its orientation (``u`` runs along ``h``, ``v`` along ``w``).  Each
sub-region holds a ``k x k`` lattice of sample points starting from its
rotated origin corner; a pooled cell is the max over its samples.

Image coordinates map to feature coordinates as ``image / stride`` with
feature cell ``(i, j)`` centered at ``(j + 0.5, i + 0.5)``.  Samples are read
with zero padding: neighbors outside the map contribute 0, which keeps the
operator linear in the features for a fixed argmax.
"""
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation
from .geometry import SubGrid, as_box, axes, subregion_corner
from .tensor import as_tensor

# argmax value for RoIs that have no sample touching the feature map
OUTSIDE = -1


@dataclass(frozen=True)
class PoolSpec:
    H: int = 7
    W: int = 7
    samples: int = 2

    def __post_init__(self):
        if self.H < 1 or self.W < 1 or self.samples < 1:
            raise ContractViolation(f"pool grid and samples must be >= 1, got {self}")


def sample_points(roi, spec):
    """Image-space sample positions, shape ``(H, W, k*k, 2)``.

    Sample ``s = i*k + j`` of sub-region ``(u, v)`` sits at
    ``corner(u, v) + (i + 0.5)/k * S_h * e_h + (j + 0.5)/k * S_w * e_w``.
    """
    box = as_box(roi)
    grid = SubGrid.for_box(box, spec.H, spec.W)
    k = spec.samples
    (hx, hy), (wx, wy) = axes(box.theta)
    frac = (np.arange(k) + 0.5) / k
    off_h = np.repeat(frac, k) * grid.S_h
    off_w = np.tile(frac, k) * grid.S_w
    pts = np.empty((spec.H, spec.W, k * k, 2))
    for u in range(spec.H):
        for v in range(spec.W):
            cx, cy = subregion_corner(box, grid, u, v)
            pts[u, v, :, 0] = cx + off_h * hx + off_w * wx
            pts[u, v, :, 1] = cy + off_h * hy + off_w * wy
    return pts


def _bilinear_taps(pts, stride, fh, fw):
    """Neighbor rows/cols ``(..., 4)`` and zero-padded weights ``(..., 4)``."""
    fx = pts[..., 0] / stride - 0.5
    fy = pts[..., 1] / stride - 0.5
    x0 = np.floor(fx)
    y0 = np.floor(fy)
    ax = fx - x0
    ay = fy - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    rows = np.stack([y0, y0, y0 + 1, y0 + 1], axis=-1)
    cols = np.stack([x0, x0 + 1, x0, x0 + 1], axis=-1)
    wts = np.stack([(1 - ay) * (1 - ax), (1 - ay) * ax, ay * (1 - ax), ay * ax], axis=-1)
    inb = (rows >= 0) & (rows < fh) & (cols >= 0) & (cols < fw)
    wts = np.where(inb, wts, 0.0)
    return np.clip(rows, 0, fh - 1), np.clip(cols, 0, fw - 1), wts, inb


def _sample(fmap, rows, cols, wts):
    # fmap (C, fh, fw) -> (C, ...) weighted sum over the 4 taps
    vals = fmap[:, rows, cols]
    return (vals * wts[None]).sum(axis=-1)


def rotation_pool_forward(feat, roi, spec, stride=1.0):
    """Pool one RoI from a ``(1, C, fh, fw)`` map.

    Returns ``(pooled (C, H, W), argmax (C, H, W))``; argmax holds the
    winning sample index, or ``OUTSIDE`` everywhere when the RoI misses the
    map entirely (pooled is then all zero).
    """
    feat = as_tensor(feat, name="pooling input")
    if feat.shape[0] != 1:
        raise ContractViolation(f"rotation pooling expects batch 1, got {feat.shape}")
    _, c, fh, fw = feat.shape
    pts = sample_points(roi, spec)
    rows, cols, wts, inb = _bilinear_taps(pts, stride, fh, fw)
    if not inb.any():
        return (np.zeros((c, spec.H, spec.W), feat.dtype),
                np.full((c, spec.H, spec.W), OUTSIDE, np.int64))
    vals = _sample(feat[0], rows, cols, wts.astype(feat.dtype))  # (C, H, W, S)
    argmax = vals.argmax(axis=-1)  # first index wins ties
    pooled = np.take_along_axis(vals, argmax[..., None], -1)[..., 0]
    return pooled, argmax


def _check_argmax(argmax, c, spec):
    argmax = np.asarray(argmax)
    if argmax.shape != (c, spec.H, spec.W):
        raise ContractViolation(
            f"argmax shape {argmax.shape} does not match pooled shape {(c, spec.H, spec.W)}")
    if argmax.min() < OUTSIDE or argmax.max() >= spec.samples ** 2:
        raise ContractViolation("argmax holds sample indices outside the pool spec")
    return argmax


def _winner_taps(argmax, roi, spec, stride, fh, fw):
    pts = sample_points(roi, spec)  # (H, W, S, 2)
    rows, cols, wts, _ = _bilinear_taps(pts, stride, fh, fw)
    sel = np.maximum(argmax, 0)[..., None, None]  # (C, H, W, 1, 1)
    pick = lambda a: np.take_along_axis(
        np.broadcast_to(a[None], (argmax.shape[0],) + a.shape), sel, axis=3)[:, :, :, 0]
    wsel = pick(wts) * (argmax >= 0)[..., None]
    return pick(rows), pick(cols), wsel  # each (C, H, W, 4)


def rotation_pool_backward(grad_pooled, argmax, roi, spec, feat_shape, stride=1.0):
    """Gradient w.r.t. the feature map for a fixed argmax.

    Each pooled gradient goes to the four bilinear neighbors of its winning
    sample, scaled by the bilinear weights.
    """
    n, c, fh, fw = feat_shape
    grad_pooled = np.asarray(grad_pooled, dtype=np.float64)
    if grad_pooled.shape != (c, spec.H, spec.W):
        raise ContractViolation(
            f"upstream gradient shape {grad_pooled.shape} != pooled shape {(c, spec.H, spec.W)}")
    argmax = _check_argmax(argmax, c, spec)
    grad = np.zeros((c, fh, fw))
    rows, cols, wsel = _winner_taps(argmax, roi, spec, stride, fh, fw)
    chan = np.broadcast_to(np.arange(c)[:, None, None, None], rows.shape)
    np.add.at(grad, (chan, rows, cols), wsel * grad_pooled[..., None])
    return grad[None]


def rotation_pool_jvp(delta_feat, argmax, roi, spec, stride=1.0):
    """Forward-mode derivative: pooled response to ``delta_feat`` with the
    winners frozen at ``argmax``."""
    delta_feat = as_tensor(delta_feat, name="tangent")
    _, c, fh, fw = delta_feat.shape
    argmax = _check_argmax(argmax, c, spec)
    rows, cols, wsel = _winner_taps(argmax, roi, spec, stride, fh, fw)
    chan = np.broadcast_to(np.arange(c)[:, None, None, None], rows.shape)
    return (delta_feat[0][chan, rows, cols] * wsel).sum(axis=-1)


def rotation_pool_many(feat, rois, spec, stride=1.0, chunk=256):
    """Forward pooling for an ``(N, 5)`` array of RoIs -> ``(N, C, H, W)``.

    Same values as calling :func:`rotation_pool_forward` per RoI, computed in
    vectorized chunks.
    """
    feat = as_tensor(feat, name="pooling input")
    _, c, fh, fw = feat.shape
    rois = np.asarray(rois, dtype=np.float64).reshape(-1, 5)
    out = np.zeros((len(rois), c, spec.H, spec.W), feat.dtype)
    if len(rois) == 0:
        return out
    k = spec.samples
    frac = (np.arange(k) + 0.5) / k
    # (u + frac_i) / H along h, (v + frac_j) / W along w, in [0, 1]
    fu = (np.arange(spec.H)[:, None, None] + np.repeat(frac, k)[None, None, :]) / spec.H
    fv = (np.arange(spec.W)[None, :, None] + np.tile(frac, k)[None, None, :]) / spec.W
    fmap = feat[0]
    for start in range(0, len(rois), chunk):
        r = rois[start:start + chunk]
        x, y, h, w, t = (r[:, i][:, None, None, None] for i in range(5))
        cos, sin = np.cos(t), np.sin(t)
        a = -h / 2 + fu[None] * h  # offset along e_h
        b = -w / 2 + fv[None] * w  # offset along e_w
        pts = np.stack([x + a * cos - b * sin, y + a * sin + b * cos], axis=-1)
        rows, cols, wts, _ = _bilinear_taps(pts, stride, fh, fw)
        vals = (fmap[:, rows, cols] * wts[None].astype(feat.dtype)).sum(axis=-1)  # (C, n, H, W, S)
        out[start:start + len(r)] = vals.max(axis=-1).transpose(1, 0, 2, 3)
    return out
