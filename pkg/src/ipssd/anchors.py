"""Oriented anchor grids and the 5-parameter box delta coding."""
import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation
from .geometry import normalize_angle

# decoded log-size deltas are clipped here so exp() cannot overflow
MAX_LOG_DELTA = 10.0


@dataclass(frozen=True)
class AnchorConfig:
    scales: tuple = (16.0, 32.0, 64.0)
    ratios: tuple = (0.5, 1.0, 2.0)
    angles: tuple = (0.0, math.pi / 4, math.pi / 2, 3 * math.pi / 4)
    stride: float = 8.0

    def __post_init__(self):
        for name in ("scales", "ratios", "angles"):
            vals = tuple(float(v) for v in getattr(self, name))
            if not vals:
                raise ContractViolation(f"anchor {name} must be non-empty")
            object.__setattr__(self, name, vals)
        if min(self.scales) <= 0 or min(self.ratios) <= 0:
            raise ContractViolation("anchor scales and ratios must be positive")
        if self.stride < 1:
            raise ContractViolation(f"anchor stride must be >= 1, got {self.stride}")

    @property
    def per_cell(self):
        return len(self.scales) * len(self.ratios) * len(self.angles)

    def with_stride(self, stride):
        return AnchorConfig(self.scales, self.ratios, self.angles, stride)


def cell_anchor_shapes(cfg):
    """``(A, 3)`` array of ``(h, w, theta)`` in scale -> ratio -> angle order."""
    rows = []
    for s in cfg.scales:
        for r in cfg.ratios:
            q = math.sqrt(r)
            for t in cfg.angles:
                rows.append((s * q, s / q, normalize_angle(t)))
    return np.array(rows, dtype=np.float64)


def generate_anchors(cfg, feat_h, feat_w):
    """All anchors for a ``feat_h x feat_w`` map as an ``(N, 5)`` array.

    Cells are visited row-major; within a cell the order is
    scale -> ratio -> angle, so anchor ``k`` of cell ``(i, j)`` sits at row
    ``(i * feat_w + j) * A + k``.
    """
    if feat_h < 1 or feat_w < 1:
        raise ContractViolation(f"feature map must be at least 1x1, got {(feat_h, feat_w)}")
    shapes = cell_anchor_shapes(cfg)
    a = len(shapes)
    ii, jj = np.meshgrid(np.arange(feat_h), np.arange(feat_w), indexing="ij")
    cx = ((jj.reshape(-1) + 0.5) * cfg.stride)
    cy = ((ii.reshape(-1) + 0.5) * cfg.stride)
    out = np.empty((feat_h * feat_w, a, 5))
    out[:, :, 0] = cx[:, None]
    out[:, :, 1] = cy[:, None]
    out[:, :, 2:] = shapes[None, :, :]
    return out.reshape(-1, 5)


def wrap_half_pi(d):
    """Wrap angle differences into ``(-pi/2, pi/2]``."""
    return math.pi / 2 - np.mod(math.pi / 2 - np.asarray(d, dtype=np.float64), math.pi)


def encode_delta(anchors, targets):
    """Deltas ``(dx, dy, dh, dw, dtheta)`` taking ``anchors`` to ``targets``.

    Accepts single boxes or ``(N, 5)`` arrays.
    """
    a = np.asarray(anchors, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    single = a.ndim == 1 and t.ndim == 1
    a, t = np.broadcast_arrays(a.reshape(-1, 5), t.reshape(-1, 5))
    if np.any(a[:, 2:4] <= 0):
        raise ContractViolation("anchor sizes must be positive")
    if np.any(t[:, 2:4] <= 0):
        raise ContractViolation("target sizes must be positive")
    d = np.empty_like(a)
    d[:, 0] = (t[:, 0] - a[:, 0]) / a[:, 2]
    d[:, 1] = (t[:, 1] - a[:, 1]) / a[:, 3]
    d[:, 2] = np.log(t[:, 2] / a[:, 2])
    d[:, 3] = np.log(t[:, 3] / a[:, 3])
    d[:, 4] = wrap_half_pi(t[:, 4] - a[:, 4])
    return d[0] if single else d


def decode_delta(anchors, deltas):
    """Inverse of :func:`encode_delta`; the result's angle is in ``[0, pi)``."""
    a = np.asarray(anchors, dtype=np.float64)
    d = np.asarray(deltas, dtype=np.float64)
    single = a.ndim == 1 and d.ndim == 1
    a, d = np.broadcast_arrays(a.reshape(-1, 5), d.reshape(-1, 5))
    out = np.empty_like(a)
    out[:, 0] = a[:, 0] + d[:, 0] * a[:, 2]
    out[:, 1] = a[:, 1] + d[:, 1] * a[:, 3]
    out[:, 2] = a[:, 2] * np.exp(np.clip(d[:, 2], -MAX_LOG_DELTA, MAX_LOG_DELTA))
    out[:, 3] = a[:, 3] * np.exp(np.clip(d[:, 3], -MAX_LOG_DELTA, MAX_LOG_DELTA))
    out[:, 4] = normalize_angle(a[:, 4] + d[:, 4])
    return out[0] if single else out
