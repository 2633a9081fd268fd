"""Rotated-rectangle geometry.

Boxes are ``(x, y, h, w, theta)``: center, extent along the ``theta``
direction (``h``), extent across it (``w``), and ``theta`` in radians from
the +x axis, normalized to ``[0, pi)``.  Image coordinates are continuous
with pixel ``(col, row)`` centered at ``(col + 0.5, row + 0.5)``.

Arrays of boxes are ``(N, 5)`` float arrays with the same column order.
"""
import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation

PI = math.pi


def normalize_angle(theta):
    """Map an angle (scalar or array) into ``[0, pi)``."""
    t = np.mod(theta, PI)
    # mod can round up to exactly pi for tiny negative inputs
    t = np.where(t >= PI, 0.0, t)
    return float(t) if np.ndim(t) == 0 else t


@dataclass(frozen=True)
class RotatedBox:
    x: float
    y: float
    h: float
    w: float
    theta: float = 0.0

    def __post_init__(self):
        vals = (self.x, self.y, self.h, self.w, self.theta)
        if not all(math.isfinite(v) for v in vals):
            raise ContractViolation(f"non-finite box parameters {vals}")
        if self.h <= 0 or self.w <= 0:
            raise ContractViolation(f"box sides must be positive, got h={self.h}, w={self.w}")
        for name in ("x", "y", "h", "w"):
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, "theta", normalize_angle(float(self.theta)))

    @classmethod
    def from_array(cls, row):
        return cls(*(float(v) for v in row[:5]))

    def as_array(self):
        return np.array([self.x, self.y, self.h, self.w, self.theta])

    @property
    def area(self):
        return self.h * self.w


@dataclass(frozen=True)
class HorizontalBox:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        if not (self.xmin < self.xmax and self.ymin < self.ymax):
            raise ContractViolation(f"degenerate horizontal box {self}")

    @property
    def area(self):
        return (self.xmax - self.xmin) * (self.ymax - self.ymin)


@dataclass(frozen=True)
class SubGrid:
    """``H x W`` split of a box into equally sized, equally rotated cells."""

    H: int
    W: int
    S_h: float
    S_w: float

    @classmethod
    def for_box(cls, box, H, W):
        if H < 1 or W < 1:
            raise ContractViolation(f"sub-grid counts must be >= 1, got {(H, W)}")
        box = as_box(box)
        return cls(H, W, box.h / H, box.w / W)


def as_box(b):
    return b if isinstance(b, RotatedBox) else RotatedBox.from_array(b)


def rotate_point(p, center, theta, mode="standard"):
    """Rotate ``p`` about ``center`` by ``theta``.

    ``mode="standard"`` is the orthogonal rotation.  ``mode="cross-sign"``
    keeps ``+sin`` in both cross terms::

        x' = (x0 - x) cos + (y0 - y) sin + x
        y' = (y0 - y) cos + (x0 - x) sin + y

    which is not a rotation (its determinant is ``cos^2 - sin^2``); it is
    kept only for side-by-side comparison with the orthogonal form.
    """
    dx = p[0] - center[0]
    dy = p[1] - center[1]
    c, s = math.cos(theta), math.sin(theta)
    if mode == "standard":
        return (dx * c - dy * s + center[0], dx * s + dy * c + center[1])
    if mode == "cross-sign":
        return (dx * c + dy * s + center[0], dy * c + dx * s + center[1])
    raise ContractViolation(f"unknown rotation mode {mode!r}")


def subregion_corner(box, grid, u, v, mode="standard"):
    """Origin corner of sub-region ``(u, v)``, rotated with the box.

    Before rotation the corner is ``(x - h/2 + u*S_h, y - w/2 + v*S_w)``.
    """
    box = as_box(box)
    if not (0 <= u < grid.H and 0 <= v < grid.W):
        raise ContractViolation(f"sub-region index {(u, v)} outside {grid.H}x{grid.W} grid")
    x0 = box.x - box.h / 2 + u * grid.S_h
    y0 = box.y - box.w / 2 + v * grid.S_w
    return rotate_point((x0, y0), (box.x, box.y), box.theta, mode)


def axes(theta):
    """Unit vectors along ``h`` and along ``w`` for angle ``theta``."""
    c, s = math.cos(theta), math.sin(theta)
    return (c, s), (-s, c)


def corners(box):
    """The four vertices as a ``(4, 2)`` array, counterclockwise (y up).

    Built by rotating ``(x -+ h/2, y -+ w/2)`` about the center.
    """
    b = as_box(box)
    local = ((-b.h / 2, -b.w / 2), (b.h / 2, -b.w / 2), (b.h / 2, b.w / 2), (-b.h / 2, b.w / 2))
    return np.array([rotate_point((b.x + a, b.y + d), (b.x, b.y), b.theta) for a, d in local])


def corners_many(boxes):
    """Vectorized :func:`corners` for an ``(N, 5)`` array -> ``(N, 4, 2)``."""
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 5)
    x, y, h, w, t = boxes.T
    c, s = np.cos(t), np.sin(t)
    sx = np.array([-0.5, 0.5, 0.5, -0.5])
    sy = np.array([-0.5, -0.5, 0.5, 0.5])
    a = sx[None, :] * h[:, None]
    d = sy[None, :] * w[:, None]
    px = a * c[:, None] - d * s[:, None] + x[:, None]
    py = a * s[:, None] + d * c[:, None] + y[:, None]
    return np.stack([px, py], axis=-1)


def polygon_area(pts):
    """Signed shoelace area (positive for counterclockwise)."""
    pts = np.asarray(pts, dtype=np.float64)
    if len(pts) < 3:
        return 0.0
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def clip_polygon(subject, clip):
    """Sutherland-Hodgman: clip ``subject`` by the convex CCW polygon ``clip``."""
    out = [tuple(p) for p in subject]
    m = len(clip)
    for k in range(m):
        px, py = clip[k]
        qx, qy = clip[(k + 1) % m]
        ex, ey = qx - px, qy - py
        inp, out = out, []
        if not inp:
            break
        prev = inp[-1]
        d_prev = ex * (prev[1] - py) - ey * (prev[0] - px)
        for cur in inp:
            d_cur = ex * (cur[1] - py) - ey * (cur[0] - px)
            if d_cur >= 0:
                if d_prev < 0:
                    t = d_prev / (d_prev - d_cur)
                    out.append((prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])))
                out.append(cur)
            elif d_prev >= 0:
                t = d_prev / (d_prev - d_cur)
                out.append((prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])))
            prev, d_prev = cur, d_cur
    return out


def intersection_area(a, b):
    a, b = as_box(a), as_box(b)
    poly = clip_polygon(corners(a), corners(b))
    return max(polygon_area(poly), 0.0) if len(poly) >= 3 else 0.0


def iou_rotated(a, b):
    """Exact IoU of two rotated rectangles via polygon clipping."""
    a, b = as_box(a), as_box(b)
    if a == b:
        return 1.0
    # cheap reject: circumscribed circles do not touch
    ra = 0.5 * math.hypot(a.h, a.w)
    rb = 0.5 * math.hypot(b.h, b.w)
    if math.hypot(a.x - b.x, a.y - b.y) > ra + rb:
        return 0.0
    inter = min(intersection_area(a, b), a.area, b.area)
    union = a.area + b.area - inter
    return float(min(max(inter / union, 0.0), 1.0)) if union > 0 else 0.0


def _clip_many(px, py, count, ex0, ey0, ex1, ey1):
    """Clip N padded polygons against one directed edge each (vectorized S-H).

    ``px, py`` are ``(N, M)`` with the first ``count[i]`` entries valid.
    """
    n, m = px.shape
    idx = np.arange(m)[None, :]
    valid = idx < count[:, None]
    nxt = np.where(idx + 1 < count[:, None], idx + 1, 0)
    qx = np.take_along_axis(px, nxt, 1)
    qy = np.take_along_axis(py, nxt, 1)
    dx, dy = (ex1 - ex0)[:, None], (ey1 - ey0)[:, None]
    d_cur = dx * (py - ey0[:, None]) - dy * (px - ex0[:, None])
    d_nxt = dx * (qy - ey0[:, None]) - dy * (qx - ex0[:, None])
    in_cur, in_nxt = d_cur >= 0, d_nxt >= 0
    cross = valid & (in_cur != in_nxt)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(cross, d_cur / (d_cur - d_nxt), 0.0)
    ix = px + t * (qx - px)
    iy = py + t * (qy - py)
    # for each edge cur->nxt emit [intersection?, nxt?]
    ox = np.stack([ix, qx], axis=2).reshape(n, 2 * m)
    oy = np.stack([iy, qy], axis=2).reshape(n, 2 * m)
    keep = np.stack([cross, valid & in_nxt], axis=2).reshape(n, 2 * m)
    order = np.argsort(~keep, axis=1, kind="stable")
    new_count = keep.sum(axis=1)
    width = max(int(new_count.max(initial=0)), 1)
    order = order[:, :width]
    return (np.take_along_axis(ox, order, 1), np.take_along_axis(oy, order, 1), new_count)


def iou_rotated_many(box, boxes):
    """IoU of one box against an ``(N, 5)`` array, same algorithm as
    :func:`iou_rotated` but batched with numpy."""
    b0 = as_box(box)
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 5)
    n = len(boxes)
    out = np.zeros(n)
    if n == 0:
        return out
    r0 = 0.5 * math.hypot(b0.h, b0.w)
    rr = 0.5 * np.hypot(boxes[:, 2], boxes[:, 3])
    near = np.hypot(boxes[:, 0] - b0.x, boxes[:, 1] - b0.y) <= r0 + rr
    idx = np.nonzero(near)[0]
    if len(idx):
        sub = boxes[idx]
        c0 = corners(b0)
        cb = corners_many(sub)
        px = np.repeat(c0[None, :, 0], len(idx), 0)
        py = np.repeat(c0[None, :, 1], len(idx), 0)
        count = np.full(len(idx), 4)
        for k in range(4):
            p, q = cb[:, k], cb[:, (k + 1) % 4]
            px, py, count = _clip_many(px, py, count, p[:, 0], p[:, 1], q[:, 0], q[:, 1])
        m = px.shape[1]
        j = np.arange(m)[None, :]
        valid = j < count[:, None]
        nxt = np.where(j + 1 < count[:, None], j + 1, 0)
        qx = np.take_along_axis(px, nxt, 1)
        qy = np.take_along_axis(py, nxt, 1)
        inter = 0.5 * np.where(valid, px * qy - py * qx, 0.0).sum(axis=1)
        inter = np.where(count >= 3, np.maximum(inter, 0.0), 0.0)
        area_b = sub[:, 2] * sub[:, 3]
        inter = np.minimum(inter, np.minimum(area_b, b0.area))
        union = b0.area + area_b - inter
        out[idx] = np.clip(inter / union, 0.0, 1.0)
    same = np.all(boxes == b0.as_array()[None, :], axis=1)
    out[same] = 1.0
    return out


def iou_axis_aligned(a, b):
    """Closed-form IoU of two :class:`HorizontalBox` values."""
    iw = min(a.xmax, b.xmax) - max(a.xmin, b.xmin)
    ih = min(a.ymax, b.ymax) - max(a.ymin, b.ymin)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def contains(box, pts):
    """Boolean mask of which points lie in the closed rectangle."""
    b = as_box(box)
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
    (ch, sh), (cw, sw) = axes(b.theta)
    dx, dy = pts[:, 0] - b.x, pts[:, 1] - b.y
    return (np.abs(dx * ch + dy * sh) <= b.h / 2) & (np.abs(dx * cw + dy * sw) <= b.w / 2)


def to_horizontal(box):
    c = corners(box)
    lo, hi = c.min(axis=0), c.max(axis=0)
    return HorizontalBox(float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))


def iou_raster_oracle(a, b, grid_n=1000):
    """IoU estimated by counting cell centers of a ``grid_n x grid_n`` lattice
    laid over the union's bounding box.  Deterministic; no clipping involved.
    """
    if grid_n < 100:
        raise ContractViolation(f"grid_n must be >= 100, got {grid_n}")
    a, b = as_box(a), as_box(b)
    ha, hb = to_horizontal(a), to_horizontal(b)
    x0, x1 = min(ha.xmin, hb.xmin), max(ha.xmax, hb.xmax)
    y0, y1 = min(ha.ymin, hb.ymin), max(ha.ymax, hb.ymax)
    xs = x0 + (np.arange(grid_n) + 0.5) * ((x1 - x0) / grid_n)
    ys = y0 + (np.arange(grid_n) + 0.5) * ((y1 - y0) / grid_n)

    def inside(box):
        (ch, sh), (cw, sw) = axes(box.theta)
        # the rotated coordinates are separable sums of an x part and a y part
        along = (xs - box.x)[None, :] * ch + (ys - box.y)[:, None] * sh
        across = (xs - box.x)[None, :] * cw + (ys - box.y)[:, None] * sw
        return (np.abs(along) <= box.h / 2) & (np.abs(across) <= box.w / 2)

    ia, ib = inside(a), inside(b)
    either = np.count_nonzero(ia | ib)
    if either == 0:
        return 0.0
    return np.count_nonzero(ia & ib) / either
