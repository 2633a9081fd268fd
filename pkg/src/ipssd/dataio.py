"""Annotation ingestion, patch tiling, augmentation and detection files.

DOTA annotation lines look like::

    x1 y1 x2 y2 x3 y3 x4 y4 class_name difficulty

Detection lines are ``source_id class score x y h w theta_deg`` with six
decimals per number.
"""
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ContractViolation, DataError, ParseError
from .geometry import RotatedBox, corners, normalize_angle, polygon_area
from .tensor import resize_bilinear

_META_PREFIXES = ("imagesource", "gsd")


@dataclass(frozen=True)
class AnnotationRecord:
    polygon: tuple  # four (x, y) pairs
    class_name: str
    difficulty: int = 0

    def __post_init__(self):
        pts = tuple((float(x), float(y)) for x, y in self.polygon)
        if len(pts) != 4:
            raise ContractViolation(f"polygon needs 4 points, got {len(pts)}")
        if len(set(pts)) != 4:
            raise ContractViolation(f"polygon has repeated points: {pts}")
        if abs(polygon_area(pts)) <= 0:
            raise ContractViolation(f"polygon has zero area: {pts}")
        object.__setattr__(self, "polygon", pts)

    def to_box(self):
        return polygon_to_rotated(self.polygon)


@dataclass(frozen=True)
class PatchSpec:
    origin_x: int
    origin_y: int
    size: int
    source_id: str = ""
    width: int = None  # actual extent when clamped to a small image
    height: int = None
    clamped: bool = False

    def __post_init__(self):
        if self.size <= 0 or self.origin_x < 0 or self.origin_y < 0:
            raise ContractViolation(f"invalid patch {self}")
        if self.width is None:
            object.__setattr__(self, "width", self.size)
        if self.height is None:
            object.__setattr__(self, "height", self.size)


@dataclass(frozen=True)
class GroundTruth:
    box: RotatedBox
    class_name: str
    difficulty: int = 0
    source_id: str = ""


@dataclass(frozen=True)
class Detection:
    box: RotatedBox
    class_name: str
    score: float
    source_id: str = ""


@dataclass
class RecordSet:
    """An image's size, its labeled boxes and (optionally) its pixels."""

    width: int
    height: int
    objects: list = field(default_factory=list)  # GroundTruth
    image: np.ndarray = None  # (H, W) or (H, W, C)


# --- DOTA text --------------------------------------------------------------

def parse_dota(text, source=None):
    """Parse DOTA annotation text.

    Returns ``(records, errors)``: malformed lines do not stop parsing, each
    becomes a :class:`ParseError` carrying its line number.
    """
    records, errors = [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.lower().startswith(_META_PREFIXES):
            continue
        parts = line.split()
        if len(parts) < 9:
            errors.append(ParseError(lineno, f"expected 8 coordinates and a class, got {len(parts)} fields", source))
            continue
        try:
            coords = [float(v) for v in parts[:8]]
        except ValueError:
            errors.append(ParseError(lineno, "non-numeric coordinate", source))
            continue
        if not all(math.isfinite(v) for v in coords):
            errors.append(ParseError(lineno, "non-finite coordinate", source))
            continue
        difficulty = 0
        if len(parts) >= 10:
            try:
                difficulty = int(parts[9])
            except ValueError:
                errors.append(ParseError(lineno, f"difficulty {parts[9]!r} is not an integer", source))
                continue
        pts = list(zip(coords[0::2], coords[1::2]))
        try:
            records.append(AnnotationRecord(tuple(pts), parts[8], difficulty))
        except ContractViolation as exc:
            errors.append(ParseError(lineno, str(exc), source))
    return records, errors


def format_dota(records):
    lines = []
    for r in records:
        coords = " ".join(f"{v:.1f}" for p in r.polygon for v in p)
        lines.append(f"{coords} {r.class_name} {r.difficulty}")
    return "\n".join(lines) + ("\n" if lines else "")


# --- minimum-area rectangle -------------------------------------------------

def convex_hull(points):
    """Monotone-chain hull, counterclockwise, collinear points dropped."""
    pts = sorted(set(map(tuple, np.asarray(points, dtype=np.float64).tolist())))
    if len(pts) < 3:
        return np.array(pts)

    def turn(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and turn(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and turn(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def polygon_to_rotated(polygon):
    """Minimum-area enclosing rectangle (rotating calipers over the hull).

    The result has ``h >= w`` (``theta`` points along the long side); for
    squares ``theta`` is reduced into ``[0, pi/2)``.
    """
    hull = convex_hull(polygon)
    if len(hull) < 3 or abs(polygon_area(hull)) < 1e-12:
        raise ContractViolation(f"degenerate polygon {np.asarray(polygon).tolist()}")
    best = None
    n = len(hull)
    for i in range(n):
        ex, ey = hull[(i + 1) % n] - hull[i]
        t = math.atan2(ey, ex)
        c, s = math.cos(t), math.sin(t)
        along = hull[:, 0] * c + hull[:, 1] * s
        across = -hull[:, 0] * s + hull[:, 1] * c
        area = (along.max() - along.min()) * (across.max() - across.min())
        if best is None or area < best[0] - 1e-9 * max(area, 1.0):
            best = (area, t, along.min(), along.max(), across.min(), across.max())
    _, t, a0, a1, b0, b1 = best
    c, s = math.cos(t), math.sin(t)
    ma, mb = (a0 + a1) / 2, (b0 + b1) / 2
    cx, cy = ma * c - mb * s, ma * s + mb * c
    h, w = a1 - a0, b1 - b0
    if w > h * (1 + 1e-12):
        h, w, t = w, h, t + math.pi / 2
    t = normalize_angle(t)
    if abs(h - w) <= 1e-9 * h:
        t = math.fmod(t, math.pi / 2)
        if math.pi / 2 - t < 1e-12:
            t = 0.0
    return RotatedBox(cx, cy, h, w, t)


def box_to_polygon(box):
    return tuple(map(tuple, corners(box).tolist()))


# --- tiling -----------------------------------------------------------------

def _origins(extent, patch, stride):
    if extent <= patch:
        return [0]
    out = list(range(0, extent - patch, stride))
    out.append(extent - patch)  # last patch flush with the far edge
    return sorted(set(out))


def tile_image(img_w, img_h, patch=600, overlap=100, source_id=""):
    """Patch origins covering an image with ``patch``-sized, ``overlap``-sharing tiles.

    Images smaller than a patch on some axis yield one clamped patch on that
    axis, flagged ``clamped=True``.
    """
    if not patch > overlap >= 0:
        raise ContractViolation(f"need patch > overlap >= 0, got patch={patch}, overlap={overlap}")
    if img_w < 1 or img_h < 1:
        raise ContractViolation(f"image must be non-empty, got {img_w}x{img_h}")
    stride = patch - overlap
    clamped = img_w < patch or img_h < patch
    pw, ph = min(patch, img_w), min(patch, img_h)
    return [PatchSpec(ox, oy, patch, source_id, pw, ph, clamped)
            for oy in _origins(img_h, patch, stride)
            for ox in _origins(img_w, patch, stride)]


def assign_to_patch(objects, p):
    """Objects whose center lies in patch ``p``, shifted into patch coordinates."""
    out = []
    for o in objects:
        b = o.box
        if p.origin_x <= b.x < p.origin_x + p.width and p.origin_y <= b.y < p.origin_y + p.height:
            nb = RotatedBox(b.x - p.origin_x, b.y - p.origin_y, b.h, b.w, b.theta)
            out.append(replace(o, box=nb))
    return out


def crop_patch(image, p):
    return image[p.origin_y:p.origin_y + p.height, p.origin_x:p.origin_x + p.width].copy()


# --- augmentation -----------------------------------------------------------

def _rotate90_once(rs):
    # (x, y) -> (H - y, x): a +90 degree turn in image coordinates
    objs = [replace(o, box=RotatedBox(rs.height - o.box.y, o.box.x, o.box.h, o.box.w,
                                      o.box.theta + math.pi / 2))
            for o in rs.objects]
    img = None if rs.image is None else np.ascontiguousarray(np.rot90(rs.image, -1, axes=(0, 1)))
    return RecordSet(rs.height, rs.width, objs, img)


def augment(rs, op, value):
    """Apply ``("rotate90", k)`` or ``("rescale", s)`` to a :class:`RecordSet`.

    Rotation turns the image by ``k * 90`` degrees (``theta -> theta + k*pi/2``);
    rescale multiplies centers and sizes by ``s``.  Pixels, when present, are
    transformed the same way.
    """
    if op == "rotate90":
        k = int(value)
        if k not in (0, 1, 2, 3):
            raise ContractViolation(f"rotate90 takes k in 0..3, got {value}")
        for _ in range(k):
            rs = _rotate90_once(rs)
        return RecordSet(rs.width, rs.height, list(rs.objects), rs.image)
    if op == "rescale":
        s = float(value)
        if s <= 0:
            raise ContractViolation(f"rescale factor must be positive, got {s}")
        if s == 1.0:
            return RecordSet(rs.width, rs.height, list(rs.objects), rs.image)
        objs = [replace(o, box=RotatedBox(o.box.x * s, o.box.y * s, o.box.h * s, o.box.w * s,
                                          o.box.theta))
                for o in rs.objects]
        nw, nh = max(1, round(rs.width * s)), max(1, round(rs.height * s))
        img = None
        if rs.image is not None:
            arr = rs.image.astype(np.float32)
            chw = arr[None, None] if arr.ndim == 2 else arr.transpose(2, 0, 1)[None]
            res = resize_bilinear(chw, nh, nw)[0]
            img = res[0] if arr.ndim == 2 else res.transpose(1, 2, 0)
            if rs.image.dtype == np.uint8:
                img = np.clip(np.rint(img), 0, 255).astype(np.uint8)
        return RecordSet(nw, nh, objs, img)
    raise ContractViolation(f"unknown augmentation {op!r}")


# --- detection lines --------------------------------------------------------

def format_detection(d):
    b = d.box
    return (f"{d.source_id} {d.class_name} {d.score:.6f} {b.x:.6f} {b.y:.6f} "
            f"{b.h:.6f} {b.w:.6f} {math.degrees(b.theta):.6f}")


def write_detections(detections, sink):
    """Write detection lines to a path or a text stream."""
    text = "".join(format_detection(d) + "\n" for d in detections)
    if hasattr(sink, "write"):
        sink.write(text)
    else:
        Path(sink).write_text(text, encoding="utf-8")


def read_detections(source):
    """Read detection lines from a path, a stream or a string with newlines."""
    if hasattr(source, "read"):
        text = source.read()
    elif isinstance(source, str) and "\n" in source:
        text = source
    else:
        try:
            text = Path(source).read_text(encoding="utf-8")
        except OSError as exc:
            raise DataError(f"cannot read detections from {source}: {exc}") from exc
    out = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 8:
            raise ParseError(lineno, f"expected 8 fields, got {len(parts)}")
        try:
            score, x, y, h, w, deg = (float(v) for v in parts[2:])
            box = RotatedBox(x, y, h, w, math.radians(deg))
        except (ValueError, ContractViolation) as exc:
            raise ParseError(lineno, str(exc)) from exc
        out.append(Detection(box, parts[1], score, parts[0]))
    return out


def load_ground_truth(text, source_id="", source=None):
    """DOTA text -> list of :class:`GroundTruth`; raises on the first bad line."""
    records, errors = parse_dota(text, source)
    if errors:
        raise errors[0]
    return [GroundTruth(r.to_box(), r.class_name, r.difficulty, source_id) for r in records]


# --- PGM / PPM --------------------------------------------------------------

_TOKEN = re.compile(rb"(?:\s*(?:#[^\n]*\n)?)*\s*(\S+)")


def read_pnm(path_or_bytes):
    """Read binary PGM (P5) or PPM (P6) with maxval <= 255.

    Returns ``(H, W)`` or ``(H, W, 3)`` uint8.
    """
    if isinstance(path_or_bytes, (bytes, bytearray)):
        blob = bytes(path_or_bytes)
    else:
        try:
            blob = Path(path_or_bytes).read_bytes()
        except OSError as exc:
            raise DataError(f"cannot read image {path_or_bytes}: {exc}") from exc
    pos = 0
    fields = []
    for _ in range(4):
        m = _TOKEN.match(blob, pos)
        if not m:
            raise DataError("truncated PNM header")
        fields.append(m.group(1))
        pos = m.end()
    magic = fields[0]
    if magic not in (b"P5", b"P6"):
        raise DataError(f"unsupported image format {magic!r}; only binary PGM/PPM")
    try:
        w, h, maxval = (int(v) for v in fields[1:])
    except ValueError as exc:
        raise DataError("malformed PNM header") from exc
    if maxval < 1 or maxval > 255:
        raise DataError(f"only 8-bit PNM supported, maxval={maxval}")
    pos += 1  # single whitespace byte after maxval
    ch = 1 if magic == b"P5" else 3
    need = w * h * ch
    data = np.frombuffer(blob, np.uint8, count=need, offset=pos) if len(blob) - pos >= need else None
    if data is None:
        raise DataError("PNM pixel data truncated")
    return data.reshape((h, w) if ch == 1 else (h, w, 3)).copy()


def write_pnm(path, image):
    image = np.asarray(image)
    if image.dtype != np.uint8:
        raise ContractViolation("write_pnm expects uint8 pixels")
    if image.ndim == 2:
        magic = b"P5"
    elif image.ndim == 3 and image.shape[2] == 3:
        magic = b"P6"
    else:
        raise ContractViolation(f"cannot write image of shape {image.shape}")
    h, w = image.shape[:2]
    Path(path).write_bytes(magic + f"\n{w} {h}\n255\n".encode() + np.ascontiguousarray(image).tobytes())
