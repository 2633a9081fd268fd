"""Oracle suites: each fast implementation checked against an independent route.

Every suite takes its instance count as an argument so the same code backs
the quick ``ipssd selfcheck`` run and the full acceptance tests.  A suite
returns a :class:`CheckResult`; it never raises on a failed comparison.
"""
import math
import time
import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import oracles, synthetic
from .anchors import decode_delta, encode_delta
from .dataio import Detection, GroundTruth, tile_image
from .evaluation import compute_ap
from .geometry import (HorizontalBox, RotatedBox, SubGrid, iou_axis_aligned, iou_raster_oracle,
                       iou_rotated, rotate_point, subregion_corner)
from .pipeline import bench, build_model, detections_digest, run_pipeline
from .pooling import (PoolSpec, rotation_pool_backward, rotation_pool_forward,
                      rotation_pool_jvp)
from .rpn import generate_proposals, nms_rotated


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self):
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail} ({self.seconds:.1f}s)"


def _timed(fn):
    def run(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        return res

    run.__name__ = fn.__name__
    run.__doc__ = fn.__doc__
    return run


def random_box(rng, lo=1.0, hi=100.0, center=None, spread=None):
    h, w = rng.uniform(lo, hi, 2)
    if center is None:
        x, y = rng.uniform(0, 200, 2)
    else:
        x, y = np.asarray(center) + rng.uniform(-spread, spread, 2)
    return RotatedBox(float(x), float(y), float(h), float(w), float(rng.uniform(0, math.pi)))


def overlapping_pair(rng, lo=1.0, hi=100.0):
    a = random_box(rng, lo, hi)
    b = random_box(rng, lo, hi, center=(a.x, a.y), spread=0.5 * max(a.h, a.w))
    return a, b


# --- 1. rotated IoU ---------------------------------------------------------

@_timed
def check_iou_oracle(n_pairs=1000, grid_n=1000, seed=0, tol=0.01):
    """Polygon-clipping IoU against the raster count, plus the exact cases."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_pairs):
        a, b = overlapping_pair(rng)
        worst = max(worst, abs(iou_rotated(a, b) - iou_raster_oracle(a, b, grid_n)))
    ident_ok = all(iou_rotated(b, b) == 1.0 for b in (random_box(rng) for _ in range(100)))
    axis_err = 0.0
    for _ in range(200):
        a, b = overlapping_pair(rng)
        a = RotatedBox(a.x, a.y, a.h, a.w, 0.0)
        b = RotatedBox(b.x, b.y, b.h, b.w, 0.0)
        ha = HorizontalBox(a.x - a.h / 2, a.y - a.w / 2, a.x + a.h / 2, a.y + a.w / 2)
        hb = HorizontalBox(b.x - b.h / 2, b.y - b.w / 2, b.x + b.h / 2, b.y + b.w / 2)
        axis_err = max(axis_err, abs(iou_rotated(a, b) - iou_axis_aligned(ha, hb)))
    ok = worst < tol and ident_ok and axis_err < 1e-9
    return CheckResult("rotated IoU vs raster oracle", ok,
                       f"{n_pairs} pairs, max |diff| {worst:.2e} (< {tol}); identical -> 1.0: "
                       f"{ident_ok}; axis-aligned max |diff| {axis_err:.1e}")


# --- 2. sub-region corners and rotation modes -------------------------------

@_timed
def check_geometry(n=1000, seed=0):
    """Worked sub-region corners; isometry of the standard rotation; the
    cross-sign variant pinned as non-isometric."""
    cases = [
        ((10, 10, 4, 4, 0.0), (2, 2), (0, 0), (8.0, 8.0)),
        ((10, 10, 4, 4, 0.0), (2, 2), (1, 1), (10.0, 10.0)),
        ((0, 0, 2, 4, math.pi / 2), (1, 1), (0, 0), (2.0, -1.0)),
    ]
    corner_err = 0.0
    for box, (gh, gw), (u, v), want in cases:
        b = RotatedBox(*box)
        got = subregion_corner(b, SubGrid.for_box(b, gh, gw), u, v)
        corner_err = max(corner_err, abs(got[0] - want[0]), abs(got[1] - want[1]))
    rng = np.random.default_rng(seed)
    iso_err = 0.0
    for _ in range(n):
        p, c = rng.uniform(-50, 50, 2), rng.uniform(-50, 50, 2)
        t = rng.uniform(-2 * math.pi, 2 * math.pi)
        q = rotate_point(p, c, t)
        iso_err = max(iso_err, abs(math.dist(q, c) - math.dist(p, c)))
    # (1, 0) about the origin at 45 degrees: the cross-sign form lands on (c, s),
    # but (0, 1) lands on (s, c) too, so two distinct points collapse
    a = rotate_point((1.0, 0.0), (0.0, 0.0), math.pi / 4, mode="cross-sign")
    b = rotate_point((0.0, 1.0), (0.0, 0.0), math.pi / 4, mode="cross-sign")
    collapsed = math.dist(a, b) < 1e-12
    stretch = abs(math.hypot(*rotate_point((1.0, 1.0), (0, 0), math.pi / 4, "cross-sign"))
                  - math.sqrt(2))
    ok = corner_err < 1e-9 and iso_err < 1e-6 and collapsed and stretch > 0.1
    return CheckResult("sub-region corners and rotation modes", ok,
                       f"worked corners max err {corner_err:.1e}; isometry max err {iso_err:.1e}; "
                       f"cross-sign non-isometric at pi/4: {collapsed and stretch > 0.1}")


# --- 3. pooling gradient ----------------------------------------------------

def _pool_instance(rng):
    c = int(rng.integers(1, 9))
    fh, fw = (int(v) for v in rng.integers(4, 17, 2))
    stride = float(rng.choice([1.0, 2.0]))
    feat = rng.standard_normal((1, c, fh, fw))
    ext_x, ext_y = fw * stride, fh * stride
    roi = RotatedBox(float(rng.uniform(0.2, 0.8) * ext_x), float(rng.uniform(0.2, 0.8) * ext_y),
                     float(rng.uniform(2, 0.9 * ext_x)), float(rng.uniform(2, 0.9 * ext_y)),
                     float(rng.uniform(0, math.pi)))
    spec = PoolSpec(int(rng.integers(1, 5)), int(rng.integers(1, 5)), int(rng.integers(1, 4)))
    return feat, roi, spec, stride


@_timed
def check_pool_gradient(n=100, seed=0, eps=1e-3, rel_tol=1e-4, adj_tol=1e-5):
    """Backward against central finite differences, and the adjoint identity."""
    rng = np.random.default_rng(seed)
    done = skipped = 0
    worst_fd = worst_adj = 0.0
    while done < n:
        feat, roi, spec, stride = _pool_instance(rng)
        pooled, am = rotation_pool_forward(feat, roi, spec, stride)
        g = rng.standard_normal(pooled.shape)
        delta = rng.standard_normal(feat.shape)
        plus, am_p = rotation_pool_forward(feat + eps * delta, roi, spec, stride)
        minus, am_m = rotation_pool_forward(feat - eps * delta, roi, spec, stride)
        if not (np.array_equal(am, am_p) and np.array_equal(am, am_m)):
            skipped += 1  # a tie between samples flips inside the step
            continue
        grad = rotation_pool_backward(g, am, roi, spec, feat.shape, stride)
        fd = float(np.sum(g * (plus - minus)) / (2 * eps))
        an = float(np.sum(grad * delta))
        worst_fd = max(worst_fd, abs(fd - an) / max(abs(fd), abs(an), 1e-8))
        jd = rotation_pool_jvp(delta, am, roi, spec, stride)
        lhs, rhs = float(np.sum(g * jd)), an
        worst_adj = max(worst_adj, abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1.0))
        done += 1
    ok = worst_fd < rel_tol and worst_adj < adj_tol
    return CheckResult("rotation pooling gradient", ok,
                       f"{n} instances ({skipped} skipped at ties), FD max rel err {worst_fd:.1e}, "
                       f"adjoint max err {worst_adj:.1e}")


# --- 4. axis-aligned reduction ----------------------------------------------

@_timed
def check_pool_axis_aligned(n=100, seed=0, tol=1e-6):
    """theta = 0 and one sample per bin equals plain axis-aligned RoI pooling."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        feat, roi, spec, stride = _pool_instance(rng)
        roi = RotatedBox(roi.x, roi.y, roi.h, roi.w, 0.0)
        spec = PoolSpec(spec.H, spec.W, 1)
        got, _ = rotation_pool_forward(feat, roi, spec, stride)
        want = oracles.roi_pool_axis_aligned(feat, (roi.x, roi.y, roi.h, roi.w), spec.H, spec.W,
                                             stride)
        worst = max(worst, float(np.max(np.abs(got - want))))
    return CheckResult("axis-aligned pooling reduction", worst < tol,
                       f"{n} instances, max |diff| {worst:.1e}")


# --- 5. NMS and proposals ---------------------------------------------------

def _clustered_boxes(rng, n):
    centers = rng.uniform(0, 150, (max(1, n // 8), 2))
    rows = []
    for i in range(n):
        c = centers[rng.integers(len(centers))]
        b = random_box(rng, 5, 40, center=c, spread=10)
        rows.append(b.as_array())
    return np.array(rows).reshape(-1, 5)


@_timed
def check_nms(n_sets=200, seed=0):
    """Greedy NMS and proposal selection against the quadratic references."""
    rng = np.random.default_rng(seed)
    mismatches = 0
    for _ in range(n_sets):
        n = int(rng.integers(0, 101))
        boxes = _clustered_boxes(rng, n)
        scores = np.round(rng.uniform(0, 1, n), 2)  # coarse, so ties occur
        thr = float(rng.uniform(0.1, 0.9))
        if list(nms_rotated(boxes, scores, thr)) != oracles.nms_quadratic(boxes, scores, thr):
            mismatches += 1
        if n == 0:
            continue
        anchors = _clustered_boxes(rng, n)
        deltas = rng.normal(0, 0.1, (n, 5))
        pre, post = int(rng.integers(1, n + 1)), int(rng.integers(1, n + 1))
        _, _, idx = generate_proposals(scores, deltas, anchors, pre, thr, post)
        if list(idx) != oracles.proposals_bruteforce(scores, deltas, anchors, pre, thr, post):
            mismatches += 1
    return CheckResult("NMS and proposals vs brute force", mismatches == 0,
                       f"{n_sets} random sets, {mismatches} mismatches")


# --- 6. delta coding --------------------------------------------------------

@_timed
def check_delta_roundtrip(n=1000, seed=0, tol=1e-5):
    rng = np.random.default_rng(seed)
    anchors = np.array([random_box(rng).as_array() for _ in range(n)])
    targets = np.array([random_box(rng).as_array() for _ in range(n)])
    back = decode_delta(anchors, encode_delta(anchors, targets))
    err = np.abs(back[:, :4] - targets[:, :4]).max()
    dt = np.abs(back[:, 4] - targets[:, 4])
    err = max(err, float(np.minimum(dt, math.pi - dt).max()))
    return CheckResult("delta coding round trip", err < tol, f"{n} pairs, max err {err:.1e}")


# --- 7. tiling --------------------------------------------------------------

def _axis_covered(origins, size, extent):
    covered = np.zeros(extent, bool)
    for o in origins:
        if o < 0 or o + size > extent:
            return False
        covered[o:o + size] = True
    return bool(covered.all())


@_timed
def check_tiling(n=100, seed=0):
    """The 1100 x 1100 example and the coverage property on random sizes."""
    got = sorted((p.origin_x, p.origin_y) for p in tile_image(1100, 1100, 600, 100))
    example_ok = got == [(0, 0), (0, 500), (500, 0), (500, 500)]
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(n):
        w, h = (int(v) for v in rng.integers(1, 3000, 2))
        patch = int(rng.integers(50, 700))
        overlap = int(rng.integers(0, patch))
        stride = patch - overlap
        ps = tile_image(w, h, patch, overlap)
        xs = sorted({p.origin_x for p in ps})
        ys = sorted({p.origin_y for p in ps})
        pw, ph = ps[0].width, ps[0].height
        expect = lambda e: 1 if e <= patch else math.ceil((e - patch) / stride) + 1
        if not (_axis_covered(xs, pw, w) and _axis_covered(ys, ph, h)
                and len(xs) == expect(w) and len(ys) == expect(h) and len(ps) == len(xs) * len(ys)):
            bad += 1
    return CheckResult("tiling protocol", example_ok and bad == 0,
                       f"1100x1100 -> {got}; {n} random sizes, {bad} coverage failures")


# --- 8. mAP harness ---------------------------------------------------------

def hand_fixture():
    """Two ground-truth boxes; detections scored 0.9 (hit), 0.8 (miss), 0.7 (hit)."""
    g1 = RotatedBox(20, 20, 10, 10, 0)
    g2 = RotatedBox(60, 60, 10, 10, 0)
    gts = [GroundTruth(g1, "plane", 0, "img"), GroundTruth(g2, "plane", 0, "img")]
    dets = [Detection(g1, "plane", 0.9, "img"),
            Detection(RotatedBox(100, 100, 10, 10, 0), "plane", 0.8, "img"),
            Detection(g2, "plane", 0.7, "img")]
    return dets, gts


def random_micro_fixture(rng):
    classes = ["a", "b"][:int(rng.integers(1, 3))]
    images = ["i0", "i1"][:int(rng.integers(1, 3))]
    gts = []
    for _ in range(int(rng.integers(1, 5))):
        b = random_box(rng, 5, 30)
        gts.append(GroundTruth(b, str(rng.choice(classes)), int(rng.random() < 0.2),
                               str(rng.choice(images))))
    dets = []
    for _ in range(int(rng.integers(0, 7))):
        if rng.random() < 0.7:
            g = gts[int(rng.integers(len(gts)))]
            jit = rng.normal(0, [2.0, 2.0, 0.15, 0.15, 0.2])
            box = RotatedBox(g.box.x + jit[0], g.box.y + jit[1], g.box.h * math.exp(jit[2]),
                             g.box.w * math.exp(jit[3]), g.box.theta + jit[4])
            cls, img = g.class_name, g.source_id
        else:
            box = random_box(rng, 5, 30)
            cls, img = str(rng.choice(classes)), str(rng.choice(images))
        dets.append(Detection(box, cls, float(rng.choice([0.3, 0.5, 0.7, 0.9])), img))
    return dets, gts


@_timed
def check_map(n=50, seed=0):
    """The 5/6 hand fixture exactly, and random micro-fixtures against the
    exhaustive assignment evaluator."""
    dets, gts = hand_fixture()
    rep = compute_ap(dets, gts)
    r = rep.per_class["plane"]
    hand_ok = (rep.mAP == float(Fraction(5, 6))
               and r.precision == [1, Fraction(1, 2), Fraction(2, 3)]
               and r.recall == [Fraction(1, 2), Fraction(1, 2), 1])
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(n):
        dets, gts = random_micro_fixture(rng)
        mode = str(rng.choice(["obb", "hbb"]))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rep = compute_ap(dets, gts, 0.5, mode)
        per, m_ap = oracles.average_precision_exhaustive(dets, gts, 0.5, mode)
        if {k: v.ap for k, v in rep.per_class.items()} != per or rep.mAP != m_ap:
            bad += 1
    return CheckResult("mAP harness", hand_ok and bad == 0,
                       f"hand fixture AP = 5/6 exactly: {hand_ok}; {n} micro-fixtures, "
                       f"{bad} mismatches vs exhaustive evaluator")


# --- 9. planted objects -----------------------------------------------------

@_timed
def check_planted(n_scenes=5, seed=0, min_iou=0.5, min_map=0.9):
    """Template weights on synthetic scenes with three bright rectangles."""
    cfg = synthetic.template_config()
    model = build_model(cfg, synthetic.template_weights(cfg))
    all_dets, all_gts = [], []
    failures = []
    for s in range(seed, seed + n_scenes):
        image, boxes = synthetic.planted_scene(s)
        sid = f"scene{s}"
        dets = run_pipeline(image, model=model, source_id=sid)
        all_dets += dets
        all_gts += [GroundTruth(b, cfg.classes[0], 0, sid) for b in boxes]
        best = [max((iou_rotated(d.box, b) for b in boxes), default=0.0) for d in dets]
        covered = all(any(iou_rotated(d.box, b) >= min_iou for d in dets) for b in boxes)
        if len(dets) < len(boxes) or min(best, default=0.0) < min_iou or not covered:
            failures.append(sid)
    m_ap = compute_ap(all_dets, all_gts).mAP
    ok = not failures and m_ap >= min_map
    return CheckResult("planted-object detection", ok,
                       f"{n_scenes} scenes, {len(all_dets)} detections, failing scenes "
                       f"{failures or 'none'}, mAP {m_ap:.3f} (>= {min_map})")


# --- 10. determinism --------------------------------------------------------

@_timed
def check_determinism(repeats=3):
    """Two detection runs agree bitwise and bench reports median/p95."""
    cfg = synthetic.template_config()
    model = build_model(cfg, synthetic.template_weights(cfg))
    image, _ = synthetic.planted_scene(0)
    a = detections_digest(run_pipeline(image, model=model))
    b = detections_digest(run_pipeline(image, model=model))
    rep = bench([image], model=model, repeats=repeats)
    well_formed = all(len(rep[k]["samples"]) == repeats and rep[k]["median"] > 0
                      and rep[k]["p95"] >= min(rep[k]["samples"])
                      for k in ("fps_inclusive", "fps_exclusive"))
    ok = a == b and well_formed and rep["deterministic"]
    return CheckResult("determinism and bench report", ok,
                       f"repeat digests equal: {a == b}; bench median "
                       f"{rep['fps_inclusive']['median']:.2f} fps over {repeats} repeats")


QUICK = {
    "iou": lambda: check_iou_oracle(100, 1000),
    "geometry": lambda: check_geometry(200),
    "pool-gradient": lambda: check_pool_gradient(20),
    "pool-axis": lambda: check_pool_axis_aligned(20),
    "nms": lambda: check_nms(30),
    "delta": lambda: check_delta_roundtrip(1000),
    "tiling": lambda: check_tiling(100),
    "map": lambda: check_map(20),
    "planted": lambda: check_planted(1),
    "determinism": lambda: check_determinism(3),
}

FULL = {
    "iou": lambda: check_iou_oracle(1000, 1000),
    "geometry": lambda: check_geometry(1000),
    "pool-gradient": lambda: check_pool_gradient(100),
    "pool-axis": lambda: check_pool_axis_aligned(100),
    "nms": lambda: check_nms(200),
    "delta": lambda: check_delta_roundtrip(1000),
    "tiling": lambda: check_tiling(100),
    "map": lambda: check_map(50),
    "planted": lambda: check_planted(5),
    "determinism": lambda: check_determinism(3),
}


def run_all(full=False, only=None, out=print):
    """Run the suites in order; returns the list of results."""
    table = FULL if full else QUICK
    results = []
    for name, fn in table.items():
        if only and name not in only:
            continue
        res = fn()
        out(res.line())
        results.append(res)
    return results
