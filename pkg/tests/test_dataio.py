import io
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ipssd.dataio import (AnnotationRecord, Detection, GroundTruth, RecordSet, assign_to_patch,
                          augment, box_to_polygon, crop_patch, format_detection, format_dota,
                          load_ground_truth, parse_dota, polygon_to_rotated, read_detections,
                          read_pnm, tile_image, write_detections, write_pnm)
from ipssd.errors import ContractViolation, DataError, ParseError
from ipssd.geometry import RotatedBox, polygon_area, rotate_point

boxes = st.builds(RotatedBox, st.floats(50, 450), st.floats(50, 450), st.floats(2, 80),
                  st.floats(2, 80), st.floats(0, math.pi, exclude_max=True))


def same_angle(a, b, period=math.pi, tol=1e-6):
    d = (a - b) % period
    return min(d, period - d) < tol


# --- parsing ----------------------------------------------------------------

def test_parse_single_line():
    recs, errs = parse_dota("0 0 10 0 10 10 0 10 plane 0\n")
    assert errs == []
    assert recs == [AnnotationRecord(((0, 0), (10, 0), (10, 10), (0, 10)), "plane", 0)]


def test_parse_empty_and_metadata():
    assert parse_dota("") == ([], [])
    recs, errs = parse_dota("imagesource:GoogleEarth\ngsd:0.15\n1 1 5 1 5 3 1 3 ship 1\n")
    assert errs == [] and len(recs) == 1 and recs[0].difficulty == 1


def test_parse_good_and_malformed_line():
    recs, errs = parse_dota("0 0 10 0 10 10 0 10 plane 0\n0 0 10 0 ten 10 0 10 plane 0\n",
                            source="a.txt")
    assert len(recs) == 1 and len(errs) == 1
    assert errs[0].lineno == 2 and "a.txt:2" in str(errs[0])


def test_parse_error_kinds():
    text = "1 2 3 plane\n0 0 1 0 1 1 0 1 x y\n0 0 0 0 1 1 0 1 dup 0\n"
    _, errs = parse_dota(text)
    assert [e.lineno for e in errs] == [1, 2, 3]
    assert all(isinstance(e, DataError) for e in errs)


def test_load_ground_truth_raises_first_error():
    with pytest.raises(ParseError, match="line 2"):
        load_ground_truth("0 0 1 0 1 1 0 1 a 0\nbad\n")


def test_format_dota_round_trip():
    text = "0.0 0.0 10.0 0.0 10.0 10.0 0.0 10.0 plane 0\n1.5 1.0 5.0 1.0 5.0 3.0 1.5 3.0 ship 1\n"
    recs, _ = parse_dota(text)
    assert format_dota(recs) == text


# --- polygon_to_rotated -----------------------------------------------------

def test_axis_aligned_square():
    b = polygon_to_rotated([(0, 0), (10, 0), (10, 10), (0, 10)])
    assert (b.x, b.y, b.h, b.w, b.theta) == pytest.approx((5, 5, 10, 10, 0))


def test_rotated_square():
    pts = [rotate_point(p, (5, 5), math.pi / 4) for p in [(0, 0), (10, 0), (10, 10), (0, 10)]]
    b = polygon_to_rotated(pts)
    assert b.h * b.w == pytest.approx(100, abs=1e-6)
    assert b.theta == pytest.approx(math.pi / 4, abs=1e-9)


def test_long_side_is_h():
    b = polygon_to_rotated([(0, 0), (4, 0), (4, 10), (0, 10)])
    assert b.h == pytest.approx(10) and b.w == pytest.approx(4)
    assert b.theta == pytest.approx(math.pi / 2)


def test_degenerate_polygon():
    with pytest.raises(ContractViolation):
        polygon_to_rotated([(0, 0), (1, 1), (2, 2), (3, 3)])


@given(st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100)), min_size=4, max_size=4,
                unique=True))
def test_rectangle_encloses_polygon(pts):
    try:
        b = polygon_to_rotated(pts)
    except ContractViolation:
        return
    assert b.h * b.w >= abs(polygon_area(pts)) - 1e-6 * max(1.0, b.h * b.w)


@given(boxes, st.floats(0, 2 * math.pi))
def test_rotation_equivariance(b, phi):
    quad = box_to_polygon(b)
    turned = [rotate_point(p, (0, 0), phi) for p in quad]
    r0, r1 = polygon_to_rotated(quad), polygon_to_rotated(turned)
    cx, cy = rotate_point((r0.x, r0.y), (0, 0), phi)
    assert r1.x == pytest.approx(cx, abs=1e-6) and r1.y == pytest.approx(cy, abs=1e-6)
    assert r1.h * r1.w == pytest.approx(r0.h * r0.w, rel=1e-9)
    if abs(r0.h - r0.w) > 1e-6 * r0.h:
        assert same_angle(r1.theta, r0.theta + phi)
    else:
        assert same_angle(r1.theta, r0.theta + phi, period=math.pi / 2)


# --- tiling -----------------------------------------------------------------

def test_tile_examples():
    assert [(p.origin_x, p.origin_y) for p in tile_image(600, 600)] == [(0, 0)]
    got = {(p.origin_x, p.origin_y) for p in tile_image(1100, 1100, 600, 100)}
    assert got == {(0, 0), (500, 0), (0, 500), (500, 500)}
    assert [p.origin_x for p in tile_image(601, 600)] == [0, 1]


def test_small_image_single_clamped_patch():
    (p,) = tile_image(300, 200, 600, 100)
    assert (p.origin_x, p.origin_y, p.width, p.height, p.clamped) == (0, 0, 300, 200, True)
    assert not tile_image(600, 600)[0].clamped


def test_tile_argument_checks():
    with pytest.raises(ContractViolation):
        tile_image(1000, 1000, 100, 100)


@given(st.integers(1, 3000), st.integers(1, 3000), st.integers(50, 700), st.data())
def test_tiles_cover_image_and_stay_inside(w, h, patch, data):
    overlap = data.draw(st.integers(0, patch - 1))
    tiles = tile_image(w, h, patch, overlap)
    stride = patch - overlap
    per_axis = lambda n: 1 if n <= patch else math.ceil((n - patch) / stride) + 1
    assert len(tiles) == per_axis(w) * per_axis(h)
    for p in tiles:
        assert p.origin_x + p.width <= w and p.origin_y + p.height <= h
    # coverage per axis: sorted intervals leave no gap
    for extent, key, size in ((w, "origin_x", "width"), (h, "origin_y", "height")):
        spans = sorted({(getattr(p, key), getattr(p, key) + getattr(p, size)) for p in tiles})
        reach = 0
        for a, b in spans:
            assert a <= reach
            reach = max(reach, b)
        assert reach == extent


def test_assign_and_crop():
    objs = [GroundTruth(RotatedBox(550, 20, 10, 4, 0), "car"),
            GroundTruth(RotatedBox(50, 20, 10, 4, 0), "car")]
    p = tile_image(1100, 600)[1]
    inside = assign_to_patch(objs, p)
    assert len(inside) == 1 and inside[0].box.x == pytest.approx(50)
    img = np.arange(600 * 1100, dtype=np.int64).reshape(600, 1100) % 251
    assert np.array_equal(crop_patch(img, p), img[:, 500:1100])


# --- augmentation -----------------------------------------------------------

def record_set(rng, n=5, w=300, h=200):
    objs = [GroundTruth(RotatedBox(*rng.uniform(20, 180, 2), *rng.uniform(4, 30, 2),
                                   rng.uniform(0, math.pi)), "a") for _ in range(n)]
    img = rng.integers(0, 256, (h, w), dtype=np.uint8)
    return RecordSet(w, h, objs, img)


def assert_same_boxes(a, b, tol=1e-9):
    for p, q in zip(a.objects, b.objects):
        assert np.allclose(p.box.as_array()[:4], q.box.as_array()[:4], atol=tol)
        assert same_angle(p.box.theta, q.box.theta, tol=tol)


def test_identities(rng):
    rs = record_set(rng)
    assert_same_boxes(augment(rs, "rotate90", 0), rs)
    assert_same_boxes(augment(rs, "rescale", 1.0), rs)


def test_rotate90_four_times(rng):
    rs = record_set(rng)
    out = rs
    for _ in range(4):
        out = augment(out, "rotate90", 1)
    assert (out.width, out.height) == (rs.width, rs.height)
    assert_same_boxes(out, rs)
    assert np.array_equal(out.image, rs.image)
    assert_same_boxes(augment(augment(rs, "rotate90", 3), "rotate90", 1), rs)


def test_rescale_inverse(rng):
    rs = record_set(rng)
    assert_same_boxes(augment(augment(rs, "rescale", 2.0), "rescale", 0.5), rs)
    assert augment(rs, "rescale", 2.0).width == 600


def test_rotate90_moves_pixels_with_boxes():
    img = np.zeros((40, 60), np.uint8)
    img[10, 45] = 255  # pixel center (45.5, 10.5)
    rs = RecordSet(60, 40, [GroundTruth(RotatedBox(45.5, 10.5, 3, 1, 0.2), "dot")], img)
    out = augment(rs, "rotate90", 1)
    b = out.objects[0].box
    r, c = np.argwhere(out.image == 255)[0]
    assert (c + 0.5, r + 0.5) == pytest.approx((b.x, b.y))
    assert b.theta == pytest.approx(0.2 + math.pi / 2)


def test_augment_errors():
    rs = RecordSet(10, 10)
    for op, v in (("rotate90", 4), ("rescale", 0), ("shear", 1)):
        with pytest.raises(ContractViolation):
            augment(rs, op, v)


# --- detection lines --------------------------------------------------------

def test_detection_round_trip(rng, tmp_path):
    dets = [Detection(RotatedBox(*rng.uniform(0, 500, 2), *rng.uniform(1, 50, 2),
                                 rng.uniform(0, math.pi)), "plane", float(rng.random()), f"img{i}")
            for i in range(20)]
    path = tmp_path / "d.txt"
    write_detections(dets, path)
    back = read_detections(path)
    for a, b in zip(dets, back):
        assert (a.source_id, a.class_name) == (b.source_id, b.class_name)
        assert abs(a.score - b.score) <= 1e-6
        assert np.allclose(a.box.as_array()[:4], b.box.as_array()[:4], atol=1e-6)
        assert same_angle(a.box.theta, b.box.theta, tol=1e-7)
    assert len(back) == 20


def test_empty_detection_file(tmp_path):
    path = tmp_path / "e.txt"
    write_detections([], path)
    assert path.read_bytes() == b""
    assert read_detections(path) == []


def test_score_format():
    line = format_detection(Detection(RotatedBox(1, 2, 3, 4, math.pi / 2), "car", 1.0, "s"))
    assert line == "s car 1.000000 1.000000 2.000000 3.000000 4.000000 90.000000"


def test_malformed_detection_line():
    with pytest.raises(ParseError, match="line 2"):
        read_detections(io.StringIO("s car 0.5 1 2 3 4 5\ns car 0.5 1 2 3\n"))
    with pytest.raises(ParseError):
        read_detections("s car 0.5 1 2 -3 4 5\n")
    with pytest.raises(DataError):
        read_detections("/nonexistent/detections.txt")


# --- PNM --------------------------------------------------------------------

def test_pnm_round_trip(tmp_path, rng):
    gray = rng.integers(0, 256, (7, 11), dtype=np.uint8)
    rgb = rng.integers(0, 256, (5, 3, 3), dtype=np.uint8)
    write_pnm(tmp_path / "g.pgm", gray)
    write_pnm(tmp_path / "c.ppm", rgb)
    assert np.array_equal(read_pnm(tmp_path / "g.pgm"), gray)
    assert np.array_equal(read_pnm(tmp_path / "c.ppm"), rgb)


def test_pnm_header_comments_and_errors():
    assert read_pnm(b"P5\n# note\n2 1\n255\n\x01\x02").tolist() == [[1, 2]]
    for blob in (b"P2\n2 1\n255\n1 2", b"P5\n2 2\n255\n\x01", b"P5\n2 1\n65535\n\x00\x00",
                 b"P5\n2"):
        with pytest.raises(DataError):
            read_pnm(blob)
    with pytest.raises(ContractViolation):
        write_pnm("unused.pgm", np.zeros((2, 2), np.float32))
