import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ipssd.anchors import AnchorConfig, generate_anchors
from ipssd.errors import ContractViolation
from ipssd.geometry import iou_rotated
from ipssd.oracles import conv2d_naive, nms_quadratic, proposals_bruteforce
from ipssd.rpn import (RPNHeadParams, flatten_head_outputs, generate_proposals, nms_rotated,
                       rpn_heads)
from ipssd.tensor import ConvParams


def head(rng=None, c=4, mid=6, a=3):
    if rng is None:
        return RPNHeadParams(ConvParams.zeros(mid, c, 3), ConvParams.zeros(a, mid),
                             ConvParams.zeros(5 * a, mid))
    conv = lambda o, i, k: ConvParams(rng.standard_normal((o, i, k, k)) * 0.3,
                                      rng.standard_normal(o) * 0.1, 1, k // 2)
    return RPNHeadParams(conv(mid, c, 3), conv(a, mid, 1), conv(5 * a, mid, 1))


box_row = st.tuples(st.floats(0, 60), st.floats(0, 60), st.floats(4, 30), st.floats(4, 30),
                    st.floats(0, math.pi, exclude_max=True))


def test_zero_head_outputs():
    s, d = rpn_heads(np.random.default_rng(0).standard_normal((1, 4, 5, 7)), head())
    assert s.shape == (1, 3, 5, 7) and d.shape == (1, 15, 5, 7)
    assert np.all(s == 0.5) and np.all(d == 0)


def test_head_matches_naive_composition(rng):
    p = head(rng)
    x = rng.standard_normal((1, 4, 6, 6)).astype(np.float32)
    s, d = rpn_heads(x, p)
    hid = np.maximum(conv2d_naive(x, p.reg_conv.weight, p.reg_conv.bias, 1, 1), 0)
    ref_s = 1 / (1 + np.exp(-conv2d_naive(hid, p.score.weight, p.score.bias)))
    ref_d = conv2d_naive(hid, p.delta.weight, p.delta.bias)
    np.testing.assert_allclose(s, ref_s, atol=1e-6)
    np.testing.assert_allclose(d, ref_d, atol=1e-5)


def test_head_channel_checks():
    with pytest.raises(ContractViolation, match="reg_conv"):
        rpn_heads(np.zeros((1, 3, 4, 4)), head())
    bad = RPNHeadParams(ConvParams.zeros(6, 4, 3), ConvParams.zeros(3, 6), ConvParams.zeros(10, 6))
    with pytest.raises(ContractViolation, match="5\\*A"):
        rpn_heads(np.zeros((1, 4, 4, 4)), bad)


def test_flatten_matches_anchor_order(rng):
    a, h, w = 3, 2, 4
    s = rng.random((1, a, h, w))
    d = rng.standard_normal((1, 5 * a, h, w))
    fs, fd = flatten_head_outputs(s, d)
    for i in range(h):
        for j in range(w):
            for k in range(a):
                n = (i * w + j) * a + k
                assert fs[n] == s[0, k, i, j]
                np.testing.assert_array_equal(fd[n], d[0, 5 * k:5 * k + 5, i, j])


def test_single_anchor_zero_delta_proposal():
    anchors = generate_anchors(AnchorConfig((32,), (1.0,), (0.0,), 8), 1, 1)
    boxes, scores, idx = generate_proposals(np.array([0.9]), np.zeros((1, 5)), anchors)
    np.testing.assert_allclose(boxes, [[4, 4, 32, 32, 0]])
    assert scores.tolist() == [0.9] and idx.tolist() == [0]


def test_duplicate_pair_keeps_higher_score():
    boxes = np.array([[10, 10, 8, 4, 0.3], [10, 10, 8, 4, 0.3]])
    assert nms_rotated(boxes, [0.8, 0.9], 0.7).tolist() == [1]


def test_equal_scores_keep_input_order():
    boxes = np.array([[0, 0, 4, 4, 0], [100, 0, 4, 4, 0], [200, 0, 4, 4, 0]])
    assert nms_rotated(boxes, [0.5, 0.5, 0.5], 0.5).tolist() == [0, 1, 2]


def test_empty_and_disjoint():
    assert nms_rotated(np.zeros((0, 5)), [], 0.5).tolist() == []
    boxes = np.array([[i * 50.0, 0, 10, 10, 0.1 * i] for i in range(6)])
    scores = np.linspace(0.1, 0.9, 6)
    assert sorted(nms_rotated(boxes, scores, 0.1).tolist()) == list(range(6))


def test_length_mismatch():
    with pytest.raises(ContractViolation):
        nms_rotated(np.zeros((2, 5)) + [0, 0, 1, 1, 0], [0.1], 0.5)


def test_nms_matches_quadratic_on_random_sets(rng):
    for _ in range(50):
        n = int(rng.integers(1, 40))
        boxes = np.column_stack([rng.uniform(0, 60, (n, 2)), rng.uniform(5, 30, (n, 2)),
                                 rng.uniform(0, math.pi, n)])
        scores = np.round(rng.random(n), 1)  # coarse so ties occur
        thr = float(rng.uniform(0.1, 0.9))
        assert nms_rotated(boxes, scores, thr).tolist() == nms_quadratic(boxes, scores, thr)


def test_proposals_match_bruteforce(rng):
    anchors = generate_anchors(AnchorConfig((16, 24), (1, 2), (0, math.pi / 3), 8), 4, 4)
    n = len(anchors)
    for _ in range(10):
        scores = np.round(rng.random(n), 2)
        deltas = rng.normal(0, 0.2, (n, 5))
        _, _, idx = generate_proposals(scores, deltas, anchors, 40, 0.6, 15)
        assert idx.tolist() == proposals_bruteforce(scores, deltas, anchors, 40, 0.6, 15)


@given(st.lists(box_row, min_size=1, max_size=25), st.floats(0.05, 0.95), st.data())
def test_nms_output_properties(rows, thr, data):
    boxes = np.array(rows)
    scores = data.draw(st.lists(st.floats(0, 1), min_size=len(rows), max_size=len(rows)))
    keep = nms_rotated(boxes, scores, thr).tolist()
    assert len(set(keep)) == len(keep) and set(keep) <= set(range(len(rows)))
    assert [scores[k] for k in keep] == sorted((scores[k] for k in keep), reverse=True)
    for a in range(len(keep)):
        for b in range(a + 1, len(keep)):
            assert iou_rotated(boxes[keep[a]], boxes[keep[b]]) <= thr + 1e-12


@given(st.lists(box_row, min_size=1, max_size=25), st.integers(0, 30))
def test_max_keep_is_truncation(rows, k):
    boxes = np.array(rows)
    scores = np.linspace(1, 0, len(rows))
    full = nms_rotated(boxes, scores, 0.4).tolist()
    assert nms_rotated(boxes, scores, 0.4, max_keep=k).tolist() == full[:k]


def test_threshold_one_keeps_everything():
    boxes = np.tile([5.0, 5, 4, 4, 0], (4, 1))
    assert nms_rotated(boxes, [0.1, 0.4, 0.3, 0.2], 1.0).tolist() == [1, 2, 3, 0]


def test_min_score_filter():
    anchors = generate_anchors(AnchorConfig((16,), (1,), (0,), 8), 1, 3)
    _, scores, idx = generate_proposals(np.array([0.2, 0.7, 0.5]), np.zeros((3, 5)), anchors,
                                        min_score=0.5)
    assert idx.tolist() == [1, 2] and scores.tolist() == [0.7, 0.5]
