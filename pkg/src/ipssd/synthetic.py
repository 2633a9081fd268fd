"""Planted-object scenes and hand-set template weights.

The template network is not trained.  Every layer is written down so that a
bright oriented rectangle on a dark background produces a detection close
to the rectangle:

* IPN: copy the grey input and box-blur it twice at full resolution.
* Stage 1 fusion: pass the blurred brightness ``B`` through (SSD branch
  zero) and emit ``d = [B, B - blur(B), blur(B), B - 1/2]`` at stride 4.
* Stage 1 RPN: objectness is a steep sigmoid of a further blurred ``B``;
  deltas are zero, so proposals are anchors.  Stages 2-6 are switched off
  with a large negative score bias.
* Classification head: a linear matched filter over the rotation-pooled
  bins.  Border bins reward edge response, every bin rewards brightness.
"""
import math
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import weights as rdw
from .anchors import AnchorConfig
from .dataio import AnnotationRecord, box_to_polygon, format_dota, write_pnm
from .geometry import RotatedBox
from .pipeline import FUSED_STAGES, STAGES, PipelineConfig, format_config, zero_weights
from .pooling import PoolSpec
from .pyramid import PyramidConfig

FOREGROUND = 230
BACKGROUND = 20

# matched-filter coefficients of the classification head
EDGE_GAIN = 1.0
FILL_GAIN = 0.25
SCORE_OFFSET = 6.0
OBJECTNESS_GAIN = 40.0
OBJECTNESS_LEVEL = 0.75


def template_config(**overrides):
    """Small single-class configuration the template weights are written for."""
    cfg = PipelineConfig(
        pyramid=PyramidConfig(n=4, scale_factor=0.5, ipn_channels=2),
        ipn_mid_channels=2,
        input_channels=1,
        backbone_channels=(2, 2, 2, 2, 2, 2, 2),
        anchors=AnchorConfig(scales=(40.0, 48.0), ratios=(1.0, 2.0),
                             angles=tuple(math.radians(a) for a in range(0, 180, 15))),
        common_channels=4,
        rpn_mid_channels=2,
        pool=PoolSpec(7, 7, 2),
        head_hidden=2,
        pre_nms_k=12000,
        nms_iou=1.0,
        post_nms_k=12000,
        min_objectness=0.5,
        score_threshold=0.6,
        detect_nms_iou=0.3,
        max_detections=100,
        classes=("rect",),
    )
    return replace(cfg, **overrides)


def _blur3(n_in, n_out):
    w = np.zeros((n_out, n_in, 3, 3), np.float32)
    w[0, 0] = 1.0 / 9.0
    return w


def _copy(n_out, n_in, k):
    w = np.zeros((n_out, n_in, k, k), np.float32)
    w[0, 0, k // 2, k // 2] = 1.0
    return w


def _bn_passthrough(w, prefix, eps):
    # var chosen so that (v - 0) / sqrt(var + eps) == v
    w[f"{prefix}.var"][:] = 1.0 - eps


def bin_masks(spec):
    """Boolean ``(H, W)`` masks for the border ring and the interior bins."""
    border = np.zeros((spec.H, spec.W), bool)
    border[0, :] = border[-1, :] = border[:, 0] = border[:, -1] = True
    return border, ~border


def template_weights(cfg=None):
    """Hand-set parameters for :func:`template_config` (or a compatible cfg)."""
    cfg = cfg or template_config()
    if cfg.input_channels != 1 or cfg.common_channels < 4 or len(cfg.classes) != 1:
        raise ValueError("template weights need 1 input channel, >= 4 common channels, 1 class")
    w = zero_weights(cfg)
    eps = cfg.bn_eps
    ipn_c, mid, cc = cfg.pyramid.ipn_channels, cfg.ipn_mid_channels, cfg.common_channels
    w["ipn.conv1.weight"][:] = _copy(mid, 1, 1)
    w["ipn.conv2.weight"][:] = _blur3(mid, mid)
    w["ipn.conv3.weight"][:] = _blur3(mid, mid)
    w["ipn.conv4.weight"][:] = _copy(ipn_c, mid, 1)
    for name in ("conv1", "conv4", "conv7", "conv8", "conv9", "conv10", "conv11"):
        _bn_passthrough(w, f"ssd.{name}.bn", eps)
    for k in range(1, len(STAGES) + 1):
        p, r = f"ffn.stage{k}", f"rpn.stage{k}"
        _bn_passthrough(w, f"{p}.ssd_bn", eps)
        w[f"{r}.score.bias"][:] = -30.0
        if k > FUSED_STAGES:
            continue
        _bn_passthrough(w, f"{p}.ipn_bn", eps)
        w[f"{p}.ipn_conv3.weight"][:] = _copy(ipn_c, ipn_c, 3)
        w[f"{p}.ipn_conv1.weight"][:] = _copy(cc, ipn_c, 1)
        h3 = w[f"{p}.head_conv3.weight"]
        h3[0, 0, 1, 1] = 1.0
        h3[1, 0] = 1.0 / 9.0
        h1 = w[f"{p}.head_conv1.weight"]
        h1[0, 0] = 1.0
        h1[1, 0], h1[1, 1] = 1.0, -1.0
        h1[2, 1] = 1.0
        h1[3, 0] = 1.0
        w[f"{p}.head_conv1.bias"][3] = -0.5
    # stage 1 is the only live proposal source
    reg = w["rpn.stage1.reg_conv.weight"]
    reg[0, 2] = 1.0 / 9.0
    w["rpn.stage1.score.weight"][:, 0] = OBJECTNESS_GAIN
    w["rpn.stage1.score.bias"][:] = -OBJECTNESS_GAIN * OBJECTNESS_LEVEL

    # classification head: one hidden unit carries the matched-filter score,
    # shifted positive so the ReLU stays linear
    border, _ = bin_masks(cfg.pool)
    plane = cfg.pool.H * cfg.pool.W
    fc1 = w["cls.fc1.weight"]
    fc1[0, 1 * plane:2 * plane] = EDGE_GAIN * border.reshape(-1)
    fc1[0, 3 * plane:4 * plane] = FILL_GAIN
    shift = 100.0
    w["cls.fc1.bias"][0] = shift
    w["cls.fc2.weight"][0, 0] = 1.0
    w["cls.fc2.bias"][0] = -shift - SCORE_OFFSET
    return w


def render_boxes(boxes, height, width, supersample=4, fg=FOREGROUND, bg=BACKGROUND):
    """Antialiased ``uint8`` grey image of filled rotated rectangles."""
    s = supersample
    offs = (np.arange(s) + 0.5) / s
    ys = (np.arange(height)[:, None] + offs[None, :]).reshape(-1)
    xs = (np.arange(width)[:, None] + offs[None, :]).reshape(-1)
    cover = np.zeros((height * s, width * s), bool)
    for b in boxes:
        c, sn = math.cos(b.theta), math.sin(b.theta)
        dx = xs[None, :] - b.x
        dy = ys[:, None] - b.y
        u = dx * c + dy * sn
        v = -dx * sn + dy * c
        cover |= (np.abs(u) <= b.h / 2) & (np.abs(v) <= b.w / 2)
    frac = cover.reshape(height, s, width, s).mean(axis=(1, 3))
    return np.round(bg + (fg - bg) * frac).astype(np.uint8)


def planted_scene(seed=0, size=256, count=3, scale_range=(40.0, 48.0), ratio=2.0, margin=8.0):
    """Random non-overlapping bright rectangles; returns ``(image, boxes)``."""
    rng = np.random.default_rng(seed)
    boxes = []
    q = math.sqrt(ratio)
    tries = 0
    while len(boxes) < count:
        tries += 1
        if tries > 10000:
            raise RuntimeError("could not place the planted boxes; enlarge the image")
        s = rng.uniform(*scale_range)
        h, w = s * q, s / q
        r = 0.5 * math.hypot(h, w)
        x, y = rng.uniform(r + margin, size - r - margin, 2)
        cand = RotatedBox(x, y, h, w, rng.uniform(0, math.pi))
        if all(math.hypot(cand.x - b.x, cand.y - b.y) > r + 0.5 * math.hypot(b.h, b.w) + margin
               for b in boxes):
            boxes.append(cand)
    return render_boxes(boxes, size, size), boxes


def write_template_bundle(directory, seeds=(0,)):
    """Write ``template.cfg``, ``template.rdw`` and one ``sceneN.pgm`` /
    ``sceneN.txt`` (DOTA ground truth) per seed.  Returns the config path."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    cfg = template_config(weights_path="template.rdw")
    rdw.save(d / "template.rdw", template_weights(cfg))
    (d / "template.cfg").write_text(format_config(cfg), encoding="utf-8")
    for s in seeds:
        image, boxes = planted_scene(s)
        write_pnm(d / f"scene{s}.pgm", image)
        recs = [AnnotationRecord(box_to_polygon(b), cfg.classes[0], 0) for b in boxes]
        (d / f"scene{s}.txt").write_text(format_dota(recs), encoding="utf-8")
    return d / "template.cfg"
