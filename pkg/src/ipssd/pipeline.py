"""End-to-end forward pipeline, configuration and throughput benchmark.

Flow per image::

    pyramid -> IPN features ----------------------.
    toy SSD backbone (conv4 conv7 conv8 conv9 conv10 conv11)
        -> FFN per stage (first four stages fused with IPN levels 1-4)
        -> RPN heads per stage -> proposals
        -> rotation pooling -> classification head
        -> per-class rotated NMS -> detections

Stage table (strides relative to the input image):

    ======  =======  ======  ==================
    stage   SSD      stride  IPN partner level
    ======  =======  ======  ==================
    1       conv4    4       1 (full size)
    2       conv7    8       2
    3       conv8    16      3
    4       conv9    32      4
    5       conv10   64      none
    6       conv11   128     none
    ======  =======  ======  ==================
"""
import hashlib
import math
import statistics
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import weights as rdw
from .anchors import AnchorConfig, decode_delta, generate_anchors
from .dataio import Detection
from .errors import ConfigError, ContractViolation, DataError
from .fusion import FusionStage, ffn_fuse
from .geometry import RotatedBox
from .pooling import PoolSpec, rotation_pool_many
from .pyramid import IPNParams, PyramidConfig, build_pyramid, ipn_forward
from .rpn import RPNHeadParams, generate_proposals, nms_rotated, rpn_heads
from .tensor import BNParams, ConvParams, as_tensor, bn, conv2d, maxpool2, relu, sigmoid

SSD_LAYERS = ("conv1", "conv4", "conv7", "conv8", "conv9", "conv10", "conv11")
STAGES = ("conv4", "conv7", "conv8", "conv9", "conv10", "conv11")
STAGE_STRIDES = (4, 8, 16, 32, 64, 128)
FUSED_STAGES = 4


@dataclass(frozen=True)
class PipelineConfig:
    pyramid: PyramidConfig = PyramidConfig(n=4, scale_factor=0.5, ipn_channels=32)
    ipn_mid_channels: int = 16
    input_channels: int = 3
    backbone_channels: tuple = (16, 32, 64, 64, 64, 64, 64)
    anchors: AnchorConfig = AnchorConfig()
    common_channels: int = 256
    rpn_mid_channels: int = 512
    pool: PoolSpec = PoolSpec(7, 7, 2)
    head_hidden: int = 128
    pre_nms_k: int = 2000
    nms_iou: float = 0.7
    post_nms_k: int = 300
    min_objectness: float = 0.0
    score_threshold: float = 0.6
    detect_nms_iou: float = 0.3
    max_detections: int = 100
    bn_eps: float = 1e-5
    classes: tuple = ("plane", "small-vehicle", "ship")
    weights_path: str = None

    def __post_init__(self):
        if len(self.backbone_channels) != len(SSD_LAYERS):
            raise ConfigError(
                f"backbone.channels needs {len(SSD_LAYERS)} values ({', '.join(SSD_LAYERS)})")
        if self.input_channels not in (1, 3):
            raise ConfigError("input.channels must be 1 or 3")
        if self.pyramid.n != FUSED_STAGES:
            raise ConfigError(f"pyramid.levels must be {FUSED_STAGES} (one per fused SSD stage)")
        if not self.classes:
            raise ConfigError("at least one class name is required")
        for name in ("pre_nms_k", "post_nms_k", "max_detections", "common_channels",
                     "rpn_mid_channels", "head_hidden", "ipn_mid_channels"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")

    @property
    def num_anchors(self):
        return self.anchors.per_cell


# --- config file -------------------------------------------------------------

def _floats(v):
    return tuple(float(x) for x in v.split(",") if x.strip())


def _ints(v):
    return tuple(int(x) for x in v.split(",") if x.strip())


def _names(v):
    return tuple(x.strip() for x in v.split(",") if x.strip())


# key -> (setter on a dict of constructor kwargs)
_KEYS = {
    "pyramid.levels": ("pyramid.n", int),
    "pyramid.scale_factor": ("pyramid.scale_factor", float),
    "pyramid.ipn_channels": ("pyramid.ipn_channels", int),
    "pyramid.ipn_mid_channels": ("ipn_mid_channels", int),
    "input.channels": ("input_channels", int),
    "backbone.channels": ("backbone_channels", _ints),
    "anchors.scales": ("anchors.scales", _floats),
    "anchors.ratios": ("anchors.ratios", _floats),
    "anchors.angles_deg": ("anchors.angles", lambda v: tuple(math.radians(a) for a in _floats(v))),
    "fusion.common_channels": ("common_channels", int),
    "rpn.mid_channels": ("rpn_mid_channels", int),
    "pool.height": ("pool.H", int),
    "pool.width": ("pool.W", int),
    "pool.samples": ("pool.samples", int),
    "head.hidden": ("head_hidden", int),
    "proposals.pre_nms_k": ("pre_nms_k", int),
    "proposals.nms_iou": ("nms_iou", float),
    "proposals.post_nms_k": ("post_nms_k", int),
    "proposals.min_objectness": ("min_objectness", float),
    "detect.score_threshold": ("score_threshold", float),
    "detect.nms_iou": ("detect_nms_iou", float),
    "detect.max_detections": ("max_detections", int),
    "bn.eps": ("bn_eps", float),
    "classes": ("classes", _names),
    "weights.path": ("weights_path", str),
}


def parse_config(text, base_dir=None):
    """Parse flat ``key = value`` text (``#`` comments) into a PipelineConfig."""
    top, sub = {}, {"pyramid": {}, "anchors": {}, "pool": {}}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        target, conv = _KEYS[key]
        try:
            parsed = conv(value)
        except ValueError as exc:
            raise ConfigError(f"config line {lineno}: bad value for {key}: {value!r}") from exc
        if "." in target:
            group, attr = target.split(".")
            sub[group][attr] = parsed
        else:
            top[target] = parsed
    d = PipelineConfig()
    try:
        cfg = replace(
            d,
            pyramid=replace(d.pyramid, **sub["pyramid"]),
            anchors=replace(d.anchors, **sub["anchors"]),
            pool=replace(d.pool, **sub["pool"]),
            **top,
        )
    except ContractViolation as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.weights_path and base_dir is not None and not Path(cfg.weights_path).is_absolute():
        cfg = replace(cfg, weights_path=str(Path(base_dir) / cfg.weights_path))
    return cfg


def load_config(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, base_dir=Path(path).parent)


def format_config(cfg):
    """Render a config back to the text format (round-trips through parse_config)."""
    fl = lambda xs: ", ".join(repr(float(x)) for x in xs)
    lines = [
        f"pyramid.levels = {cfg.pyramid.n}",
        f"pyramid.scale_factor = {cfg.pyramid.scale_factor!r}",
        f"pyramid.ipn_channels = {cfg.pyramid.ipn_channels}",
        f"pyramid.ipn_mid_channels = {cfg.ipn_mid_channels}",
        f"input.channels = {cfg.input_channels}",
        f"backbone.channels = {', '.join(map(str, cfg.backbone_channels))}",
        f"anchors.scales = {fl(cfg.anchors.scales)}",
        f"anchors.ratios = {fl(cfg.anchors.ratios)}",
        f"anchors.angles_deg = {fl(math.degrees(a) for a in cfg.anchors.angles)}",
        f"fusion.common_channels = {cfg.common_channels}",
        f"rpn.mid_channels = {cfg.rpn_mid_channels}",
        f"pool.height = {cfg.pool.H}",
        f"pool.width = {cfg.pool.W}",
        f"pool.samples = {cfg.pool.samples}",
        f"head.hidden = {cfg.head_hidden}",
        f"proposals.pre_nms_k = {cfg.pre_nms_k}",
        f"proposals.nms_iou = {cfg.nms_iou!r}",
        f"proposals.post_nms_k = {cfg.post_nms_k}",
        f"proposals.min_objectness = {cfg.min_objectness!r}",
        f"detect.score_threshold = {cfg.score_threshold!r}",
        f"detect.nms_iou = {cfg.detect_nms_iou!r}",
        f"detect.max_detections = {cfg.max_detections}",
        f"bn.eps = {cfg.bn_eps!r}",
        f"classes = {', '.join(cfg.classes)}",
    ]
    if cfg.weights_path:
        lines.append(f"weights.path = {cfg.weights_path}")
    return "\n".join(lines) + "\n"


# --- weights -----------------------------------------------------------------

def _conv_shapes(prefix, out_c, in_c, k):
    return {f"{prefix}.weight": (out_c, in_c, k, k), f"{prefix}.bias": (out_c,)}


def _bn_shapes(prefix, c):
    return {f"{prefix}.{s}": (c,) for s in ("mean", "var", "gamma", "beta")}


def weight_manifest(cfg):
    """Every parameter name the pipeline reads, with its logical shape."""
    m = {}
    ipn_c, mid = cfg.pyramid.ipn_channels, cfg.ipn_mid_channels
    m.update(_conv_shapes("ipn.conv1", mid, cfg.input_channels, 1))
    m.update(_conv_shapes("ipn.conv2", mid, mid, 3))
    m.update(_conv_shapes("ipn.conv3", mid, mid, 3))
    m.update(_conv_shapes("ipn.conv4", ipn_c, mid, 1))
    prev = cfg.input_channels
    for name, c in zip(SSD_LAYERS, cfg.backbone_channels):
        m.update(_conv_shapes(f"ssd.{name}", c, prev, 3))
        m.update(_bn_shapes(f"ssd.{name}.bn", c))
        prev = c
    cc = cfg.common_channels
    for k, stage in enumerate(STAGES, 1):
        p = f"ffn.stage{k}"
        if k <= FUSED_STAGES:
            m.update(_conv_shapes(f"{p}.ipn_conv3", ipn_c, ipn_c, 3))
            m.update(_conv_shapes(f"{p}.ipn_conv1", cc, ipn_c, 1))
            m.update(_bn_shapes(f"{p}.ipn_bn", cc))
        m.update(_conv_shapes(f"{p}.ssd_conv1", cc, cfg.backbone_channels[k], 1))
        m.update(_bn_shapes(f"{p}.ssd_bn", cc))
        m.update(_conv_shapes(f"{p}.head_conv3", cc, cc, 3))
        m.update(_conv_shapes(f"{p}.head_conv1", cc, cc, 1))
        r = f"rpn.stage{k}"
        a = cfg.num_anchors
        m.update(_conv_shapes(f"{r}.reg_conv", cfg.rpn_mid_channels, cc, 3))
        m.update(_conv_shapes(f"{r}.score", a, cfg.rpn_mid_channels, 1))
        m.update(_conv_shapes(f"{r}.delta", 5 * a, cfg.rpn_mid_channels, 1))
    feat = cc * cfg.pool.H * cfg.pool.W
    nc = len(cfg.classes)
    m["cls.fc1.weight"] = (cfg.head_hidden, feat)
    m["cls.fc1.bias"] = (cfg.head_hidden,)
    m["cls.fc2.weight"] = (6 * nc, cfg.head_hidden)
    m["cls.fc2.bias"] = (6 * nc,)
    return m


def zero_weights(cfg):
    """All convs and linear layers zero, batch norms identity."""
    w = {}
    for name, shape in weight_manifest(cfg).items():
        fill = 1.0 if name.endswith((".var", ".gamma")) else 0.0
        w[name] = np.full(shape, fill, np.float32)
    return w


def random_weights(cfg, seed=0, scale=0.1):
    rng = np.random.default_rng(seed)
    w = {}
    for name, shape in weight_manifest(cfg).items():
        if name.endswith(".var"):
            w[name] = rng.uniform(0.5, 1.5, shape).astype(np.float32)
        elif name.endswith(".gamma"):
            w[name] = rng.uniform(0.5, 1.5, shape).astype(np.float32)
        else:
            w[name] = (rng.standard_normal(shape) * scale).astype(np.float32)
    return w


@dataclass
class Model:
    """Weights bound to layer objects, ready for :func:`run_pipeline`."""

    cfg: PipelineConfig
    ipn: IPNParams
    backbone: list  # (ConvParams, BNParams) per SSD layer
    fusion: list  # FusionStage per stage
    rpn: list  # RPNHeadParams per stage
    fc1: tuple
    fc2: tuple


def build_model(cfg, params):
    """Validate a ``{name: array}`` mapping against the manifest and bind it.

    Missing names raise :class:`DataError` listing all of them; wrong shapes
    raise :class:`ContractViolation`.
    """
    manifest = weight_manifest(cfg)
    missing = [n for n in manifest if n not in params]
    if missing:
        raise DataError(f"weights missing {len(missing)} parameters: {', '.join(missing)}")
    get = {}
    for name, shape in manifest.items():
        arr = np.asarray(params[name], dtype=np.float32)
        if arr.size != int(np.prod(shape)):
            raise ContractViolation(f"weight {name} has shape {arr.shape}, expected {shape}")
        get[name] = arr.reshape(shape)

    def conv(prefix, stride=1, padding=None):
        wt = get[f"{prefix}.weight"]
        return ConvParams(wt, get[f"{prefix}.bias"], stride,
                          wt.shape[2] // 2 if padding is None else padding)

    def norm(prefix):
        return BNParams(get[f"{prefix}.mean"], get[f"{prefix}.var"], get[f"{prefix}.gamma"],
                        get[f"{prefix}.beta"], cfg.bn_eps)

    ipn = IPNParams(conv("ipn.conv1"), conv("ipn.conv2"), conv("ipn.conv3"), conv("ipn.conv4"))
    backbone = []
    for name in SSD_LAYERS:
        stride = 2 if name in ("conv8", "conv9", "conv10", "conv11") else 1
        backbone.append((conv(f"ssd.{name}", stride=stride), norm(f"ssd.{name}.bn")))
    stages, heads = [], []
    cc = cfg.common_channels
    for k in range(1, len(STAGES) + 1):
        p = f"ffn.stage{k}"
        if k <= FUSED_STAGES:
            ipn3, ipn1, ipn_bn = conv(f"{p}.ipn_conv3"), conv(f"{p}.ipn_conv1"), norm(f"{p}.ipn_bn")
        else:
            ipn3 = ConvParams.zeros(cfg.pyramid.ipn_channels, cfg.pyramid.ipn_channels, 3)
            ipn1 = ConvParams.zeros(cc, cfg.pyramid.ipn_channels, 1)
            ipn_bn = BNParams.identity(cc)
        stages.append(FusionStage(ipn3, ipn1, ipn_bn, conv(f"{p}.ssd_conv1"), norm(f"{p}.ssd_bn"),
                                  conv(f"{p}.head_conv3"), conv(f"{p}.head_conv1"),
                                  name=f"stage{k}"))
        r = f"rpn.stage{k}"
        heads.append(RPNHeadParams(conv(f"{r}.reg_conv"), conv(f"{r}.score"), conv(f"{r}.delta")))
    fc1 = (get["cls.fc1.weight"], get["cls.fc1.bias"])
    fc2 = (get["cls.fc2.weight"], get["cls.fc2.bias"])
    return Model(cfg, ipn, backbone, stages, heads, fc1, fc2)


def load_model(cfg, path=None):
    path = path or cfg.weights_path
    if not path:
        raise ConfigError("no weight file given (set weights.path)")
    return build_model(cfg, rdw.load(path))


# --- forward -----------------------------------------------------------------

def image_to_tensor(image, channels):
    """uint8/float ``(H, W)`` or ``(H, W, C)`` pixels -> ``(1, channels, H, W)`` in [0, 1]."""
    arr = np.asarray(image)
    scale = 255.0 if arr.dtype == np.uint8 else 1.0
    arr = arr.astype(np.float32) / np.float32(scale)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ContractViolation(f"image must be (H, W) or (H, W, C), got {arr.shape}")
    if arr.shape[2] != channels:
        if channels == 3 and arr.shape[2] == 1:
            arr = np.repeat(arr, 3, axis=2)
        elif channels == 1:
            arr = arr.mean(axis=2, keepdims=True, dtype=np.float32)
        else:
            raise ContractViolation(f"cannot map {arr.shape[2]} image channels to {channels}")
    return np.ascontiguousarray(arr.transpose(2, 0, 1)[None])


def _cbr(x, conv, norm):
    return relu(bn(conv2d(x, conv), norm))


def backbone_forward(x, model):
    """Toy SSD backbone; returns the six stage maps (conv4 .. conv11)."""
    (c1, b1), (c4, b4), (c7, b7), *extra = model.backbone
    x = maxpool2(_cbr(x, c1, b1))
    feats = []
    x = maxpool2(_cbr(x, c4, b4))
    feats.append(x)
    x = maxpool2(_cbr(x, c7, b7))
    feats.append(x)
    for conv, norm in extra:
        x = _cbr(x, conv, norm)
        feats.append(x)
    return feats


def check_input_size(h, w, cfg):
    need = max(cfg.pyramid.min_size(), 8)
    if h % 8 or w % 8 or min(h, w) < need:
        raise ContractViolation(
            f"input {h}x{w} must have sides divisible by 8 and at least {need}")


@dataclass
class ForwardResult:
    stage_maps: list  # detection features per stage
    proposals: np.ndarray  # (N, 5)
    objectness: np.ndarray  # (N,)
    proposal_stage: np.ndarray  # (N,)
    trace: dict = field(default_factory=dict)  # name -> shape


def forward_features(x, model):
    """Everything up to and including proposal generation."""
    cfg = model.cfg
    trace = {"input": x.shape}
    levels = build_pyramid(x, cfg.pyramid)
    ipn = ipn_forward(levels, model.ipn)
    for i, (lvl, f) in enumerate(zip(levels, ipn.levels), 1):
        trace[f"pyramid.level{i}"] = lvl.shape
        trace[f"ipn.level{i}"] = f.shape
    ssd = backbone_forward(x, model)
    maps, boxes, objs, stage_ids = [], [], [], []
    for k, (stage, feat) in enumerate(zip(STAGES, ssd)):
        trace[f"ssd.{stage}"] = feat.shape
        partner = ipn.levels[k] if k < FUSED_STAGES else None
        d = ffn_fuse(partner, feat, model.fusion[k])
        trace[f"ffn.stage{k + 1}"] = d.shape
        scores, deltas = rpn_heads(d, model.rpn[k])
        trace[f"rpn.stage{k + 1}.scores"] = scores.shape
        trace[f"rpn.stage{k + 1}.deltas"] = deltas.shape
        anchors = generate_anchors(cfg.anchors.with_stride(STAGE_STRIDES[k]), *d.shape[2:])
        b, s, _ = generate_proposals(scores, deltas, anchors, cfg.pre_nms_k, cfg.nms_iou,
                                     cfg.post_nms_k, cfg.min_objectness)
        maps.append(d)
        boxes.append(b)
        objs.append(s)
        stage_ids.append(np.full(len(s), k))
    boxes = np.concatenate(boxes)
    objs = np.concatenate(objs)
    stage_ids = np.concatenate(stage_ids)
    order = np.argsort(-objs, kind="stable")[:cfg.post_nms_k]
    trace["proposals"] = (len(order), 5)
    return ForwardResult(maps, boxes[order], objs[order], stage_ids[order], trace)


def classify(fr, model):
    """Rotation-pool each proposal from its stage map and run the 2-layer head.

    Returns ``(class scores (N, K), class deltas (N, K, 5))``.
    """
    cfg = model.cfg
    n = len(fr.proposals)
    nc = len(cfg.classes)
    feats = np.zeros((n, cfg.common_channels * cfg.pool.H * cfg.pool.W), np.float32)
    for k in np.unique(fr.proposal_stage):
        sel = np.nonzero(fr.proposal_stage == k)[0]
        pooled = rotation_pool_many(fr.stage_maps[k], fr.proposals[sel], cfg.pool,
                                    stride=STAGE_STRIDES[k])
        feats[sel] = pooled.reshape(len(sel), -1)
    fr.trace["pooled"] = (n, cfg.common_channels, cfg.pool.H, cfg.pool.W)
    w1, b1 = model.fc1
    w2, b2 = model.fc2
    hidden = relu(feats.astype(np.float64) @ w1.T.astype(np.float64) + b1)
    out = hidden @ w2.T.astype(np.float64) + b2
    fr.trace["head"] = out.shape
    scores = sigmoid(out[:, :nc])
    deltas = out[:, nc:].reshape(n, nc, 5)
    return scores, deltas


def run_pipeline(image, cfg=None, model=None, source_id="", trace=None, timings=None):
    """Detect objects in one image; returns a list of :class:`Detection`.

    ``model`` defaults to loading ``cfg.weights_path``.  When ``trace`` is a
    dict it is filled with the shape of every intermediate stage; when
    ``timings`` is a dict it receives ``forward`` and ``total`` seconds.
    """
    t0 = time.perf_counter()
    if model is None:
        model = load_model(cfg)
    cfg = model.cfg
    x = image_to_tensor(image, cfg.input_channels)
    check_input_size(*x.shape[2:], cfg)
    f0 = time.perf_counter()
    fr = forward_features(x, model)
    forward_s = time.perf_counter() - f0
    dets = []
    if len(fr.proposals):
        scores, deltas = classify(fr, model)
        for c, name in enumerate(cfg.classes):
            sel = np.nonzero(scores[:, c] >= cfg.score_threshold)[0]
            if not len(sel):
                continue
            boxes = decode_delta(fr.proposals[sel], deltas[sel, c]).reshape(-1, 5)
            keep = nms_rotated(boxes, scores[sel, c], cfg.detect_nms_iou)
            for i in keep:
                dets.append(Detection(RotatedBox.from_array(boxes[i]), name,
                                      float(scores[sel[i], c]), source_id))
    dets.sort(key=lambda d: -d.score)
    dets = dets[:cfg.max_detections]
    if trace is not None:
        trace.update(fr.trace)
        trace["detections"] = len(dets)
    if timings is not None:
        timings["forward"] = forward_s
        timings["total"] = time.perf_counter() - t0
    return dets


def shape_table(cfg, h, w):
    """Expected stage shapes for an ``h x w`` input, derived from the module
    contracts alone (no forward pass)."""
    from .pyramid import level_sizes

    a = cfg.num_anchors
    t = {"input": (1, cfg.input_channels, h, w)}
    for i, (lh, lw) in enumerate(level_sizes(h, w, cfg.pyramid), 1):
        t[f"pyramid.level{i}"] = (1, cfg.input_channels, lh, lw)
        t[f"ipn.level{i}"] = (1, cfg.pyramid.ipn_channels, lh, lw)
    conv_out = lambda n: (n + 2 - 3) // 2 + 1  # 3x3, stride 2, pad 1
    sh, sw = h // 8, w // 8  # conv1/conv4/conv7 each followed by a 2x2 pool
    sizes = [(h // 4, w // 4), (sh, sw)]
    for _ in range(4):
        sh, sw = conv_out(sh), conv_out(sw)
        sizes.append((sh, sw))
    for k, (stage, (fh, fw)) in enumerate(zip(STAGES, sizes), 1):
        t[f"ssd.{stage}"] = (1, cfg.backbone_channels[k], fh, fw)
        t[f"ffn.stage{k}"] = (1, cfg.common_channels, fh, fw)
        t[f"rpn.stage{k}.scores"] = (1, a, fh, fw)
        t[f"rpn.stage{k}.deltas"] = (1, 5 * a, fh, fw)
    return t


# --- benchmark ---------------------------------------------------------------

def detections_digest(dets):
    h = hashlib.sha256()
    for d in dets:
        h.update(np.array([d.score, *d.box.as_array()], dtype=np.float64).tobytes())
        h.update(d.class_name.encode())
    return h.hexdigest()


def bench(images, cfg=None, model=None, repeats=3):
    """Time the pipeline over ``images`` (already decoded) ``repeats`` times.

    Reports frames/second for the full call (``inclusive`` of input
    conversion, pooling, head and NMS) and for the network forward up to the
    proposals (``exclusive``).  Single-threaded; no file I/O is timed.
    """
    if repeats < 3:
        raise ContractViolation(f"bench needs at least 3 repeats, got {repeats}")
    if model is None:
        model = load_model(cfg)
    images = list(images)
    if not images:
        raise ContractViolation("bench needs at least one image")
    incl, excl, digests = [], [], []
    for _ in range(repeats):
        total = forward = 0.0
        run = []
        for img in images:
            t = {}
            run.append(detections_digest(run_pipeline(img, model=model, timings=t)))
            total += t["total"]
            forward += t["forward"]
        incl.append(len(images) / total)
        excl.append(len(images) / forward)
        digests.append(tuple(run))

    def summary(samples):
        return {"samples": samples, "median": statistics.median(samples),
                "p95": float(np.percentile(samples, 95))}

    return {
        "images": len(images),
        "repeats": repeats,
        "concurrency": 1,
        "fps_inclusive": summary(incl),
        "fps_exclusive": summary(excl),
        "deterministic": len(set(digests)) == 1,
    }
