"""Image pyramid and the shared per-level IPN conv stack."""
import math
from dataclasses import dataclass

from .errors import ConfigError, ContractViolation
from .tensor import ConvParams, as_tensor, conv2d, relu, resize_bilinear


@dataclass(frozen=True)
class PyramidConfig:
    n: int = 4
    scale_factor: float = 0.5
    ipn_channels: int = 64

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError(f"pyramid needs at least one level, got n={self.n}")
        if not 0 < self.scale_factor < 1:
            raise ConfigError(f"scale_factor must lie in (0, 1), got {self.scale_factor}")

    def min_size(self):
        """Smallest input side that leaves every level at least 4 pixels."""
        return math.ceil(4 / self.scale_factor ** self.n - 1e-9)


@dataclass(frozen=True)
class IPNParams:
    """1x1 -> 3x3 -> 3x3 -> 1x1, shared by every pyramid level."""

    conv1: ConvParams
    conv2: ConvParams
    conv3: ConvParams
    conv4: ConvParams

    def __post_init__(self):
        for name, k in (("conv1", 1), ("conv2", 3), ("conv3", 3), ("conv4", 1)):
            p = getattr(self, name)
            if tuple(p.kernel_size) != (k, k):
                raise ContractViolation(f"ipn.{name} must be {k}x{k}, got {tuple(p.kernel_size)}")
            if p.stride != 1 or p.padding != k // 2:
                raise ContractViolation(f"ipn.{name} must be size-preserving")
        chain = [self.conv1, self.conv2, self.conv3, self.conv4]
        for a, b in zip(chain, chain[1:]):
            if a.out_channels != b.in_channels:
                raise ContractViolation(
                    f"ipn channel chain broken: {a.weight.shape} -> {b.weight.shape}")

    @property
    def out_channels(self):
        return self.conv4.out_channels


@dataclass
class PyramidFeatures:
    levels: list
    scales: list  # image-space scale of each level relative to the input


def level_sizes(h, w, cfg):
    sizes = [(h, w)]
    for _ in range(cfg.n - 1):
        ph, pw = sizes[-1]
        sizes.append((max(1, round(ph * cfg.scale_factor)), max(1, round(pw * cfg.scale_factor))))
    return sizes


def build_pyramid(image, cfg):
    """Down-scale ``image`` ``cfg.n - 1`` times; level 0 is the input itself."""
    image = as_tensor(image, name="pyramid input")
    if image.shape[0] != 1:
        raise ContractViolation(f"pyramid expects a single image, got batch {image.shape[0]}")
    h, w = image.shape[2:]
    need = cfg.min_size()
    if min(h, w) < need:
        raise ConfigError(
            f"image {h}x{w} too small for a {cfg.n}-level pyramid; need at least {need}x{need}")
    levels = [image]
    for oh, ow in level_sizes(h, w, cfg)[1:]:
        levels.append(resize_bilinear(levels[-1], oh, ow))
    return levels


def ipn_level(x, params):
    x = relu(conv2d(x, params.conv1))
    x = relu(conv2d(x, params.conv2))
    x = relu(conv2d(x, params.conv3))
    return conv2d(x, params.conv4)


def ipn_forward(levels, params):
    """Run the shared IPN stack on every pyramid level."""
    if not levels:
        raise ContractViolation("ipn_forward needs at least one level")
    h0 = levels[0].shape[2]
    feats = []
    for lvl in levels:
        if lvl.shape[1] != params.conv1.in_channels:
            raise ContractViolation(
                f"IPN expects {params.conv1.in_channels} input channels, level has shape {lvl.shape}")
        feats.append(ipn_level(lvl, params))
    return PyramidFeatures(feats, [lvl.shape[2] / h0 for lvl in levels])
