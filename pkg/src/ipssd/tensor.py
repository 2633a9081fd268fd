"""Dense 4-D feature maps and the forward ops the detector is built from.

A tensor here is a plain ``numpy.ndarray`` of shape ``(n, c, h, w)``.  Ops
keep the input's floating dtype (float32 by default) and accumulate
convolution sums in float64.
"""
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation

__all__ = [
    "ConvParams",
    "BNParams",
    "as_tensor",
    "conv2d",
    "relu",
    "sigmoid",
    "batchnorm_infer",
    "resize_bilinear",
    "add",
    "maxpool2",
]


def as_tensor(x, dtype=None, name="tensor"):
    """Validate ``x`` as a 4-D tensor and return it as a float array.

    Integer input is promoted to float32; float64 input stays float64 unless
    ``dtype`` says otherwise.
    """
    arr = np.asarray(x)
    if dtype is None:
        dtype = arr.dtype if arr.dtype in (np.float32, np.float64) else np.float32
    arr = arr.astype(dtype, copy=False)
    if arr.ndim != 4:
        raise ContractViolation(f"{name} must be 4-D (n, c, h, w), got shape {arr.shape}")
    if min(arr.shape) < 1:
        raise ContractViolation(f"{name} has an empty dimension: {arr.shape}")
    return arr


@dataclass(frozen=True)
class ConvParams:
    """Weights ``(out_c, in_c, kh, kw)``, bias ``(out_c,)``, stride, padding."""

    weight: np.ndarray
    bias: np.ndarray
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        w = np.asarray(self.weight, dtype=np.float32)
        b = np.asarray(self.bias, dtype=np.float32).reshape(-1)
        if w.ndim != 4:
            raise ContractViolation(f"conv weight must be 4-D, got shape {w.shape}")
        if w.shape[2] % 2 == 0 or w.shape[3] % 2 == 0:
            raise ContractViolation(f"conv kernel must be odd-sized, got {w.shape[2:]}")
        if b.shape != (w.shape[0],):
            raise ContractViolation(
                f"conv bias shape {b.shape} does not match out channels {w.shape[0]}")
        if self.stride < 1 or self.padding < 0:
            raise ContractViolation(
                f"stride must be >= 1 and padding >= 0 (got {self.stride}, {self.padding})")
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    @property
    def in_channels(self):
        return self.weight.shape[1]

    @property
    def out_channels(self):
        return self.weight.shape[0]

    @property
    def kernel_size(self):
        return self.weight.shape[2:]

    @classmethod
    def zeros(cls, out_c, in_c, k=1, stride=1, padding=None):
        """All-zero layer; ``padding`` defaults to size-preserving ``k // 2``."""
        if padding is None:
            padding = k // 2
        return cls(np.zeros((out_c, in_c, k, k), np.float32), np.zeros(out_c, np.float32),
                   stride, padding)


@dataclass(frozen=True)
class BNParams:
    """Fixed batch-norm statistics and affine terms for one layer."""

    mean: np.ndarray
    var: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray
    eps: float = 1e-5

    @classmethod
    def identity(cls, c):
        return cls(np.zeros(c, np.float32), np.ones(c, np.float32),
                   np.ones(c, np.float32), np.zeros(c, np.float32), 0.0)


def conv2d(x, params):
    """2-D cross-correlation (no kernel flip) with zero padding.

    Output size per axis is ``(in + 2*pad - k) // stride + 1``.
    """
    x = as_tensor(x, name="conv2d input")
    n, c, h, w = x.shape
    wt = params.weight
    oc, ic, kh, kw = wt.shape
    if c != ic:
        raise ContractViolation(
            f"conv2d channel mismatch: input shape {x.shape} vs weight shape {wt.shape}")
    p, s = params.padding, params.stride
    if h + 2 * p < kh or w + 2 * p < kw:
        raise ContractViolation(
            f"conv2d kernel {wt.shape} larger than padded input {x.shape}")
    oh = (h + 2 * p - kh) // s + 1
    ow = (w + 2 * p - kw) // s + 1
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
    xp = xp.astype(np.float64)
    # (kh, kw, oc, c) so each tap is a contiguous matrix BLAS can take directly
    taps = np.ascontiguousarray(wt.astype(np.float64).transpose(2, 3, 0, 1))
    out = np.empty((n, oc, oh, ow), np.float64)
    for b in range(n):
        # one (oc x c) @ (c x oh*ow) product per kernel tap, summed in float64
        acc = np.zeros((oc, oh * ow))
        for di in range(kh):
            for dj in range(kw):
                tap = xp[b, :, di:di + s * (oh - 1) + 1:s, dj:dj + s * (ow - 1) + 1:s]
                acc += taps[di, dj] @ tap.reshape(c, -1)
        out[b] = acc.reshape(oc, oh, ow)
    out += params.bias.astype(np.float64)[None, :, None, None]
    return out.astype(x.dtype)


def relu(x):
    x = np.asarray(x)
    return np.maximum(x, 0).astype(x.dtype, copy=False)


def sigmoid(x):
    x = np.asarray(x)
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def batchnorm_infer(x, mean, var, gamma, beta, eps=1e-5):
    """Inference-mode batch norm: ``(v - mean) / sqrt(var + eps) * gamma + beta``."""
    x = as_tensor(x, name="batchnorm input")
    c = x.shape[1]
    vecs = [np.asarray(v, dtype=x.dtype).reshape(-1) for v in (mean, var, gamma, beta)]
    for label, v in zip(("mean", "var", "gamma", "beta"), vecs):
        if v.shape != (c,):
            raise ContractViolation(
                f"batchnorm {label} has length {v.size}, input has {c} channels")
    mean, var, gamma, beta = (v.reshape(1, c, 1, 1) for v in vecs)
    # eps == 0 is allowed as long as every channel keeps a positive denominator
    if np.any(var < 0) or eps < 0 or np.any(var + eps <= 0):
        raise ContractViolation("batchnorm needs var >= 0, eps >= 0 and var + eps > 0")
    return ((x - mean) / np.sqrt(var + x.dtype.type(eps)) * gamma + beta).astype(x.dtype)


def bn(x, p):
    """Apply a :class:`BNParams` bundle."""
    return batchnorm_infer(x, p.mean, p.var, p.gamma, p.beta, p.eps)


def _axis_taps(n_in, n_out):
    # align_corners=False source coordinates, clamped at the low edge like
    # the common framework implementations
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def resize_bilinear(x, out_h, out_w):
    """Bilinear resize with half-pixel (align_corners=False) sampling.

    Interpolation is written as ``a + t * (b - a)`` so constant fields stay
    bit-exact.
    """
    x = as_tensor(x, name="resize input")
    if out_h < 1 or out_w < 1:
        raise ContractViolation(f"resize target must be >= 1, got {(out_h, out_w)}")
    n, c, h, w = x.shape
    if (h, w) == (out_h, out_w):
        return x.copy()
    lo, hi, t = _axis_taps(h, out_h)
    t = t.astype(x.dtype)[:, None]
    a, b = x[:, :, lo, :], x[:, :, hi, :]
    rows = a + t * (b - a)
    lo, hi, t = _axis_taps(w, out_w)
    t = t.astype(x.dtype)
    a, b = rows[..., lo], rows[..., hi]
    return (a + t * (b - a)).astype(x.dtype)


def add(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ContractViolation(f"add shape mismatch: {a.shape} vs {b.shape}")
    return a + b


def maxpool2(x):
    """2x2 max pool, stride 2.  Spatial dims must be even."""
    x = as_tensor(x, name="maxpool input")
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ContractViolation(f"maxpool2 needs even spatial dims, got {(h, w)}")
    return x.reshape(n, c, h // 2, 2, w // 2, 2).max(axis=(3, 5))
