"""Feature fusion between an IPN level and an SSD layer.

Per stage::

    ipn_branch = BN(conv1x1(conv3x3(ipn_feat)))     resized to the SSD grid
    ssd_branch = BN(conv1x1(ssd_feat))
    fused      = ReLU(ipn_branch + ssd_branch)
    d          = conv1x1(conv3x3(fused))
"""
from dataclasses import dataclass

from .errors import ContractViolation
from .tensor import BNParams, ConvParams, add, as_tensor, bn, conv2d, relu, resize_bilinear


@dataclass(frozen=True)
class FusionStage:
    ipn_conv3: ConvParams
    ipn_conv1: ConvParams
    ipn_bn: BNParams
    ssd_conv1: ConvParams
    ssd_bn: BNParams
    head_conv3: ConvParams
    head_conv1: ConvParams
    name: str = "stage"

    @property
    def common_channels(self):
        return self.ssd_conv1.out_channels

    def check(self):
        c = self.common_channels
        if self.ipn_conv1.out_channels != c:
            raise ContractViolation(
                f"{self.name}: IPN branch gives {self.ipn_conv1.out_channels} channels, "
                f"SSD branch gives {c}")
        if self.ipn_conv3.out_channels != self.ipn_conv1.in_channels:
            raise ContractViolation(f"{self.name}: IPN branch conv chain mismatch")
        if self.head_conv3.in_channels != c or self.head_conv1.in_channels != self.head_conv3.out_channels:
            raise ContractViolation(f"{self.name}: detection head channel mismatch")


def ffn_fuse(ipn_feat, ssd_feat, stage, taps=None):
    """Fuse one stage and return the detection features ``d``.

    ``ipn_feat=None`` means the stage has no IPN partner; the IPN branch is
    then treated as zero.  If ``taps`` is a dict it receives the
    intermediate tensors ``ipn_branch``, ``ssd_branch``, ``presum`` (the sum
    before ReLU) and ``fused``.
    """
    stage.check()
    ssd_feat = as_tensor(ssd_feat, name=f"{stage.name} SSD input")
    if ssd_feat.shape[0] != 1:
        raise ContractViolation(f"{stage.name}: expected batch 1, got {ssd_feat.shape}")
    if ssd_feat.shape[1] != stage.ssd_conv1.in_channels:
        raise ContractViolation(
            f"{stage.name}: SSD input has {ssd_feat.shape[1]} channels, "
            f"expected {stage.ssd_conv1.in_channels}")
    ssd_branch = bn(conv2d(ssd_feat, stage.ssd_conv1), stage.ssd_bn)
    if ipn_feat is None:
        presum = ssd_branch
        ipn_branch = None
    else:
        ipn_feat = as_tensor(ipn_feat, name=f"{stage.name} IPN input")
        if ipn_feat.shape[1] != stage.ipn_conv3.in_channels or ipn_feat.shape[0] != 1:
            raise ContractViolation(
                f"{stage.name}: IPN input shape {ipn_feat.shape} does not match "
                f"{stage.ipn_conv3.in_channels} expected channels")
        ipn_branch = bn(conv2d(conv2d(ipn_feat, stage.ipn_conv3), stage.ipn_conv1), stage.ipn_bn)
        h, w = ssd_branch.shape[2:]
        if ipn_branch.shape[2:] != (h, w):
            ipn_branch = resize_bilinear(ipn_branch, h, w)
        presum = add(ipn_branch, ssd_branch)
    fused = relu(presum)
    d = conv2d(conv2d(fused, stage.head_conv3), stage.head_conv1)
    if taps is not None:
        taps.update(ipn_branch=ipn_branch, ssd_branch=ssd_branch, presum=presum, fused=fused)
    return d
