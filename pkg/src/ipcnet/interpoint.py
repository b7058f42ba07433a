"""IPC-Net: inter-point convolutional features over kernel activations.

The 64-channel per-point activations (taken right after the feature
transform) are read as an N x 64 map and pushed through a fixed chain: a
1 x 64 feature conv that turns the channels into the map depth, a
zero-removal maxpool along the point axis, then three strided
downsampling convs.  The final block is flattened and appended to every
point's local + global feature row before the segmentation head.

The chain reads the point axis in index order, so unlike the rest of the
network it is not permutation-invariant; reordering the cloud changes
the inter-point features.

Nominal layout (point-axis kernel/stride, out channels):

    feature conv      1 x 64 / 1      -> 64
    zero-removal pool 10 / 10
    downsample1       6 / 5           -> 32
    downsample2       4 / 3           -> 16
    downsample3       3 / 2           -> 8

At N = 2048 the point-axis extents run 2048 -> 204 -> 40 -> 13 -> 6,
so the flattened length is 48 and the concatenated row width 1136.  The
original IPC-Net description quotes 304 flattened features (1392
channels), which no point count reproduces under this chain; the
discrepancy is logged at model build rather than silently reconciled.
"""

import logging
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from . import rng
from .autodiff import Tensor
from .pointnet import PointNetConfig, PointNetSegModel, _run_stack

log = logging.getLogger(__name__)

TABLE_CONCAT_WIDTH = 1392   # quoted total channel count (implies 304 flattened)


@dataclass
class InterPointConfig:
    feature_channels: int = 64
    pool_kernel: int = 10
    pool_stride: int = 10
    down_channels: tuple = (32, 16, 8)
    down_kernels: tuple = (6, 4, 3)
    down_strides: tuple = (5, 3, 2)

    def __post_init__(self):
        self.down_channels = tuple(int(c) for c in self.down_channels)
        self.down_kernels = tuple(int(k) for k in self.down_kernels)
        self.down_strides = tuple(int(s) for s in self.down_strides)
        if not (len(self.down_channels) == len(self.down_kernels)
                == len(self.down_strides)):
            raise ValueError("downsample descriptor lengths disagree")

    @classmethod
    def for_points(cls, n: int) -> "InterPointConfig":
        """Nominal chain, with kernels and strides rescaled when n < 2048.

        Each point-axis size v becomes max(2, ceil(v * n / 2048)); channel
        counts stay put.  At n >= 2048 the nominal sizes are returned
        unchanged.
        """
        base = cls()
        if n >= 2048:
            return base
        scaled = lambda v: max(2, -(-v * n // 2048))
        return replace(base,
                       pool_kernel=scaled(base.pool_kernel),
                       pool_stride=scaled(base.pool_stride),
                       down_kernels=tuple(scaled(k) for k in base.down_kernels),
                       down_strides=tuple(scaled(s) for s in base.down_strides))

    def is_nominal(self) -> bool:
        return self == InterPointConfig()

    def layer_plan(self, n: int):
        """Point-axis extent after each layer, in order; raises naming the
        first layer whose output extent would drop below 1."""
        plan = [("feature_conv", int(n))]
        chain = [("zero_removal_pool", self.pool_kernel, self.pool_stride)]
        chain += [(f"downsample{i + 1}", k, s) for i, (k, s) in
                  enumerate(zip(self.down_kernels, self.down_strides))]
        extent = int(n)
        for name, kernel, stride in chain:
            if kernel > extent:
                raise ValueError(
                    f"{name}: kernel {kernel} exceeds its input extent {extent} "
                    f"at N={n}; cloud too small for this chain")
            extent = (extent - kernel) // stride + 1
            plan.append((name, extent))
        return plan

    def flat_length(self, n: int) -> int:
        return self.layer_plan(n)[-1][1] * self.down_channels[-1]

    def to_dict(self):
        return {
            "ipc_feature_channels": str(self.feature_channels),
            "ipc_pool_kernel": str(self.pool_kernel),
            "ipc_pool_stride": str(self.pool_stride),
            "ipc_down_channels": ",".join(map(str, self.down_channels)),
            "ipc_down_kernels": ",".join(map(str, self.down_kernels)),
            "ipc_down_strides": ",".join(map(str, self.down_strides)),
        }

    @classmethod
    def from_dict(cls, d):
        csv = lambda s: tuple(int(x) for x in s.split(","))
        return cls(feature_channels=int(d["ipc_feature_channels"]),
                   pool_kernel=int(d["ipc_pool_kernel"]),
                   pool_stride=int(d["ipc_pool_stride"]),
                   down_channels=csv(d["ipc_down_channels"]),
                   down_kernels=csv(d["ipc_down_kernels"]),
                   down_strides=csv(d["ipc_down_strides"]))


def interpoint_features(activations, config: InterPointConfig, params):
    """Run the inter-point chain over N x C activations; returns the
    flattened (L,) feature tensor.

    ``params`` is the list of packed conv parameter tensors, feature conv
    first.  The feature conv kernel spans the full channel width, so its
    output is (N, 1, feature_channels); everything after slides along the
    point axis only.
    """
    x = activations if isinstance(activations, Tensor) else Tensor(activations)
    n, width = x.data.shape
    x = ad.conv_valid(x, 1, width, 1, 1, config.feature_channels, params[0])
    x = ad.maxpool(x, config.pool_kernel, 1, config.pool_stride, 1)
    for p, k, s, c in zip(params[1:], config.down_kernels, config.down_strides,
                          config.down_channels):
        x = ad.conv_valid(x, k, 1, s, 1, c, p)
    length = int(np.prod(x.data.shape))
    if length != config.flat_length(n):
        raise AssertionError("inter-point chain shape drifted from its plan")
    return ad.reshape(x, (length,))


def concat_features(local, global_vec, interpoint):
    """Tile the global and inter-point vectors onto every point row:
    N x 64 | N x 1024 | N x L."""
    n = local.data.shape[0]
    return ad.concat([local,
                      ad.repeat_rows(global_vec, n),
                      ad.repeat_rows(interpoint, n)], axis=1)


def _init_conv(kernel_h, kernel_w, c_in, c_out, name, store, gen):
    fan_in = kernel_h * kernel_w * c_in
    bound = 1.0 / np.sqrt(fan_in)
    block = np.vstack([gen.uniform(-bound, bound, size=(fan_in, c_out)),
                       np.zeros((1, c_out))])
    t = Tensor(block, requires_grad=True, name=f"{name}.params")
    store[t.name] = t
    return t


class IPCNetSegModel:
    """PointNet backbone + inter-point chain + widened segmentation head.

    ``n_points`` is fixed at build: the flattened inter-point length (and
    with it the head width) depends on it.
    """

    def __init__(self, pn_config: PointNetConfig, n_points: int, seed: int,
                 ipc_config: InterPointConfig = None):
        if ipc_config is None:
            ipc_config = InterPointConfig.for_points(n_points)
        self.ipc_config = ipc_config
        self.n_points = int(n_points)
        self.seed = seed
        flat = ipc_config.flat_length(n_points)
        if ipc_config.is_nominal() and flat != TABLE_CONCAT_WIDTH - 1088:
            log.warning(
                "inter-point chain at N=%d flattens to %d features "
                "(%d channels once concatenated); the original IPC-Net "
                "description quotes 304 (%d channels), which no point count "
                "reproduces under this chain",
                n_points, flat, 1088 + flat, TABLE_CONCAT_WIDTH)
        self.flat_length = flat
        gen = rng.make_rng(seed, rng.INIT)
        self.pointnet = PointNetSegModel(
            replace(pn_config, head_extra=flat), seed, _gen=gen)
        self.ipc_params = [
            _init_conv(1, pn_config.local_width, 1, ipc_config.feature_channels,
                       "ipc.feature", self.pointnet._params, gen)]
        c_in = ipc_config.feature_channels
        for i, (k, c) in enumerate(zip(ipc_config.down_kernels,
                                       ipc_config.down_channels)):
            self.ipc_params.append(_init_conv(k, 1, c_in, c, f"ipc.down{i + 1}",
                                              self.pointnet._params, gen))
            c_in = c

    @property
    def config(self):
        return self.pointnet.config

    def parameters(self):
        return self.pointnet.parameters()

    def named_parameters(self):
        return self.pointnet.named_parameters()

    def segment(self, points, use_transforms=True):
        """Per-point logits N x k plus the two transform matrices."""
        x = points if isinstance(points, Tensor) else Tensor(points)
        if x.data.shape[0] != self.n_points:
            raise ValueError(f"model built for N={self.n_points} points, "
                             f"got {x.data.shape[0]}")
        local, pooled, in_matrix, a_matrix = self.pointnet.backbone(
            x, use_transforms)
        ipc = interpoint_features(local, self.ipc_config, self.ipc_params)
        stacked = concat_features(local, pooled, ipc)
        if stacked.data.shape[1] != self.config.head_input_width:
            raise AssertionError("concatenated width drifted from the config")
        logits = _run_stack(stacked, self.pointnet.head, activate_last=False)
        return logits, (in_matrix, a_matrix)

    def to_dict(self):
        d = self.pointnet.config.to_dict()
        d["kind"] = "ipcnet"
        d["n_points"] = str(self.n_points)
        d.update(self.ipc_config.to_dict())
        return d
