"""PointNet segmentation baseline.

One cloud at a time: an input transform predicted from the points
themselves, a shared per-point MLP trunk, a 64x64 feature transform
(returned so training can regularize it toward orthogonality), a maxpool
global signature, and a per-point head over the concatenated local +
global features.

Both transform networks initialize their final layer to zero weights and
an identity bias, so an untrained transform is exactly a no-op.  No batch
normalization anywhere: the paper's training setup does not pin it down,
and leaving it out keeps single-cloud forward passes deterministic and
batch-size independent.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autodiff as ad
from . import rng
from .autodiff import Tensor


@dataclass
class PointNetConfig:
    num_classes: int
    trunk_widths: tuple = (64, 64, 64, 128, 1024)
    transform_stage: int = 2        # trunk layers applied before the feature transform
    head_widths: tuple = (512, 256, 128)
    tnet_mlp_widths: tuple = (64, 128, 1024)
    tnet_fc_widths: tuple = (512, 256)
    head_extra: int = 0             # extra per-point channels spliced in before the head

    def __post_init__(self):
        self.trunk_widths = tuple(int(w) for w in self.trunk_widths)
        self.head_widths = tuple(int(w) for w in self.head_widths)
        self.tnet_mlp_widths = tuple(int(w) for w in self.tnet_mlp_widths)
        self.tnet_fc_widths = tuple(int(w) for w in self.tnet_fc_widths)
        if not 1 <= self.transform_stage < len(self.trunk_widths):
            raise ValueError("transform_stage must fall inside the trunk")
        if self.num_classes < 1:
            raise ValueError("need at least one class")

    @property
    def local_width(self):
        return self.trunk_widths[self.transform_stage - 1]

    @property
    def global_width(self):
        return self.trunk_widths[-1]

    @property
    def head_input_width(self):
        return self.local_width + self.global_width + self.head_extra

    def to_dict(self):
        return {
            "kind": "pointnet",
            "num_classes": str(self.num_classes),
            "trunk_widths": ",".join(map(str, self.trunk_widths)),
            "transform_stage": str(self.transform_stage),
            "head_widths": ",".join(map(str, self.head_widths)),
            "tnet_mlp_widths": ",".join(map(str, self.tnet_mlp_widths)),
            "tnet_fc_widths": ",".join(map(str, self.tnet_fc_widths)),
            "head_extra": str(self.head_extra),
        }

    @classmethod
    def from_dict(cls, d):
        csv = lambda s: tuple(int(x) for x in s.split(","))
        return cls(num_classes=int(d["num_classes"]),
                   trunk_widths=csv(d["trunk_widths"]),
                   transform_stage=int(d["transform_stage"]),
                   head_widths=csv(d["head_widths"]),
                   tnet_mlp_widths=csv(d["tnet_mlp_widths"]),
                   tnet_fc_widths=csv(d["tnet_fc_widths"]),
                   head_extra=int(d.get("head_extra", "0")))


class TNetParams:
    """Spatial/feature transform net: shared MLP, maxpool, FC stack, then a
    final layer whose zero weights + identity bias make the initial output
    exactly the d x d identity."""

    def __init__(self, d, mlp_widths, fc_widths, prefix, store, gen):
        self.d = d
        self.mlp = _dense_stack(d, mlp_widths, f"{prefix}.mlp", store, gen)
        self.fc = _dense_stack(mlp_widths[-1], fc_widths, f"{prefix}.fc", store, gen)
        w = Tensor(np.zeros((fc_widths[-1], d * d)), requires_grad=True,
                   name=f"{prefix}.out.weight")
        b = Tensor(np.eye(d).ravel(), requires_grad=True, name=f"{prefix}.out.bias")
        store[w.name], store[b.name] = w, b
        self.out = (w, b)

    def matrix(self, x):
        """Predict the d x d transform from an N x d tensor."""
        h = _run_stack(x, self.mlp)
        pooled = ad.maxpool(h, h.data.shape[0], 1, 1, 1)
        h = _run_stack(pooled, self.fc)
        w, b = self.out
        return ad.reshape(ad.add(ad.matmul(h, w), b), (self.d, self.d))


def _init_linear(fan_in, fan_out, name, store, gen):
    bound = 1.0 / np.sqrt(fan_in)
    w = Tensor(gen.uniform(-bound, bound, size=(fan_in, fan_out)),
               requires_grad=True, name=f"{name}.weight")
    b = Tensor(np.zeros(fan_out), requires_grad=True, name=f"{name}.bias")
    store[w.name], store[b.name] = w, b
    return (w, b)


def _dense_stack(fan_in, widths, prefix, store, gen, start=0):
    layers = []
    for i, width in enumerate(widths):
        layers.append(_init_linear(fan_in, width, f"{prefix}{start + i}", store, gen))
        fan_in = width
    return layers


def _run_stack(x, layers, activate_last=True, record=None):
    """Apply dense layers with ReLU between (and optionally after) them.
    ``record`` collects each layer's post-nonlinearity values by name."""
    for i, (w, b) in enumerate(layers):
        x = ad.add(ad.matmul(x, w), b)
        if activate_last or i + 1 < len(layers):
            x = ad.relu(x)
        if record is not None:
            record[w.name.rsplit(".", 1)[0]] = x.data
    return x


class PointNetSegModel:
    def __init__(self, config: PointNetConfig, seed: int, _gen=None):
        self.config = config
        self.seed = seed
        self._params = {}
        gen = rng.make_rng(seed, rng.INIT) if _gen is None else _gen
        cfg = config
        self.input_tnet = TNetParams(3, cfg.tnet_mlp_widths, cfg.tnet_fc_widths,
                                     "input_tnet", self._params, gen)
        stage = cfg.transform_stage
        self.trunk_pre = _dense_stack(3, cfg.trunk_widths[:stage], "trunk", self._params, gen)
        self.feature_tnet = TNetParams(cfg.local_width, cfg.tnet_mlp_widths,
                                       cfg.tnet_fc_widths, "feature_tnet",
                                       self._params, gen)
        self.trunk_post = _dense_stack(cfg.local_width, cfg.trunk_widths[stage:],
                                       "trunk", self._params, gen, start=stage)
        self.head = _dense_stack(cfg.head_input_width,
                                 cfg.head_widths + (cfg.num_classes,),
                                 "head", self._params, gen)

    def parameters(self):
        return list(self._params.values())

    def named_parameters(self):
        return dict(self._params)

    def backbone(self, points, use_transforms=True, record=None):
        """Trunk forward: returns (local N x 64, pooled global 1 x 1024,
        input matrix, feature matrix A).  ``record`` captures every trunk
        layer's per-point activations by layer name."""
        x = points if isinstance(points, Tensor) else Tensor(points)
        in_matrix = self.input_tnet.matrix(x)
        if use_transforms:
            x = ad.matmul(x, in_matrix)
        x = _run_stack(x, self.trunk_pre, record=record)
        a_matrix = self.feature_tnet.matrix(x)
        if use_transforms:
            x = ad.matmul(x, a_matrix)
        local = x
        x = _run_stack(x, self.trunk_post, record=record)
        pooled = ad.maxpool(x, x.data.shape[0], 1, 1, 1)
        return local, pooled, in_matrix, a_matrix

    def segment(self, points, use_transforms=True):
        """Per-point logits N x k plus the two transform matrices.

        ``use_transforms=False`` skips applying both predicted matrices
        (ablation switch; with identity-initialized TNets the outputs
        match exactly).
        """
        if self.config.head_extra:
            raise ValueError("head expects extra features; use the inter-point model")
        local, pooled, in_matrix, a_matrix = self.backbone(points, use_transforms)
        n = local.data.shape[0]
        stacked = ad.concat([local, ad.repeat_rows(pooled, n)], axis=1)
        logits = _run_stack(stacked, self.head, activate_last=False)
        return logits, (in_matrix, a_matrix)


def l_reg(a):
    """Orthogonality penalty ||I - A A^T||_F^2 (zero iff A is orthogonal)."""
    if not isinstance(a, Tensor):
        a = Tensor(a)
    if a.data.ndim != 2 or a.data.shape[0] != a.data.shape[1]:
        raise ValueError(f"l_reg needs a square matrix, got shape {a.data.shape}")
    eye = Tensor(np.eye(a.data.shape[0]))
    diff = ad.add(eye, ad.scale(ad.matmul(a, ad.transpose(a)), -1.0))
    return ad.sum_all(ad.mul(diff, diff))


def input_transform(points, tnet: TNetParams):
    """Predict the 3 x 3 alignment matrix and apply it: (matrix, points @ matrix)."""
    x = points if isinstance(points, Tensor) else Tensor(points)
    matrix = tnet.matrix(x)
    return matrix, ad.matmul(x, matrix)


def feature_transform(features, tnet: TNetParams):
    """Same contract at d = 64: returns (A, features @ A)."""
    x = features if isinstance(features, Tensor) else Tensor(features)
    matrix = tnet.matrix(x)
    return matrix, ad.matmul(x, matrix)


def global_feature(point_features):
    """Per-channel max over the point axis; order-invariant by construction."""
    x = point_features if isinstance(point_features, Tensor) else Tensor(point_features)
    pooled = ad.maxpool(x, x.data.shape[0], 1, 1, 1)
    return ad.reshape(pooled, (x.data.shape[1],))
