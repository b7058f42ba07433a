"""Segmentation metrics and kernel-analysis instruments.

Metrics: per-point accuracy (a fraction) and mean intersection-over-union
(a percentage).  Instruments: per-point activation maps for a chosen
kernel, 2D field-view projections of those maps, and kernel-redundancy
heatmaps built from pairwise distances between the incoming weight
vectors of a layer's output units.
"""

from dataclasses import dataclass

import numpy as np

AXES = {"x": 0, "y": 1, "z": 2}


def accuracy(pred, true):
    """Fraction of points labeled correctly, in [0, 1]."""
    pred = np.asarray(pred)
    true = np.asarray(true)
    if pred.shape != true.shape:
        raise ValueError(f"label arrays differ in shape: {pred.shape} vs {true.shape}")
    return float((pred == true).mean())


def miou(pred, true, num_classes):
    """Mean per-class IoU over points, as a percentage.

    Classes absent from both prediction and ground truth count as IoU 1,
    so a perfect prediction scores 100 regardless of which classes the
    cloud actually contains.
    """
    pred = np.asarray(pred)
    true = np.asarray(true)
    if pred.shape != true.shape:
        raise ValueError(f"label arrays differ in shape: {pred.shape} vs {true.shape}")
    if len(pred) and max(pred.max(), true.max()) >= num_classes:
        raise ValueError("label out of range for the given class count")
    ious = []
    for c in range(num_classes):
        p, t = pred == c, true == c
        union = (p | t).sum()
        ious.append(1.0 if union == 0 else (p & t).sum() / union)
    return float(np.mean(ious) * 100.0)


@dataclass
class KernelActivationMap:
    layer: str
    kernel: int
    values: np.ndarray        # (N,) activation per point
    points: np.ndarray        # (N, 3) the cloud the values came from


@dataclass
class RedundancyHeatmap:
    distances: np.ndarray     # (K, K), reordered, symmetric, zero diagonal
    order: np.ndarray         # permutation applied to rows and columns


def _recorded_forward(model, points):
    record = {}
    backbone = getattr(model, "pointnet", model).backbone
    backbone(np.asarray(points, dtype=np.float64), record=record)
    return record


def kernel_activation_map(model, points, layer, kernel):
    """Per-point post-nonlinearity activation of one kernel (output unit).

    ``layer`` names a recorded per-point stage, e.g. ``trunk0``; points
    with value > 0 are the ones the kernel considers active.
    """
    points = np.asarray(points, dtype=np.float64)
    record = _recorded_forward(model, points)
    if layer not in record:
        raise ValueError(f"unknown layer {layer!r}; recorded: {sorted(record)}")
    acts = record[layer]
    if not 0 <= kernel < acts.shape[1]:
        raise ValueError(f"kernel {kernel} out of range for {layer} "
                         f"(width {acts.shape[1]})")
    return KernelActivationMap(layer=layer, kernel=kernel,
                               values=acts[:, kernel].copy(), points=points)


def field_view_projection(act_map: KernelActivationMap, axes=("x", "y")):
    """Project the map onto two coordinate axes: rows of (u, v, activation)."""
    a, b = axes
    if a not in AXES or b not in AXES or a == b:
        raise ValueError(f"axes must be two distinct of x/y/z, got {axes!r}")
    return np.column_stack([act_map.points[:, AXES[a]],
                            act_map.points[:, AXES[b]],
                            act_map.values])


def _kernel_vectors(model, layer):
    """Columns of a layer's incoming weights, biases excluded."""
    params = model.named_parameters()
    if f"{layer}.weight" in params:
        return params[f"{layer}.weight"].data
    if f"{layer}.params" in params:
        return params[f"{layer}.params"].data[:-1]   # drop the bias row
    raise ValueError(f"unknown layer {layer!r} (no weight block by that name)")


def redundancy_heatmap(model, layer):
    """Pairwise Euclidean distances between a layer's kernel vectors,
    rows/columns sorted by ascending row-sum (most redundant first)."""
    vectors = _kernel_vectors(model, layer).T     # (K, fan_in)
    if vectors.shape[0] < 2:
        raise ValueError(f"layer {layer!r} has a single kernel; no pairs to compare")
    diff = vectors[:, None, :] - vectors[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=2))
    order = np.argsort(dist.sum(axis=1), kind="stable")
    return RedundancyHeatmap(distances=dist[np.ix_(order, order)], order=order)


def redundancy_score(heatmap: RedundancyHeatmap):
    """Mean off-diagonal distance; higher means less redundant kernels."""
    d = heatmap.distances
    k = d.shape[0]
    return float((d.sum() - np.trace(d)) / (k * k - k))


# ---------------------------------------------------------------------------
# file emission
# ---------------------------------------------------------------------------

def write_activation_csv(path, act_map: KernelActivationMap):
    with open(path, "w") as f:
        f.write("x,y,z,activation\n")
        for p, v in zip(act_map.points, act_map.values):
            f.write(f"{p[0]:.17g},{p[1]:.17g},{p[2]:.17g},{v:.17g}\n")


def write_projection_csv(path, rows, axes=("x", "y")):
    with open(path, "w") as f:
        f.write(f"{axes[0]},{axes[1]},activation\n")
        for u, v, act in rows:
            f.write(f"{u:.17g},{v:.17g},{act:.17g}\n")


def write_heatmap_csv(path, heatmap: RedundancyHeatmap):
    with open(path, "w") as f:
        for row in heatmap.distances:
            f.write(",".join(f"{v:.17g}" for v in row) + "\n")


def write_order_csv(path, heatmap: RedundancyHeatmap):
    with open(path, "w") as f:
        f.write(",".join(str(int(i)) for i in heatmap.order) + "\n")


def write_heatmap_pgm(path, heatmap: RedundancyHeatmap):
    """8-bit binary PGM: minimum distance maps to white (255), maximum to
    black (0); a constant matrix comes out all white."""
    d = heatmap.distances
    lo, hi = d.min(), d.max()
    if hi == lo:
        pixels = np.full(d.shape, 255, dtype=np.uint8)
    else:
        pixels = np.round(255.0 * (hi - d) / (hi - lo)).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{d.shape[1]} {d.shape[0]}\n255\n".encode("ascii"))
        f.write(pixels.tobytes())
