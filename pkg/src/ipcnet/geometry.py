"""Mesh handling and surface sampling.

Converts triangle meshes into labeled point clouds: load an ASCII OFF/OBJ
mesh (optionally with a ``.flab`` per-face label sidecar), sample points
across the surface in proportion to face weights that discount sliver
triangles, and normalize clouds into the unit sphere.

Face selection works on cumulative weights (area times equilaterality
ratio) via binary search; the point inside the chosen triangle comes from
the standard square-root warp of two uniform draws, which is uniform over
the triangle's area.
"""

import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import rng


@dataclass
class TriangleMesh:
    """Indexed triangle soup with optional per-face class labels."""

    vertices: np.ndarray          # (V, 3) float64
    faces: np.ndarray             # (F, 3) int indices into vertices
    face_labels: Optional[np.ndarray] = None   # (F,) ints, or None

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64)
        self.faces = np.asarray(self.faces, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise ValueError(f"vertices must be (V, 3), got {self.vertices.shape}")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise ValueError(f"faces must be (F, 3), got {self.faces.shape}")
        if len(self.faces):
            if self.faces.min() < 0 or self.faces.max() >= len(self.vertices):
                raise ValueError("face index out of range")
            same = ((self.faces[:, 0] == self.faces[:, 1])
                    | (self.faces[:, 1] == self.faces[:, 2])
                    | (self.faces[:, 0] == self.faces[:, 2]))
            if same.any():
                raise ValueError(f"face {int(np.flatnonzero(same)[0])} repeats a vertex index")
        if self.face_labels is not None:
            self.face_labels = np.asarray(self.face_labels, dtype=np.int64)
            if self.face_labels.shape != (len(self.faces),):
                raise ValueError("face_labels length must match face count")

    def corners(self):
        """Return the three (F, 3) corner arrays a, b, c of every face."""
        v = self.vertices
        return v[self.faces[:, 0]], v[self.faces[:, 1]], v[self.faces[:, 2]]


@dataclass
class LabeledPointCloud:
    """N sampled points with one class id each."""

    points: np.ndarray            # (N, 3) float64
    labels: np.ndarray            # (N,) ints
    num_classes: int

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.points.ndim != 2 or self.points.shape[1] != 3 or len(self.points) < 1:
            raise ValueError(f"points must be (N>=1, 3), got {self.points.shape}")
        if self.labels.shape != (len(self.points),):
            raise ValueError("labels length must match point count")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise ValueError(
                f"label out of range: saw {int(self.labels.max())} with "
                f"{self.num_classes} classes")


@dataclass
class SamplingWeights:
    """Per-face sampling weights plus their running sum for binary search."""

    weights: np.ndarray           # (F,) area * equilaterality, >= 0
    cumulative: np.ndarray        # (F,) non-decreasing, last entry = total


def triangle_areas(a, b, c):
    """Areas of triangles given (F, 3) corner arrays."""
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=-1)


def equilaterality_ratio(a, b, c):
    """12*sqrt(3)*Area / perimeter^2, elementwise over (F, 3) corners.

    The isoperimetric ratio Area/perimeter^2 normalized over triangles:
    1 exactly for equilateral triangles, 0 for collinear ones,
    scale-invariant in between.  Zero-perimeter (all corners coincident)
    triangles are rejected rather than given a 0/0.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    perim = (np.linalg.norm(b - a, axis=-1)
             + np.linalg.norm(c - b, axis=-1)
             + np.linalg.norm(a - c, axis=-1))
    if np.any(perim == 0.0):
        raise ValueError("zero-perimeter triangle has no equilaterality ratio")
    return 12.0 * np.sqrt(3.0) * triangle_areas(a, b, c) / perim**2


def sampling_weights(mesh: TriangleMesh) -> SamplingWeights:
    """Weight = area x equilaterality ratio; slivers get ~0, degenerate 0."""
    a, b, c = mesh.corners()
    w = triangle_areas(a, b, c) * equilaterality_ratio(a, b, c)
    cum = np.cumsum(w)
    if cum[-1] <= 0.0:
        raise ValueError("mesh has no positively weighted face")
    return SamplingWeights(weights=w, cumulative=cum)


def warp_to_triangle(a, b, c, r1, r2):
    """Map (r1, r2) in [0,1]^2 into triangle abc by the square-root warp.

    P = (1 - sqrt(r1)) a + sqrt(r1)(1 - sqrt(r2)) b + sqrt(r1 r2) c.
    The coefficients are barycentric (non-negative, summing to 1), so the
    point always lands inside the triangle; r1 sweeps away from vertex a,
    r2 along the far edge.
    """
    s = np.sqrt(r1)
    t = np.sqrt(r2)
    u = (1.0 - s)[..., None]
    v = (s * (1.0 - t))[..., None]
    w = (s * t)[..., None]
    return u * a + v * b + w * c


def sample_surface(mesh: TriangleMesh, n: int, seed: int,
                   stream: int = 0) -> LabeledPointCloud:
    """Draw ``n`` points over the mesh surface, faces weighted by
    area times equilaterality.

    One (n, 3) block of uniforms is drawn up front: column 0 picks the
    face (binary search of u * total against the cumulative weights),
    columns 1-2 are the in-triangle warp draws.  ``stream`` separates
    clouds sampled from the same master seed.
    """
    if n < 1:
        raise ValueError("need n >= 1 samples")
    sw = sampling_weights(mesh)
    draws = rng.make_rng(seed, rng.SAMPLE, stream).random((n, 3))
    face_idx = np.searchsorted(sw.cumulative, draws[:, 0] * sw.cumulative[-1],
                               side="right")
    face_idx = np.minimum(face_idx, len(sw.cumulative) - 1)
    a, b, c = mesh.corners()
    points = warp_to_triangle(a[face_idx], b[face_idx], c[face_idx],
                              draws[:, 1], draws[:, 2])
    if mesh.face_labels is not None:
        labels = mesh.face_labels[face_idx]
        num_classes = int(mesh.face_labels.max()) + 1
    else:
        labels = np.zeros(n, dtype=np.int64)
        num_classes = 1
    return LabeledPointCloud(points=points, labels=labels, num_classes=num_classes)


def bbox_center(points, literal_eq3: bool = False):
    """Axis-aligned bounding-box midpoint (max + min)/2 per coordinate.

    ``literal_eq3`` switches to (max - min)/2, the half-extent: that
    variant only centers clouds whose minimum corner sits at the origin,
    and is kept for auditing runs against sources that used it.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3 or len(points) < 1:
        raise ValueError(f"points must be (N>=1, 3), got {points.shape}")
    hi, lo = points.max(axis=0), points.min(axis=0)
    if literal_eq3:
        return (hi - lo) * 0.5
    return (hi + lo) * 0.5


def unit_sphere_normalize(points, literal_eq3: bool = False):
    """Center at the bbox midpoint and scale the farthest point to norm 1."""
    points = np.asarray(points, dtype=np.float64)
    centered = points - bbox_center(points, literal_eq3=literal_eq3)
    radius = np.linalg.norm(centered, axis=1).max()
    if radius == 0.0:
        raise ValueError("all points coincident; cannot normalize")
    return centered / radius


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def load_off(path) -> TriangleMesh:
    """Read an ASCII OFF mesh (triangular faces only)."""
    with open(path) as f:
        tokens = []
        for line in f:
            line = line.split("#", 1)[0].strip()
            if line:
                tokens.extend(line.split())
    if not tokens or tokens[0] != "OFF":
        raise ValueError(f"{path}: missing OFF header")
    nv, nf = int(tokens[1]), int(tokens[2])
    pos = 4  # skip the edge count
    verts = np.array(tokens[pos:pos + 3 * nv], dtype=np.float64).reshape(nv, 3)
    pos += 3 * nv
    faces = []
    for _ in range(nf):
        k = int(tokens[pos])
        if k != 3:
            raise ValueError(f"{path}: non-triangular face with {k} vertices")
        faces.append([int(t) for t in tokens[pos + 1:pos + 4]])
        pos += 4
    return TriangleMesh(vertices=verts, faces=np.array(faces, dtype=np.int64),
                        face_labels=_maybe_load_flab(path, nf))


def load_obj(path) -> TriangleMesh:
    """Read an ASCII OBJ mesh: v and f records, triangles only."""
    verts, faces = [], []
    with open(path) as f:
        for line in f:
            parts = line.split("#", 1)[0].split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                if len(parts) != 4:
                    raise ValueError(f"{path}: non-triangular face record")
                # indices may carry /texture/normal suffixes; 1-based
                faces.append([int(p.split("/")[0]) - 1 for p in parts[1:4]])
    if not verts:
        raise ValueError(f"{path}: no vertices")
    return TriangleMesh(vertices=np.array(verts, dtype=np.float64),
                        faces=np.array(faces, dtype=np.int64).reshape(-1, 3),
                        face_labels=_maybe_load_flab(path, len(faces)))


def load_mesh(path) -> TriangleMesh:
    ext = os.path.splitext(path)[1].lower()
    if ext == ".off":
        return load_off(path)
    if ext == ".obj":
        return load_obj(path)
    raise ValueError(f"unsupported mesh format: {path}")


def _maybe_load_flab(mesh_path, num_faces):
    sidecar = os.path.splitext(mesh_path)[0] + ".flab"
    if not os.path.exists(sidecar):
        return None
    labels = load_flab(sidecar)
    if len(labels) != num_faces:
        raise ValueError(f"{sidecar}: {len(labels)} labels for {num_faces} faces")
    return labels


def load_flab(path) -> np.ndarray:
    with open(path) as f:
        return np.array([int(line) for line in f if line.strip()], dtype=np.int64)


def save_flab(path, labels) -> None:
    with open(path, "w") as f:
        for lab in labels:
            f.write(f"{int(lab)}\n")


def save_pts(path, points) -> None:
    """Write points as 'x y z' lines with 17 significant digits."""
    with open(path, "w") as f:
        for p in np.asarray(points, dtype=np.float64):
            f.write(f"{p[0]:.17g} {p[1]:.17g} {p[2]:.17g}\n")


def load_pts(path) -> np.ndarray:
    rows = []
    with open(path) as f:
        for line in f:
            parts = line.split()
            if parts:
                rows.append([float(x) for x in parts[:3]])
    if not rows:
        raise ValueError(f"{path}: no points")
    return np.array(rows, dtype=np.float64)


def save_seg(path, labels) -> None:
    with open(path, "w") as f:
        for lab in labels:
            f.write(f"{int(lab)}\n")


def load_seg(path) -> np.ndarray:
    with open(path) as f:
        labels = np.array([int(line) for line in f if line.strip()], dtype=np.int64)
    if not len(labels):
        raise ValueError(f"{path}: no labels")
    return labels
