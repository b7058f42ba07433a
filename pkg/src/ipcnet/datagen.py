"""Synthetic labeled shape families.

Procedural stand-ins for part-annotated shape corpora: each family
(rocket, aircraft, car, motorbike) is composed from cylinder, cone, box
and quad primitives with a part label per face.  Proportions are drawn
per seed, and a generated mesh is accepted only if every part holds a
minimum share of the sampling weight, so every sampled cloud contains
every class.  Parts deliberately overlap in z-extent (fins span the lower
body, wheels sit inside the body's height band) so segmentation is
learnable but not a thresholding exercise.

Also owns the on-disk dataset layout:
``<root>/<family>/points/*.pts`` + ``labels/*.seg`` + ``manifest.txt``;
the reader additionally accepts the annotated-ShapeNet convention of a
``points_label/`` directory next to ``points/``.
"""

import os
from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from . import rng


@dataclass(frozen=True)
class ShapeSpec:
    family: str
    labels: tuple
    ranges: dict = field(default_factory=dict)
    min_part_weight: float = 0.03
    max_retries: int = 20

    @property
    def num_classes(self):
        return len(self.labels)


FAMILIES = {
    "rocket": ShapeSpec("rocket", ("Body", "Nose", "Fin"), {
        "body_radius": (0.09, 0.16), "body_height": (0.9, 1.4),
        "nose_height": (0.25, 0.5), "fin_count": (3, 4),
        "fin_width": (0.18, 0.32), "fin_height": (0.25, 0.45),
    }),
    "aircraft": ShapeSpec("aircraft", ("Body", "Engine", "Tail", "Wing"), {
        "body_radius": (0.08, 0.13), "body_length": (1.3, 1.8),
        "wing_span": (0.55, 0.85), "wing_chord": (0.28, 0.42),
        "tail_height": (0.25, 0.4), "engine_radius": (0.05, 0.08),
        "engine_length": (0.25, 0.4),
    }),
    "car": ShapeSpec("car", ("Body", "Hood", "Wheel"), {
        "length": (1.2, 1.7), "width": (0.5, 0.7), "body_height": (0.25, 0.4),
        "cabin_height": (0.2, 0.3), "wheel_radius": (0.12, 0.18),
        "wheel_width": (0.08, 0.12),
    }),
    "motorbike": ShapeSpec("motorbike", ("Body", "Handle", "Gas-tank", "Seat", "Wheel"), {
        "wheel_radius": (0.22, 0.3), "wheel_width": (0.06, 0.1),
        "wheel_gap": (0.9, 1.2), "frame_height": (0.3, 0.45),
        "tank_length": (0.3, 0.45), "seat_length": (0.35, 0.5),
        "handle_span": (0.45, 0.65),
    }),
}


class _Builder:
    """Accumulates labeled primitive pieces into one indexed mesh."""

    def __init__(self):
        self.vertices = []
        self.faces = []
        self.labels = []

    def add(self, vertices, faces, label):
        base = len(self.vertices)
        self.vertices.extend(vertices)
        self.faces.extend([base + a, base + b, base + c] for a, b, c in faces)
        self.labels.extend([label] * len(faces))

    def mesh(self):
        return geo.TriangleMesh(vertices=np.array(self.vertices, dtype=np.float64),
                                faces=np.array(self.faces, dtype=np.int64),
                                face_labels=np.array(self.labels, dtype=np.int64))


def _ring(radius, z, segments, center=(0.0, 0.0)):
    angles = 2.0 * np.pi * np.arange(segments) / segments
    return [(center[0] + radius * np.cos(a), center[1] + radius * np.sin(a), z)
            for a in angles]


def _tube(r0, r1, z0, z1, segments=16, stacks=None):
    """Open frustum side surface between two z planes, subdivided into
    roughly square quads so no face degenerates into a sliver."""
    if stacks is None:
        seg_width = 2.0 * np.pi * max(r0, r1) / segments
        stacks = int(np.clip(round(abs(z1 - z0) / max(seg_width, 1e-9)), 1, 48))
    vertices, faces = [], []
    for s in range(stacks + 1):
        t = s / stacks
        vertices.extend(_ring(r0 + (r1 - r0) * t, z0 + (z1 - z0) * t, segments))
    for s in range(stacks):
        lo, hi = s * segments, (s + 1) * segments
        for i in range(segments):
            j = (i + 1) % segments
            faces.append((lo + i, lo + j, hi + j))
            faces.append((lo + i, hi + j, hi + i))
    return vertices, faces


def _cone(radius, z0, z1, segments=16):
    """Frustum stacks narrowing to a small ring, closed by an apex fan."""
    tip_r = radius * 0.15
    vertices, faces = _tube(radius, tip_r, z0, z0 + (z1 - z0) * 0.85, segments)
    base = len(vertices) - segments
    apex = len(vertices)
    vertices.append((0.0, 0.0, z1))
    for i in range(segments):
        faces.append((base + i, base + (i + 1) % segments, apex))
    return vertices, faces


def _disk(radius, z, segments=16, up=True):
    vertices = _ring(radius, z, segments)
    center = len(vertices)
    vertices.append((0.0, 0.0, z))
    faces = []
    for i in range(segments):
        j = (i + 1) % segments
        faces.append((center, i, j) if up else (center, j, i))
    return vertices, faces


def _quad(p0, p1, p2, p3):
    return [p0, p1, p2, p3], [(0, 1, 2), (0, 2, 3)]


def _box(cx, cy, cz, hx, hy, hz):
    corners = [(cx + sx * hx, cy + sy * hy, cz + sz * hz)
               for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)]
    quads = [(0, 1, 3, 2), (4, 6, 7, 5), (0, 4, 5, 1),
             (2, 3, 7, 6), (0, 2, 6, 4), (1, 5, 7, 3)]
    faces = []
    for a, b, c, d in quads:
        faces.append((a, b, c))
        faces.append((a, c, d))
    return corners, faces


def _wheel(cx, cz, radius, half_width, segments=14):
    """Cylinder with axis along y, capped on both sides."""
    angles = 2.0 * np.pi * np.arange(segments) / segments
    vertices, faces = [], []
    for y in (-half_width, half_width):
        vertices.extend([(cx + radius * np.cos(a), y, cz + radius * np.sin(a))
                         for a in angles])
    for i in range(segments):
        j = (i + 1) % segments
        faces.append((i, j, segments + j))
        faces.append((i, segments + j, segments + i))
    for side, y in ((0, -half_width), (segments, half_width)):
        center = len(vertices)
        vertices.append((cx, y, cz))
        for i in range(segments):
            j = (i + 1) % segments
            faces.append((center, side + i, side + j))
    return vertices, faces


def _build_rocket(spec, gen):
    r = {k: gen.uniform(*v) if k != "fin_count" else 0 for k, v in spec.ranges.items()}
    fins = int(gen.integers(spec.ranges["fin_count"][0],
                            spec.ranges["fin_count"][1] + 1))
    b = _Builder()
    radius, height = r["body_radius"], r["body_height"]
    b.add(*_tube(radius, radius, 0.0, height), label=0)
    b.add(*_disk(radius, 0.0, up=False), label=0)
    b.add(*_cone(radius, height, height + r["nose_height"]), label=1)
    for k in range(fins):
        angle = 2.0 * np.pi * k / fins
        dx, dy = np.cos(angle), np.sin(angle)
        inner, outer = radius * 0.98, radius + r["fin_width"]
        top, outer_top = r["fin_height"], r["fin_height"] * 0.45
        b.add(*_quad((inner * dx, inner * dy, 0.0),
                     (outer * dx, outer * dy, 0.0),
                     (outer * dx, outer * dy, outer_top),
                     (inner * dx, inner * dy, top)), label=2)
    return b.mesh()


def _build_aircraft(spec, gen):
    r = {k: gen.uniform(*v) for k, v in spec.ranges.items()}
    b = _Builder()
    radius, length = r["body_radius"], r["body_length"]
    b.add(*_tube(radius, radius, 0.0, length * 0.8), label=0)
    b.add(*_cone(radius, length * 0.8, length), label=0)
    b.add(*_disk(radius, 0.0, up=False), label=0)
    span, chord = r["wing_span"], r["wing_chord"]
    wing_z = length * 0.45
    for side in (-1, 1):
        b.add(*_quad((side * radius * 0.8, 0.0, wing_z),
                     (side * (radius + span), 0.0, wing_z - chord * 0.35),
                     (side * (radius + span), 0.0, wing_z - chord),
                     (side * radius * 0.8, 0.0, wing_z - chord)), label=3)
        ex = side * (radius + span * 0.45)
        e_r, e_len = r["engine_radius"], r["engine_length"]
        ez = wing_z - chord * 0.6
        ev, ef = _tube(e_r, e_r, ez - e_len * 0.5, ez + e_len * 0.5, segments=10)
        b.add([(x + ex, y, z) for x, y, z in ev], ef, label=1)
        dv, df = _disk(e_r, ez - e_len * 0.5, segments=10, up=False)
        b.add([(x + ex, y, z) for x, y, z in dv], df, label=1)
    tail_h = r["tail_height"]
    b.add(*_quad((0.0, radius * 0.5, chord * 0.4), (0.0, radius * 0.5, 0.0),
                 (0.0, radius * 0.5 + tail_h, 0.0),
                 (0.0, radius * 0.5 + tail_h, chord * 0.25)), label=2)
    for side in (-1, 1):
        b.add(*_quad((side * radius * 0.6, radius * 0.4, chord * 0.35),
                     (side * (radius + tail_h * 0.9), radius * 0.4, chord * 0.1),
                     (side * (radius + tail_h * 0.9), radius * 0.4, 0.0),
                     (side * radius * 0.6, radius * 0.4, 0.0)), label=2)
    return b.mesh()


def _build_car(spec, gen):
    r = {k: gen.uniform(*v) for k, v in spec.ranges.items()}
    b = _Builder()
    length, width, bh = r["length"], r["width"], r["body_height"]
    wheel_r = r["wheel_radius"]
    floor = wheel_r * 0.9
    b.add(*_box(0.0, 0.0, floor + bh / 2, length / 2, width / 2, bh / 2), label=0)
    cab_h = r["cabin_height"]
    b.add(*_box(-length * 0.12, 0.0, floor + bh + cab_h / 2,
                length * 0.28, width * 0.42, cab_h / 2), label=0)
    hood_top = floor + bh + 0.01
    b.add(*_quad((length * 0.18, -width * 0.45, hood_top),
                 (length * 0.48, -width * 0.45, hood_top),
                 (length * 0.48, width * 0.45, hood_top),
                 (length * 0.18, width * 0.45, hood_top)), label=1)
    ww = r["wheel_width"]
    for sx in (-1, 1):
        for sy in (-1, 1):
            vertices, faces = _wheel(sx * length * 0.33, wheel_r, wheel_r, ww / 2)
            shifted = [(x, y + sy * width / 2, z) for x, y, z in vertices]
            b.add(shifted, faces, label=2)
    return b.mesh()


def _build_motorbike(spec, gen):
    r = {k: gen.uniform(*v) for k, v in spec.ranges.items()}
    b = _Builder()
    wheel_r, gap = r["wheel_radius"], r["wheel_gap"]
    for sx in (-1, 1):
        b.add(*_wheel(sx * gap / 2, wheel_r, wheel_r, r["wheel_width"] / 2),
              label=4)
    frame_h = r["frame_height"]
    b.add(*_box(0.0, 0.0, wheel_r + frame_h * 0.3, gap * 0.42, 0.05,
                frame_h * 0.3), label=0)
    b.add(*_box(gap * 0.38, 0.0, wheel_r + frame_h * 0.75, 0.04, 0.04,
                frame_h * 0.45), label=0)
    tank_l = r["tank_length"]
    b.add(*_box(gap * 0.12, 0.0, wheel_r + frame_h * 0.75, tank_l / 2, 0.09,
                0.08), label=2)
    seat_l = r["seat_length"]
    b.add(*_box(-gap * 0.2, 0.0, wheel_r + frame_h * 0.72, seat_l / 2, 0.1,
                0.035), label=3)
    span = r["handle_span"]
    handle = _tube(0.025, 0.025, -span / 2, span / 2, segments=8)
    rotated = [(x, z, y + wheel_r + frame_h * 1.25) for x, y, z in handle[0]]
    shifted = [(x + gap * 0.38, y, z) for x, y, z in rotated]
    b.add(shifted, handle[1], label=1)
    return b.mesh()


_BUILDERS = {
    "rocket": _build_rocket,
    "aircraft": _build_aircraft,
    "car": _build_car,
    "motorbike": _build_motorbike,
}


def part_weight_fractions(mesh):
    """Share of total sampling weight held by each label."""
    weights = geo.sampling_weights(mesh).weights
    counts = np.zeros(int(mesh.face_labels.max()) + 1)
    np.add.at(counts, mesh.face_labels, weights)
    return counts / counts.sum()


def gen_shape(spec: ShapeSpec, seed: int) -> geo.TriangleMesh:
    """Build one labeled mesh; redraws proportions (bounded) until every
    part clears the minimum weight share."""
    if spec.family not in _BUILDERS:
        raise ValueError(f"unknown family {spec.family!r}")
    gen = rng.make_rng(seed, rng.SHAPE)
    for _ in range(spec.max_retries):
        mesh = _BUILDERS[spec.family](spec, gen)
        fractions = part_weight_fractions(mesh)
        if len(fractions) == spec.num_classes and fractions.min() >= spec.min_part_weight:
            return mesh
    raise RuntimeError(f"{spec.family}: no draw met the minimum part weight "
                       f"{spec.min_part_weight} in {spec.max_retries} tries")


def gen_dataset(spec: ShapeSpec, count: int, n_points: int, seed: int):
    """Generate ``count`` normalized labeled clouds, one mesh each."""
    if count < 1:
        raise ValueError("need count >= 1")
    shape_seeds = rng.derive_seeds(seed, rng.DATASET, count)
    clouds = []
    for i in range(count):
        mesh = gen_shape(spec, int(shape_seeds[i]))
        cloud = geo.sample_surface(mesh, n_points, seed, stream=i)
        clouds.append(geo.LabeledPointCloud(
            points=geo.unit_sphere_normalize(cloud.points),
            labels=cloud.labels, num_classes=spec.num_classes))
    return clouds


# ---------------------------------------------------------------------------
# dataset directories
# ---------------------------------------------------------------------------

def save_dataset(root, family, clouds):
    """Write clouds as <root>/<family>/points + labels + manifest.txt."""
    base = os.path.join(root, family)
    os.makedirs(os.path.join(base, "points"), exist_ok=True)
    os.makedirs(os.path.join(base, "labels"), exist_ok=True)
    lines = []
    for i, cloud in enumerate(clouds):
        pts = os.path.join("points", f"cloud_{i:04d}.pts")
        seg = os.path.join("labels", f"cloud_{i:04d}.seg")
        geo.save_pts(os.path.join(base, pts), cloud.points)
        geo.save_seg(os.path.join(base, seg), cloud.labels)
        lines.append(f"{pts} {seg}")
    with open(os.path.join(base, "manifest.txt"), "w") as f:
        f.write("\n".join(lines) + "\n")
    return base


def load_dataset(path, num_classes=None):
    """Read a dataset directory back into labeled clouds.

    Accepts the manifest layout written by save_dataset, a bare
    points/ + labels/ pair, or the annotated-ShapeNet style
    points/ + points_label/ pair.  Class count defaults to the largest
    label seen plus one.
    """
    manifest = os.path.join(path, "manifest.txt")
    pairs = []
    if os.path.exists(manifest):
        with open(manifest) as f:
            for line in f:
                if line.strip():
                    pts, seg = line.split()
                    pairs.append((os.path.join(path, pts), os.path.join(path, seg)))
    else:
        label_dir = next((d for d in ("labels", "points_label", "expert_verified")
                          if os.path.isdir(os.path.join(path, d))), None)
        points_dir = os.path.join(path, "points")
        if label_dir is None or not os.path.isdir(points_dir):
            raise FileNotFoundError(f"{path}: no manifest.txt and no "
                                    "points/ + labels/ layout")
        for name in sorted(os.listdir(points_dir)):
            stem = os.path.splitext(name)[0]
            seg = os.path.join(path, label_dir, stem + ".seg")
            pairs.append((os.path.join(points_dir, name), seg))
    if not pairs:
        raise ValueError(f"{path}: dataset is empty")
    raw = [(geo.load_pts(p), geo.load_seg(s)) for p, s in pairs]
    if num_classes is None:
        num_classes = int(max(labels.max() for _, labels in raw)) + 1
    return [geo.LabeledPointCloud(points=p, labels=l, num_classes=num_classes)
            for p, l in raw]
