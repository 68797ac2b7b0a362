"""Datasets: IDX file ingestion, synthetic generation, and input sequences.

Supported sources:

* IDX image/label file pairs (big-endian, magics 0x00000803 / 0x00000801),
  bit-exact reading and writing. Pixels are scaled to [0, 1] by /255.
* Isotropic Gaussian blobs placed on a regular simplex, for quick
  separable or overlapping toy problems.
* A deterministic "glyph" image generator producing 28x28 stroke drawings
  in two disjoint visual families, used as an offline stand-in for
  handwritten-digit style data and a domain-shifted outlier set.

Sequences group inputs that are known to share a class, optionally with a
per-element corruption (additive noise or rectangular erasure) whose
provenance is tagged.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, IdxFormatError, StructuralError
from .seeding import make_rng

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class LabeledSet:
    """Feature matrix (N x n_x) with integer class labels in {0..M-1}."""

    inputs: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        inputs = np.asarray(self.inputs, dtype=float)
        labels = np.asarray(self.labels, dtype=np.int64)
        if inputs.ndim != 2:
            raise StructuralError(f"inputs must be 2-D, got shape {inputs.shape}")
        if labels.ndim != 1 or labels.shape[0] != inputs.shape[0]:
            raise StructuralError(
                f"labels length {labels.shape} does not match {inputs.shape[0]} inputs"
            )
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise StructuralError(
                f"label {int(labels.max() if labels.max() >= self.num_classes else labels.min())} "
                f"outside {{0..{self.num_classes - 1}}}"
            )
        if inputs.size and not np.isfinite(inputs).all():
            raise StructuralError("inputs contain NaN or Inf")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def subset(self, indices) -> "LabeledSet":
        """New set restricted to the given row indices (copying)."""
        idx = np.asarray(indices)
        return LabeledSet(self.inputs[idx].copy(), self.labels[idx].copy(), self.num_classes)


@dataclass(frozen=True)
class Provenance:
    """Origin tag for one sequence element."""

    kind: str  # "original" | "noise" | "erase"
    magnitude: float | None = None


@dataclass(frozen=True)
class InputSequence:
    """L inputs declared to share one true class, with provenance tags."""

    inputs: np.ndarray
    true_class: int
    provenance: tuple[Provenance, ...] = field(default=())

    def __post_init__(self):
        inputs = np.asarray(self.inputs, dtype=float)
        if inputs.ndim != 2 or inputs.shape[0] < 1:
            raise StructuralError(f"sequence needs at least one row, got {inputs.shape}")
        prov = tuple(self.provenance)
        if not prov:
            prov = tuple(Provenance("original") for _ in range(inputs.shape[0]))
        if len(prov) != inputs.shape[0]:
            raise StructuralError("one provenance tag required per element")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "provenance", prov)

    def __len__(self) -> int:
        return self.inputs.shape[0]


# ---------------------------------------------------------------------------
# IDX files
# ---------------------------------------------------------------------------


def _read_exact(fh, n: int, path: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise IdxFormatError(f"{path}: truncated, wanted {n} bytes, got {len(buf)}")
    return buf


def load_idx(images_path, labels_path, num_classes: int = 10) -> LabeledSet:
    """Load an IDX image/label pair into a LabeledSet.

    Pixels are divided by 255 so features land in [0, 1]. Labels must fall
    in {0..num_classes-1}; anything else is a structural error.
    """
    images_path, labels_path = str(images_path), str(labels_path)
    with open(labels_path, "rb") as fh:
        magic, n_labels = struct.unpack(">II", _read_exact(fh, 8, labels_path))
        if magic != IDX_LABELS_MAGIC:
            raise IdxFormatError(
                f"{labels_path}: bad magic 0x{magic:08X}, expected 0x{IDX_LABELS_MAGIC:08X}"
            )
        labels = np.frombuffer(_read_exact(fh, n_labels, labels_path), dtype=np.uint8)

    with open(images_path, "rb") as fh:
        magic, n_images, rows, cols = struct.unpack(">IIII", _read_exact(fh, 16, images_path))
        if magic != IDX_IMAGES_MAGIC:
            raise IdxFormatError(
                f"{images_path}: bad magic 0x{magic:08X}, expected 0x{IDX_IMAGES_MAGIC:08X}"
            )
        if n_images != n_labels:
            raise StructuralError(
                f"count mismatch: {n_images} images vs {n_labels} labels"
            )
        raw = _read_exact(fh, n_images * rows * cols, images_path)
        pixels = np.frombuffer(raw, dtype=np.uint8).reshape(n_images, rows * cols)

    if labels.size and labels.max() >= num_classes:
        raise StructuralError(
            f"{labels_path}: label {int(labels.max())} outside {{0..{num_classes - 1}}}"
        )
    return LabeledSet(pixels.astype(float) / 255.0, labels.astype(np.int64), num_classes)


def save_idx(dataset: LabeledSet, images_path, labels_path) -> None:
    """Write a LabeledSet as an IDX pair (features quantized to uint8).

    Features are clipped to [0, 1] and rounded to the nearest /255 level,
    so a save/load round trip agrees to within the 1/255 quantization.
    Square feature counts are written as square images, everything else as
    1 x n_x rows.
    """
    n, n_x = dataset.inputs.shape
    side = int(round(n_x**0.5))
    rows, cols = (side, side) if side * side == n_x else (1, n_x)
    pixels = np.rint(np.clip(dataset.inputs, 0.0, 1.0) * 255.0).astype(np.uint8)

    with open(str(labels_path), "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, n))
        fh.write(dataset.labels.astype(np.uint8).tobytes())
    with open(str(images_path), "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols))
        fh.write(pixels.tobytes())


# ---------------------------------------------------------------------------
# Gaussian blobs
# ---------------------------------------------------------------------------


def simplex_means(num_classes: int, dim: int, separation: float) -> np.ndarray:
    """Class means with all pairwise distances equal to ``separation``.

    Uses the regular-simplex construction (mutual dot -1/(M-1) between unit
    vectors), which needs dim >= M-1 whenever separation > 0.
    """
    means = np.zeros((num_classes, dim))
    if separation == 0.0 or num_classes == 1:
        return means
    if dim < num_classes - 1:
        raise StructuralError(
            f"cannot place {num_classes} equidistant means in {dim} dimensions"
        )
    verts = np.zeros((num_classes, num_classes - 1))
    for i in range(num_classes - 1):
        verts[i, i] = np.sqrt(1.0 - np.dot(verts[i, :i], verts[i, :i]))
        for k in range(i + 1, num_classes):
            verts[k, i] = (-1.0 / (num_classes - 1) - np.dot(verts[k, :i], verts[i, :i])) / verts[i, i]
    # unit circumradius gives side sqrt(2 + 2/(M-1)); rescale to target side
    side = np.sqrt(2.0 + 2.0 / (num_classes - 1))
    means[:, : num_classes - 1] = verts * (separation / side)
    return means


def make_blobs(
    num_classes: int, per_class: int, dim: int, separation: float, seed: int
) -> LabeledSet:
    """Isotropic unit-variance Gaussian clouds, one per class.

    Class means sit on a regular simplex with pairwise distance
    ``separation``. Deterministic under ``seed`` (PCG64 stream).
    """
    if num_classes < 2:
        raise StructuralError("need at least 2 classes")
    if per_class < 1:
        raise StructuralError("need at least 1 item per class")
    if separation < 0:
        raise StructuralError("separation must be >= 0")
    means = simplex_means(num_classes, dim, separation)
    rng = make_rng(seed)
    inputs = np.empty((num_classes * per_class, dim))
    labels = np.empty(num_classes * per_class, dtype=np.int64)
    for c in range(num_classes):
        block = slice(c * per_class, (c + 1) * per_class)
        inputs[block] = means[c] + rng.standard_normal((per_class, dim))
        labels[block] = c
    return LabeledSet(inputs, labels, num_classes)


# ---------------------------------------------------------------------------
# Sequences
# ---------------------------------------------------------------------------


def _erase_rectangle(x: np.ndarray, fraction: float, rng: np.random.Generator) -> np.ndarray:
    """Zero a random axis-aligned rectangle covering ~fraction of features."""
    out = x.copy()
    n_x = x.size
    side = int(round(n_x**0.5))
    if side * side == n_x:
        img = out.reshape(side, side)
        h = max(1, int(round(side * np.sqrt(fraction))))
        w = max(1, int(round(side * np.sqrt(fraction))))
        h, w = min(h, side), min(w, side)
        top = int(rng.integers(0, side - h + 1))
        left = int(rng.integers(0, side - w + 1))
        img[top : top + h, left : left + w] = 0.0
        return img.reshape(-1)
    span = max(1, int(round(n_x * fraction)))
    span = min(span, n_x)
    start = int(rng.integers(0, n_x - span + 1))
    out[start : start + span] = 0.0
    return out


def build_sequence(
    source: LabeledSet,
    class_id: int,
    length: int,
    corruption: tuple[str, float] | None = None,
    seed: int = 0,
) -> InputSequence:
    """Sample ``length`` items of one class, without replacement.

    ``corruption`` is None, ("noise", sigma) for additive Gaussian noise,
    or ("erase", fraction) for rectangular zero-erasure; it applies to
    every element after sampling and is recorded in the provenance tags.
    """
    candidates = np.flatnonzero(source.labels == class_id)
    if candidates.size < length:
        raise CapacityError(
            f"class {class_id} has {candidates.size} items, need {length}",
            available=int(candidates.size),
            requested=length,
        )
    rng = make_rng(seed)
    chosen = rng.choice(candidates, size=length, replace=False)
    inputs = source.inputs[chosen].copy()

    if corruption is None:
        tags = tuple(Provenance("original") for _ in range(length))
    else:
        kind, magnitude = corruption
        if kind == "noise":
            inputs = inputs + magnitude * rng.standard_normal(inputs.shape)
        elif kind == "erase":
            for i in range(length):
                inputs[i] = _erase_rectangle(inputs[i], magnitude, rng)
        else:
            raise StructuralError(f"unknown corruption kind {kind!r}")
        tags = tuple(Provenance(kind, float(magnitude)) for _ in range(length))
    return InputSequence(inputs, int(class_id), tags)


def corrupt_element(
    sequence: InputSequence, index: int, corruption: tuple[str, float], seed: int
) -> InputSequence:
    """Copy of a sequence with a single element corrupted.

    Used to stage the "one confident but wrong frame" scenario while the
    rest of the sequence stays clean.
    """
    if not (0 <= index < len(sequence)):
        raise StructuralError(f"frame {index} out of range for length {len(sequence)}")
    kind, magnitude = corruption
    rng = make_rng(seed)
    inputs = sequence.inputs.copy()
    if kind == "noise":
        inputs[index] = inputs[index] + magnitude * rng.standard_normal(inputs[index].shape)
    elif kind == "erase":
        inputs[index] = _erase_rectangle(inputs[index], magnitude, rng)
    else:
        raise StructuralError(f"unknown corruption kind {kind!r}")
    tags = list(sequence.provenance)
    tags[index] = Provenance(kind, float(magnitude))
    return InputSequence(inputs, sequence.true_class, tuple(tags))


# ---------------------------------------------------------------------------
# Synthetic glyph images (offline stand-in for digit-style data)
# ---------------------------------------------------------------------------

_GRID_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _pixel_grid(size: int):
    if size not in _GRID_CACHE:
        axis = (np.arange(size) + 0.5) / size * 2.0 - 1.0
        gy, gx = np.meshgrid(axis, axis, indexing="ij")
        _GRID_CACHE[size] = (gx, gy)
    return _GRID_CACHE[size]


def _stroke_segment(img, p0, p1, thickness, size):
    gx, gy = _pixel_grid(size)
    p0 = np.asarray(p0, dtype=float)
    d = np.asarray(p1, dtype=float) - p0
    denom = float(d @ d)
    if denom == 0.0:
        dist = np.hypot(gx - p0[0], gy - p0[1])
    else:
        t = np.clip(((gx - p0[0]) * d[0] + (gy - p0[1]) * d[1]) / denom, 0.0, 1.0)
        dist = np.hypot(gx - (p0[0] + t * d[0]), gy - (p0[1] + t * d[1]))
    np.maximum(img, np.clip(1.6 - dist / thickness, 0.0, 1.0), out=img)


def _stroke_ring(img, center, radius, thickness, size, arc=None):
    gx, gy = _pixel_grid(size)
    dx, dy = gx - center[0], gy - center[1]
    dist = np.abs(np.hypot(dx, dy) - radius)
    mask = np.clip(1.6 - dist / thickness, 0.0, 1.0)
    if arc is not None:
        lo, hi = arc
        ang = np.arctan2(dy, dx)
        inside = (ang >= lo) & (ang <= hi) if lo <= hi else (ang >= lo) | (ang <= hi)
        mask = mask * inside
    np.maximum(img, mask, out=img)


# Control points live in [-1, 1]^2 before the per-sample affine jitter.
_DIGIT_MOTIFS = {
    0: [("ring", (0.0, 0.0), 0.55, None)],
    1: [("seg", (0.05, -0.65), (0.0, 0.65))],
    2: [("ring", (0.0, -0.32), 0.32, (-np.pi, 0.2)),
        ("seg", (0.28, -0.2), (-0.35, 0.6)),
        ("seg", (-0.35, 0.6), (0.4, 0.6))],
    3: [("ring", (0.0, -0.3), 0.3, (-2.5, 1.2)),
        ("ring", (0.0, 0.3), 0.3, (-1.2, 2.5))],
    4: [("seg", (0.2, -0.65), (-0.4, 0.15)), ("seg", (-0.4, 0.15), (0.42, 0.15)),
        ("seg", (0.22, -0.2), (0.22, 0.65))],
    5: [("seg", (0.35, -0.6), (-0.3, -0.6)), ("seg", (-0.3, -0.6), (-0.3, -0.05)),
        ("ring", (0.0, 0.25), 0.36, (-2.2, 2.2))],
    6: [("ring", (0.0, 0.25), 0.36, None), ("seg", (-0.3, 0.1), (0.05, -0.65))],
    7: [("seg", (-0.35, -0.6), (0.38, -0.6)), ("seg", (0.38, -0.6), (-0.1, 0.65))],
    8: [("ring", (0.0, -0.3), 0.28, None), ("ring", (0.0, 0.32), 0.33, None)],
    9: [("ring", (0.0, -0.25), 0.36, None), ("seg", (0.3, -0.1), (-0.05, 0.65))],
}

# A disjoint visual family (outlined shapes and textures) used as the
# domain-shifted outlier set; stroke statistics stay comparable.
_SHAPE_MOTIFS = {
    0: [("seg", (-0.5, -0.5), (0.5, -0.5)), ("seg", (0.5, -0.5), (0.5, 0.5)),
        ("seg", (0.5, 0.5), (-0.5, 0.5)), ("seg", (-0.5, 0.5), (-0.5, -0.5))],
    1: [("seg", (0.0, -0.6), (0.55, 0.5)), ("seg", (0.55, 0.5), (-0.55, 0.5)),
        ("seg", (-0.55, 0.5), (0.0, -0.6))],
    2: [("seg", (-0.55, -0.55), (0.55, 0.55)), ("seg", (-0.55, 0.55), (0.55, -0.55))],
    3: [("seg", (-0.6, -0.35), (0.6, -0.35)), ("seg", (-0.6, 0.0), (0.6, 0.0)),
        ("seg", (-0.6, 0.35), (0.6, 0.35))],
    4: [("seg", (-0.35, -0.6), (-0.35, 0.6)), ("seg", (0.0, -0.6), (0.0, 0.6)),
        ("seg", (0.35, -0.6), (0.35, 0.6))],
    5: [("seg", (0.0, -0.62), (0.62, 0.0)), ("seg", (0.62, 0.0), (0.0, 0.62)),
        ("seg", (0.0, 0.62), (-0.62, 0.0)), ("seg", (-0.62, 0.0), (0.0, -0.62))],
    6: [("seg", (-0.6, 0.45), (-0.2, -0.45)), ("seg", (-0.2, -0.45), (0.2, 0.45)),
        ("seg", (0.2, 0.45), (0.6, -0.45))],
    7: [("ring", (-0.3, -0.3), 0.22, None), ("ring", (0.3, -0.3), 0.22, None),
        ("ring", (0.0, 0.35), 0.22, None)],
    8: [("seg", (-0.55, -0.2), (0.55, -0.2)), ("seg", (0.0, -0.65), (0.0, 0.65)),
        ("seg", (-0.55, 0.2), (0.55, 0.2))],
    9: [("seg", (-0.5, -0.5), (0.5, -0.5)), ("seg", (0.5, -0.5), (-0.5, 0.0)),
        ("seg", (-0.5, 0.0), (0.5, 0.5)), ("seg", (0.5, 0.5), (-0.5, 0.5))],
}

GLYPH_FAMILIES = {"digits": _DIGIT_MOTIFS, "shapes": _SHAPE_MOTIFS}


def _render_glyph(motifs, rng: np.random.Generator, size: int) -> np.ndarray:
    angle = rng.uniform(-0.55, 0.55)
    scale = rng.uniform(0.6, 1.1)
    shift = rng.uniform(-0.22, 0.22, size=2)
    shear = rng.uniform(-0.3, 0.3)
    cos_a, sin_a = np.cos(angle), np.sin(angle)
    rot = np.array([[cos_a, -sin_a], [sin_a, cos_a]]) @ np.array([[1.0, shear], [0.0, 1.0]])

    def tf(p):
        return scale * (rot @ np.asarray(p, dtype=float)) + shift

    thickness = rng.uniform(0.05, 0.12)
    img = np.zeros((size, size))
    for prim in motifs:
        if prim[0] == "seg":
            _stroke_segment(img, tf(prim[1]), tf(prim[2]), thickness, size)
        else:
            _, center, radius, arc = prim
            if arc is not None:
                arc = (arc[0] + angle, arc[1] + angle)
            _stroke_ring(img, tf(center), scale * radius, thickness, size, arc)
    img *= rng.uniform(0.55, 1.0)
    img += np.abs(rng.standard_normal((size, size))) * rng.uniform(0.04, 0.14)
    return np.clip(img, 0.0, 1.0)


def make_glyphs(
    count: int,
    seed: int,
    num_classes: int = 10,
    image_size: int = 28,
    family: str = "digits",
    ambiguity: float = 0.12,
) -> LabeledSet:
    """Deterministic synthetic glyph images in MNIST layout.

    ``family="digits"`` draws ten digit-like stroke motifs with random
    affine jitter and noise; ``family="shapes"`` draws a disjoint outline
    family suitable as an out-of-distribution set. Labels cycle through
    the classes so every prefix is nearly balanced.

    ``ambiguity`` is the rate at which an item is drawn as its partner
    class's motif while keeping its own label: irreducible look-alike
    confusions, the kind handwritten digits have. The partner map pairs
    class c with (c + num_classes/2) mod num_classes.
    """
    if family not in GLYPH_FAMILIES:
        raise StructuralError(f"unknown glyph family {family!r}")
    if not (0.0 <= ambiguity < 0.5):
        raise StructuralError("ambiguity must lie in [0, 0.5)")
    motifs = GLYPH_FAMILIES[family]
    rng = make_rng(seed)
    inputs = np.empty((count, image_size * image_size))
    labels = np.empty(count, dtype=np.int64)
    half = max(1, num_classes // 2)
    for i in range(count):
        cls = i % num_classes
        labels[i] = cls
        drawn = cls
        if ambiguity > 0.0 and rng.uniform() < ambiguity:
            drawn = (cls + half) % num_classes
        inputs[i] = _render_glyph(motifs[drawn % len(motifs)], rng, image_size).reshape(-1)
    return LabeledSet(inputs, labels, num_classes)
