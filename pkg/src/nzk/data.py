"""Datasets: teacher-student generation, CSV ingress/egress, and IDX images.

Synthetic inputs are uniform on the unit sphere (normalized standard
gaussians); targets come from a fixed linear teacher plus frozen gaussian
noise.  Image data enters through the big-endian IDX pair format, is
scaled to [0, 1], bilinearly downsampled to a small square, and flattened
row-major; two-class subsets get targets -1/+1.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataFormatError
from .rng import substream

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


@dataclass
class Dataset:
    inputs: np.ndarray
    targets: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        self.targets = np.atleast_1d(np.asarray(self.targets, dtype=float))
        if self.inputs.shape[0] != self.targets.shape[0] or self.inputs.shape[0] < 1:
            raise ConfigError("inputs and targets must agree and be non-empty")
        if not (np.all(np.isfinite(self.inputs)) and np.all(np.isfinite(self.targets))):
            raise ConfigError("dataset entries must be finite")

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def d(self) -> int:
        return self.inputs.shape[1]


@dataclass(frozen=True)
class TeacherSpec:
    """Target generator: y = <theta_star, x> + gaussian noise, drawn once."""

    theta_star: np.ndarray
    noise_sigma: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta_star", np.asarray(self.theta_star, dtype=float))
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")


def gen_teacher_student(d: int, n: int, teacher: TeacherSpec, seed: int) -> Dataset:
    """n unit-sphere points in R^d with teacher targets; bit-reproducible."""
    if d < 2 or n < 1:
        raise ConfigError(f"need d >= 2 and n >= 1, got d={d}, n={n}")
    if teacher.theta_star.shape != (d,):
        raise ConfigError("teacher dimension does not match d")
    rng = substream(seed, "data")
    x = rng.standard_normal((n, d))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    noise = rng.standard_normal(n)  # drawn even at sigma=0 to keep streams aligned
    y = x @ teacher.theta_star + teacher.noise_sigma * noise
    meta = {
        "source": "teacher_student",
        "d": d,
        "n": n,
        "normalization": "unit_sphere",
        "seed": seed,
        "noise_sigma": teacher.noise_sigma,
    }
    return Dataset(x, y, meta)


# ---------------------------------------------------------------------------
# CSV


def save_csv_dataset(path, dataset: Dataset):
    """Header x_0..x_{d-1},y; 17 significant digits so reload is exact."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(f"x_{i}" for i in range(dataset.d)) + ",y\n")
        for row, y in zip(dataset.inputs, dataset.targets):
            cells = [format(float(v), ".17g") for v in row] + [format(float(y), ".17g")]
            fh.write(",".join(cells) + "\n")


def load_csv_dataset(path) -> Dataset:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataFormatError("empty file", line=1)
    header = [c.strip() for c in lines[0].split(",")]
    d = len(header) - 1
    if d < 1 or header != [f"x_{i}" for i in range(d)] + ["y"]:
        raise DataFormatError(f"bad header {lines[0]!r}; expected x_0..x_{{d-1}},y", line=1)
    rows = []
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        cells = raw.split(",")
        if len(cells) != d + 1:
            raise DataFormatError(
                f"expected {d + 1} columns, found {len(cells)}", line=lineno
            )
        try:
            rows.append([float(c) for c in cells])
        except ValueError as err:
            raise DataFormatError(f"non-numeric cell: {err}", line=lineno) from None
    if not rows:
        raise DataFormatError("no data rows", line=2)
    arr = np.asarray(rows, dtype=float)
    return Dataset(arr[:, :d], arr[:, d], {"source": str(path), "d": d, "n": len(rows)})


# ---------------------------------------------------------------------------
# IDX images


def load_mnist_idx(images_path, labels_path, digits, max_per_class=None, target_side=8) -> Dataset:
    """Parse an IDX image/label pair, keep the requested digit classes,
    and produce flattened target_side x target_side inputs in [0, 1].

    Exactly two classes map to targets -1 (smaller digit) and +1 (larger);
    otherwise the raw label value is kept as the target.
    """
    images = _read_idx_images(images_path)
    labels = _read_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise DataFormatError(
            f"{images.shape[0]} images but {labels.shape[0]} labels"
        )
    digits = sorted(set(int(v) for v in digits))
    keep = np.isin(labels, digits)
    images, labels = images[keep], labels[keep]
    if max_per_class is not None:
        picks = []
        for dig in digits:
            (idx,) = np.nonzero(labels == dig)
            picks.append(idx[:max_per_class])
        order = np.sort(np.concatenate(picks))
        images, labels = images[order], labels[order]
    if images.shape[0] == 0:
        raise DataFormatError(f"no images left after filtering to digits {digits}")
    scaled = images.astype(float) / 255.0
    small = _resize_bilinear(scaled, target_side)
    flat = small.reshape(small.shape[0], -1)
    if len(digits) == 2:
        targets = np.where(labels == digits[0], -1.0, 1.0)
    else:
        targets = labels.astype(float)
    meta = {
        "source": str(images_path),
        "digits": digits,
        "d": flat.shape[1],
        "n": flat.shape[0],
        "target_encoding": "-1/+1" if len(digits) == 2 else "label",
        "target_side": target_side,
    }
    return Dataset(flat, targets, meta)


def _read_exact(fh, nbytes, path, what):
    data = fh.read(nbytes)
    if len(data) != nbytes:
        raise DataFormatError(
            f"{path}: truncated while reading {what}", offset=fh.tell() - len(data)
        )
    return data


def _read_idx_images(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = struct.unpack(">i", _read_exact(fh, 4, path, "magic"))[0]
        if magic != IDX_IMAGE_MAGIC:
            raise DataFormatError(
                f"{path}: bad image magic {magic:#010x}, expected {IDX_IMAGE_MAGIC:#010x}",
                offset=0,
            )
        count, rows, cols = struct.unpack(">iii", _read_exact(fh, 12, path, "dimensions"))
        if min(count, rows, cols) < 0:
            raise DataFormatError(f"{path}: negative dimension", offset=4)
        data = _read_exact(fh, count * rows * cols, path, "pixels")
        return np.frombuffer(data, dtype=np.uint8).reshape(count, rows, cols)


def _read_idx_labels(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = struct.unpack(">i", _read_exact(fh, 4, path, "magic"))[0]
        if magic != IDX_LABEL_MAGIC:
            raise DataFormatError(
                f"{path}: bad label magic {magic:#010x}, expected {IDX_LABEL_MAGIC:#010x}",
                offset=0,
            )
        count = struct.unpack(">i", _read_exact(fh, 4, path, "count"))[0]
        data = _read_exact(fh, count, path, "labels")
        return np.frombuffer(data, dtype=np.uint8)


def write_idx_files(images, labels, images_path, labels_path):
    """Inverse of the parser, for fixtures and exported subsets."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    count, rows, cols = images.shape
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">iiii", IDX_IMAGE_MAGIC, count, rows, cols))
        fh.write(images.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">ii", IDX_LABEL_MAGIC, labels.size))
        fh.write(labels.tobytes())


def _resize_bilinear(stack: np.ndarray, side: int) -> np.ndarray:
    """Pixel-center-aligned bilinear resize of a stack of square images."""
    src = stack.shape[-1]
    coords = (np.arange(side) + 0.5) * src / side - 0.5
    lo = np.clip(np.floor(coords).astype(int), 0, src - 1)
    hi = np.clip(lo + 1, 0, src - 1)
    w = np.clip(coords - lo, 0.0, 1.0)
    rows = stack[:, lo, :] * (1 - w)[None, :, None] + stack[:, hi, :] * w[None, :, None]
    out = rows[:, :, lo] * (1 - w)[None, None, :] + rows[:, :, hi] * w[None, None, :]
    return out


# ---------------------------------------------------------------------------
# procedural stand-in digits


def render_synthetic_digits(n_per_class: int, seed: int, side: int = 28):
    """Draw simple handwritten-style 0s (rings) and 1s (strokes) as uint8
    images with seeded jitter, for environments without the real archive.
    Returns (images, labels) ready for write_idx_files."""
    rng = substream(seed, "data", side)
    yy, xx = np.mgrid[0:side, 0:side].astype(float)
    images, labels = [], []
    for i in range(2 * n_per_class):
        label = i % 2
        cx = side / 2 + rng.uniform(-2, 2)
        cy = side / 2 + rng.uniform(-2, 2)
        img = np.zeros((side, side))
        if label == 0:
            rx = side * rng.uniform(0.22, 0.3)
            ry = side * rng.uniform(0.3, 0.38)
            r = np.sqrt(((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2)
            img = np.exp(-(((r - 1.0) / 0.18) ** 2))
        else:
            tilt = rng.uniform(-0.15, 0.15)
            width = side * rng.uniform(0.05, 0.09)
            dist = np.abs((xx - cx) - tilt * (yy - cy))
            img = np.exp(-((dist / width) ** 2))
            img[yy < side * 0.15] = 0.0
            img[yy > side * 0.85] = 0.0
        img += rng.uniform(0, 0.08, (side, side))
        images.append(np.clip(img * 255, 0, 255).astype(np.uint8))
        labels.append(label)
    return np.stack(images), np.asarray(labels, dtype=np.uint8)
