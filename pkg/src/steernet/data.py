"""Dataset ingestion (IDX files), image rotation and rotated-digit synthesis.

Images are stored [N, 1, H, W] as floats in [0, 1], row 0 at the top.  All
rotation helpers use the math convention (y axis up), under which a positive
angle rotates the displayed image counterclockwise and ``numpy.rot90`` is the
exact quarter-turn.
"""
from __future__ import annotations

import gzip
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

__all__ = [
    "Dataset",
    "load_idx",
    "save_idx",
    "rotate_image",
    "rotate_batch",
    "make_rotmnist",
    "augment_batch",
]

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
_QUARTER_TOL = 1e-12

AUGMENT_POLICIES = ("none", "quarter_turns", "eighth_turns", "continuous")


@dataclass
class Dataset:
    images: np.ndarray  # [N, 1, H, W] float32 in [0, 1]
    labels: np.ndarray  # [N] int64
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.images.ndim != 4 or self.images.shape[0] != self.labels.shape[0]:
            raise DataError(
                f"images {self.images.shape} and labels {self.labels.shape} do not agree"
            )

    def __len__(self) -> int:
        return self.images.shape[0]


def _open_maybe_gzip(path: Path):
    with path.open("rb") as fh:
        head = fh.read(2)
    if head == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return path.open("rb")


def _read_exact(fh, n: int, path: Path, offset: int, what: str) -> bytes:
    blob = fh.read(n)
    if len(blob) != n:
        raise DataError(
            f"{path}: truncated while reading {what} at byte offset {offset} "
            f"(wanted {n} bytes, got {len(blob)})"
        )
    return blob


def load_idx(images_path: str | Path, labels_path: str | Path) -> Dataset:
    """Load an IDX image/label file pair (gzip-compressed accepted)."""
    images_path, labels_path = Path(images_path), Path(labels_path)
    for p in (images_path, labels_path):
        if not p.exists():
            raise DataError(f"{p}: file not found")

    with _open_maybe_gzip(images_path) as fh:
        header = _read_exact(fh, 16, images_path, 0, "image header")
        magic, count, rows, cols = struct.unpack(">IIII", header)
        if magic != IDX_IMAGES_MAGIC:
            raise DataError(
                f"{images_path}: bad magic 0x{magic:08x} at byte offset 0 "
                f"(expected 0x{IDX_IMAGES_MAGIC:08x})"
            )
        payload = _read_exact(fh, count * rows * cols, images_path, 16, "image payload")
    images = np.frombuffer(payload, dtype=np.uint8).reshape(count, 1, rows, cols)

    with _open_maybe_gzip(labels_path) as fh:
        header = _read_exact(fh, 8, labels_path, 0, "label header")
        magic, lcount = struct.unpack(">II", header)
        if magic != IDX_LABELS_MAGIC:
            raise DataError(
                f"{labels_path}: bad magic 0x{magic:08x} at byte offset 0 "
                f"(expected 0x{IDX_LABELS_MAGIC:08x})"
            )
        lpayload = _read_exact(fh, lcount, labels_path, 8, "label payload")
    labels = np.frombuffer(lpayload, dtype=np.uint8).astype(np.int64)

    if count != lcount:
        raise DataError(
            f"{images_path} holds {count} images but {labels_path} holds {lcount} labels"
        )
    return Dataset(
        images=(images.astype(np.float32) / 255.0),
        labels=labels,
        provenance={"images_file": str(images_path), "labels_file": str(labels_path)},
    )


def save_idx(images: np.ndarray, labels: np.ndarray, images_path, labels_path) -> None:
    """Write [N, 1, H, W] float images in [0, 1] as a standard IDX pair."""
    n, _, rows, cols = images.shape
    quant = np.clip(np.round(images * 255.0), 0, 255).astype(np.uint8)
    with Path(images_path).open("wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols))
        fh.write(quant.tobytes())
    with Path(labels_path).open("wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, n))
        fh.write(np.asarray(labels, dtype=np.uint8).tobytes())


# ---------------------------------------------------------------------------
# rotation


def rotate_image(img: np.ndarray, angle: float, interp: str = "bilinear") -> np.ndarray:
    """Rotate a square [H, W] image counterclockwise about its center.

    Quarter-turn multiples dispatch to the exact index permutation; other
    angles use bilinear interpolation with out-of-bounds samples read as 0.
    """
    if img.ndim != 2 or img.shape[0] != img.shape[1]:
        raise DataError(f"rotate_image expects a square 2-D image, got {img.shape}")
    if interp != "bilinear":
        raise DataError(f"unsupported interpolation {interp!r}")
    two_pi = 2.0 * np.pi
    frac = (angle % two_pi) / (np.pi / 2.0)
    nearest = round(frac)
    if abs(frac - nearest) < _QUARTER_TOL:
        return np.rot90(img, k=int(nearest) % 4).copy()

    h = img.shape[0]
    c = (h - 1) / 2.0
    rr, cc = np.meshgrid(np.arange(h), np.arange(h), indexing="ij")
    x = cc - c
    y = c - rr
    cos_a, sin_a = np.cos(angle), np.sin(angle)
    xs = cos_a * x + sin_a * y
    ys = -sin_a * x + cos_a * y
    col_s = xs + c
    row_s = c - ys
    r0 = np.floor(row_s).astype(np.int64)
    c0 = np.floor(col_s).astype(np.int64)
    fr = row_s - r0
    fc = col_s - c0

    def sample(ri, ci):
        inside = (ri >= 0) & (ri < h) & (ci >= 0) & (ci < h)
        vals = np.zeros(ri.shape, dtype=img.dtype)
        vals[inside] = img[ri[inside], ci[inside]]
        return vals

    out = (
        sample(r0, c0) * (1 - fr) * (1 - fc)
        + sample(r0, c0 + 1) * (1 - fr) * fc
        + sample(r0 + 1, c0) * fr * (1 - fc)
        + sample(r0 + 1, c0 + 1) * fr * fc
    )
    return out.astype(img.dtype)


def rotate_batch(images: np.ndarray, angles: np.ndarray) -> np.ndarray:
    """Rotate [N, C, H, W] images by per-sample angles."""
    out = np.empty_like(images)
    for i in range(images.shape[0]):
        for ch in range(images.shape[1]):
            out[i, ch] = rotate_image(images[i, ch], float(angles[i]))
    return out


# ---------------------------------------------------------------------------
# rotated dataset synthesis and augmentation


def make_rotmnist(
    src: Dataset, seed: int, n_train: int, n_val: int, n_test: int
) -> tuple[Dataset, Dataset, Dataset]:
    """Disjoint train/val/test splits, each image rotated once by an
    independent uniform angle in [0, 2*pi)."""
    total = n_train + n_val + n_test
    if total > len(src):
        raise DataError(f"requested {total} samples but source has {len(src)}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(src))
    bounds = [0, n_train, n_train + n_val, total]
    out = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        idx = perm[lo:hi]
        angles = rng.uniform(0.0, 2.0 * np.pi, size=idx.size)
        images = rotate_batch(src.images[idx], angles)
        out.append(
            Dataset(
                images=images,
                labels=src.labels[idx].copy(),
                provenance={
                    "source": src.provenance,
                    "seed": seed,
                    "indices": idx.tolist(),
                    "angles": angles.tolist(),
                },
            )
        )
    return tuple(out)


def augment_batch(images: np.ndarray, policy: str, rng: np.random.Generator) -> np.ndarray:
    """Per-sample random rotation according to the augmentation policy."""
    if policy not in AUGMENT_POLICIES:
        raise DataError(f"unknown augmentation policy {policy!r}")
    if policy == "none":
        return images
    n = images.shape[0]
    if policy == "quarter_turns":
        angles = rng.integers(0, 4, size=n) * (np.pi / 2.0)
    elif policy == "eighth_turns":
        angles = rng.integers(0, 8, size=n) * (np.pi / 4.0)
    else:
        angles = rng.uniform(0.0, 2.0 * np.pi, size=n)
    return rotate_batch(images, angles)


def write_provenance(path: str | Path, provenance: dict) -> None:
    Path(path).write_text(json.dumps(provenance, indent=2, sort_keys=True))
