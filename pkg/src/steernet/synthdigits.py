"""Deterministic synthetic digit-like glyphs for fully offline training runs.

Ten stroke-based classes are rendered onto a square canvas with per-sample
jitter (shift, scale, stroke width, brightness, pixel noise).  Classes are
designed to stay mutually distinguishable under arbitrary rotation, so a
rotation-equivariant classifier can in principle solve the rotated task.
Glyph content sits inside a centered disk, which keeps rotated copies free of
border clipping.

The generator emits standard IDX file pairs, so synthetic and real digit
datasets flow through the identical ingestion path.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .data import save_idx

__all__ = ["NUM_CLASSES", "render_glyph", "make_digits", "write_digit_files"]

NUM_CLASSES = 10

# strokes in a unit frame (y axis up, glyph radius <= ~0.8):
#   ("seg", x1, y1, x2, y2)   line segment
#   ("ring", cx, cy, r)       circle outline
#   ("arc", cx, cy, r, a0, a1)  circular arc, angles in radians
#   ("disk", cx, cy, r)       filled disk
_GLYPHS = {
    0: [("ring", 0.0, 0.0, 0.62)],
    1: [("seg", 0.0, -0.7, 0.0, 0.7)],
    2: [("seg", -0.4, -0.65, -0.4, 0.65), ("seg", 0.4, -0.65, 0.4, 0.65)],
    3: [("seg", -0.65, 0.0, 0.65, 0.0), ("seg", 0.0, -0.65, 0.0, 0.65)],
    4: [("seg", -0.45, 0.7, -0.45, -0.55), ("seg", -0.45, -0.55, 0.55, -0.55)],
    5: [("seg", -0.6, 0.6, 0.6, 0.6), ("seg", 0.0, 0.6, 0.0, -0.65)],
    6: [("seg", -0.3, -0.7, -0.3, 0.7), ("disk", 0.38, 0.38, 0.26)],
    7: [("seg", -0.55, 0.6, 0.0, -0.6), ("seg", 0.55, 0.6, 0.0, -0.6)],
    8: [
        ("disk", 0.0, 0.55, 0.17),
        ("disk", -0.48, -0.28, 0.17),
        ("disk", 0.48, -0.28, 0.17),
    ],
    9: [("arc", 0.0, 0.0, 0.6, -2.2, 2.2), ("disk", 0.0, 0.0, 0.2)],
}


def _stroke_distance(stroke, px: np.ndarray, py: np.ndarray) -> np.ndarray:
    kind = stroke[0]
    if kind == "seg":
        _, x1, y1, x2, y2 = stroke
        dx, dy = x2 - x1, y2 - y1
        length2 = dx * dx + dy * dy
        t = np.clip(((px - x1) * dx + (py - y1) * dy) / length2, 0.0, 1.0)
        return np.hypot(px - (x1 + t * dx), py - (y1 + t * dy))
    if kind == "ring":
        _, cx, cy, r = stroke
        return np.abs(np.hypot(px - cx, py - cy) - r)
    if kind == "arc":
        _, cx, cy, r, a0, a1 = stroke
        ang = np.arctan2(py - cy, px - cx)
        inside = (ang >= a0) & (ang <= a1)
        d_ring = np.abs(np.hypot(px - cx, py - cy) - r)
        # distance to the arc endpoints where the angular window does not apply
        e0 = np.hypot(px - (cx + r * np.cos(a0)), py - (cy + r * np.sin(a0)))
        e1 = np.hypot(px - (cx + r * np.cos(a1)), py - (cy + r * np.sin(a1)))
        return np.where(inside, d_ring, np.minimum(e0, e1))
    if kind == "disk":
        _, cx, cy, r = stroke
        return np.maximum(np.hypot(px - cx, py - cy) - r, 0.0)
    raise ValueError(f"unknown stroke kind {kind!r}")


def render_glyph(
    cls: int,
    size: int,
    rng: np.random.Generator,
    jitter: bool = True,
) -> np.ndarray:
    """Render one glyph as a [size, size] float image in [0, 1]."""
    c = (size - 1) / 2.0
    radius = size / 2.0 - 2.0  # leave a border so rotations keep content
    rr, cc = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    if jitter:
        shift_x = rng.uniform(-0.1, 0.1)
        shift_y = rng.uniform(-0.1, 0.1)
        scl = rng.uniform(0.85, 1.05)
        width = rng.uniform(0.10, 0.14)
        brightness = rng.uniform(0.75, 1.0)
        noise = 0.02
    else:
        shift_x = shift_y = 0.0
        scl = 1.0
        width = 0.12
        brightness = 1.0
        noise = 0.0
    px = ((cc - c) / radius - shift_x) / scl
    py = ((c - rr) / radius - shift_y) / scl
    img = np.zeros((size, size))
    for stroke in _GLYPHS[cls]:
        d = _stroke_distance(stroke, px, py)
        img = np.maximum(img, np.exp(-((d / width) ** 2)))
    img *= brightness
    if noise:
        # noise restricted to the inner disk keeps rotated copies mass-stable
        disk = np.hypot(cc - c, c - rr) <= size / 2.0 - 1.0
        img = img + rng.normal(0.0, noise, size=img.shape) * disk
    return np.clip(img, 0.0, 1.0)


def make_digits(n: int, size: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Balanced shuffled dataset: images [N, 1, size, size], labels [N]."""
    rng = np.random.default_rng([seed, 77])
    labels = np.tile(np.arange(NUM_CLASSES), n // NUM_CLASSES + 1)[:n]
    rng.shuffle(labels)
    images = np.empty((n, 1, size, size), dtype=np.float32)
    for i, cls in enumerate(labels):
        images[i, 0] = render_glyph(int(cls), size, rng)
    return images, labels.astype(np.int64)


def write_digit_files(out_dir: str | Path, n: int, size: int, seed: int) -> dict:
    """Emit IDX pairs (train pool + test pool) plus a provenance sidecar."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    images, labels = make_digits(n, size, seed)
    test_images, test_labels = make_digits(max(n // 2, NUM_CLASSES), size, seed + 1)
    paths = {
        "train_images": out_dir / "train-images-idx3-ubyte",
        "train_labels": out_dir / "train-labels-idx1-ubyte",
        "test_images": out_dir / "test-images-idx3-ubyte",
        "test_labels": out_dir / "test-labels-idx1-ubyte",
    }
    save_idx(images, labels, paths["train_images"], paths["train_labels"])
    save_idx(test_images, test_labels, paths["test_images"], paths["test_labels"])
    provenance = {
        "generator": "steernet.synthdigits",
        "n_train_pool": int(n),
        "n_test_pool": int(max(n // 2, NUM_CLASSES)),
        "size": int(size),
        "seed": int(seed),
        "classes": NUM_CLASSES,
    }
    (out_dir / "provenance.json").write_text(json.dumps(provenance, indent=2, sort_keys=True))
    return {k: str(v) for k, v in paths.items()} | {"provenance": str(out_dir / "provenance.json")}
