"""Circular-harmonic atomic filter system sampled on a square pixel grid.

Atoms are complex filters ``tau_j(r) * exp(i*k*phi)`` with Gaussian radial
profiles ``tau_j(r) = exp(-(r - j)^2 / (2 sigma^2))``.  Rotating an atom by an
angle ``theta`` multiplies it by ``exp(-i*k*theta)``, which is what makes
kernels built from these atoms steerable by pure phase manipulation.

Grid convention: pixel (row, col) has math coordinates ``x = col - c`` and
``y = c - row`` (y axis points up), with ``c = (size - 1) / 2``.  ``phi`` is
``atan2(y, x)``.  Under this convention ``numpy.rot90`` is a counterclockwise
rotation by 90 degrees, and the sampled atoms satisfy the steering identity
exactly on quarter turns because the grid maps onto itself.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BasisError, ConfigError

__all__ = [
    "KernelGrid",
    "AtomSpec",
    "BasisSet",
    "build_grid",
    "frequency_cutoff",
    "sample_atom",
    "normalize_atom",
    "build_basis",
    "dump_basis_csv",
    "dump_basis_pgm",
]

# L2 norm targets after normalization: DC atoms are purely real and get unit
# norm; atoms with k > 0 get sqrt(2) so that their real and imaginary parts
# each carry roughly unit energy.
DC_NORM = 1.0
NON_DC_NORM = math.sqrt(2.0)


@dataclass(frozen=True)
class KernelGrid:
    """Polar coordinates of a centered square pixel grid.

    Attributes
    ----------
    size : int
        Odd number of pixels per side.
    radius : ndarray, shape (size, size)
        Distance of each pixel center from the grid center, in pixels.
    angle : ndarray, shape (size, size)
        ``atan2`` angle of each pixel, 0 along +x, counterclockwise.
    mask : ndarray of bool, shape (size, size)
        True inside the disk ``r <= (size - 1) / 2 + 0.5``.  The disk is
        invariant under quarter-turn grid rotations, unlike the full square.
    """

    size: int
    radius: np.ndarray
    angle: np.ndarray
    mask: np.ndarray


@dataclass(frozen=True)
class AtomSpec:
    """Index pair of one atom: radial shell ``j`` and angular frequency ``k``."""

    j: int
    k: int


@dataclass(frozen=True)
class BasisSet:
    """A complete sampled and normalized circular-harmonic system.

    Attributes
    ----------
    grid : KernelGrid
    sigma : float
        Radial Gaussian width in pixels.
    atoms : ndarray, complex, shape (Q, size, size)
        Normalized atoms, zero outside the disk mask.
    specs : tuple of AtomSpec, length Q
        Sorted by (j, k).
    real_dof : int
        Number of real degrees of freedom: one per DC atom plus two per
        non-DC atom (real and imaginary planes).
    atom_norms : ndarray, shape (Q,)
        Complex L2 norms after normalization (1 for k = 0, sqrt(2) else).
    part_norms : ndarray, shape (Q, 2)
        L2 norms of the real and imaginary parts of each normalized atom.
        On the sampled grid these deviate slightly from 1 for even k > 0;
        initialization uses them to weight per-plane variances.
    """

    grid: KernelGrid
    sigma: float
    atoms: np.ndarray
    specs: tuple[AtomSpec, ...]
    real_dof: int
    atom_norms: np.ndarray
    part_norms: np.ndarray
    k_max: int | None = field(default=None)

    @property
    def size(self) -> int:
        return self.grid.size

    @property
    def num_atoms(self) -> int:
        return len(self.specs)

    @property
    def frequencies(self) -> np.ndarray:
        """Angular frequency k of every atom, shape (Q,)."""
        return np.array([s.k for s in self.specs], dtype=np.int64)

    def key(self) -> tuple:
        """Hashable identity of the basis parameters, used to detect mismatches."""
        return (self.size, float(self.sigma), self.k_max)


def build_grid(size: int) -> KernelGrid:
    """Build the centered polar coordinate grid for a ``size x size`` kernel.

    Raises
    ------
    ConfigError
        If ``size`` is even or smaller than 3.
    """
    if size < 3 or size % 2 == 0:
        raise ConfigError(f"kernel size must be odd and >= 3, got {size}")
    c = (size - 1) / 2.0
    cols, rows = np.meshgrid(np.arange(size), np.arange(size), indexing="xy")
    dx = cols - c
    dy = c - rows  # y axis points up in math convention
    radius = np.hypot(dx, dy)
    angle = np.arctan2(dy, dx)
    mask = radius <= c + 0.5
    return KernelGrid(size=size, radius=radius, angle=angle, mask=mask)


def frequency_cutoff(j: int, k_max: int | None = None) -> int:
    """Highest usable angular frequency for radial shell ``j``.

    The ring at radius ``j`` holds on the order of ``2*pi*j`` pixels, so
    frequencies are capped near the ring Nyquist limit: ``floor(pi*j) + 1``,
    optionally clipped to ``k_max``.  Shell 0 only supports k = 0.
    """
    if j < 0:
        raise ConfigError(f"radial index must be >= 0, got {j}")
    if j == 0:
        return 0
    cutoff = int(math.floor(math.pi * j)) + 1
    if k_max is not None:
        cutoff = min(cutoff, k_max)
    return cutoff


def sample_atom(spec: AtomSpec, grid: KernelGrid, sigma: float) -> np.ndarray:
    """Sample one un-normalized atom on the grid.

    Returns the pointwise product ``tau_j(r) * exp(i*k*phi)`` inside the disk
    mask and zero outside.  For k != 0 the center pixel is set to zero: the
    continuous harmonic vanishes at the origin (its phase is undefined there)
    and a nonzero center sample would break the exact quarter-turn steering
    identity on the grid.
    """
    if sigma <= 0:
        raise ConfigError(f"sigma must be positive, got {sigma}")
    tau = np.exp(-((grid.radius - spec.j) ** 2) / (2.0 * sigma**2))
    atom = tau * np.exp(1j * spec.k * grid.angle)
    atom = np.where(grid.mask, atom, 0.0 + 0.0j)
    if spec.k != 0:
        atom[grid.radius == 0.0] = 0.0
    else:
        atom = atom.real.astype(np.complex128)
    return atom


def normalize_atom(atom: np.ndarray, k: int) -> np.ndarray:
    """Scale an atom so its complex L2 norm hits the target for its frequency.

    Real and imaginary parts are scaled by the same factor, which preserves
    steerability; normalizing the parts independently would not.

    Raises
    ------
    BasisError
        If the atom is identically zero.
    """
    norm = float(np.sqrt(np.sum(np.abs(atom) ** 2)))
    if norm == 0.0:
        raise BasisError(f"cannot normalize an identically zero atom (k={k})")
    target = DC_NORM if k == 0 else NON_DC_NORM
    return atom * (target / norm)


def build_basis(size: int, sigma: float = 0.5, k_max: int | None = None) -> BasisSet:
    """Construct the full normalized basis for a given kernel size.

    Shells run j = 0..(size-1)/2 and each shell carries frequencies
    k = 0..frequency_cutoff(j, k_max).  Atoms are sorted by (j, k).
    """
    grid = build_grid(size)
    j_max = (size - 1) // 2
    specs: list[AtomSpec] = []
    for j in range(j_max + 1):
        for k in range(frequency_cutoff(j, k_max) + 1):
            specs.append(AtomSpec(j=j, k=k))

    atoms = np.zeros((len(specs), size, size), dtype=np.complex128)
    for q, spec in enumerate(specs):
        raw = sample_atom(spec, grid, sigma)
        try:
            atoms[q] = normalize_atom(raw, spec.k)
        except BasisError as exc:
            raise BasisError(f"atom (j={spec.j}, k={spec.k}): {exc}") from exc

    n_dc = sum(1 for s in specs if s.k == 0)
    real_dof = n_dc + 2 * (len(specs) - n_dc)
    atom_norms = np.sqrt(np.sum(np.abs(atoms) ** 2, axis=(1, 2)))
    part_norms = np.stack(
        [
            np.sqrt(np.sum(atoms.real**2, axis=(1, 2))),
            np.sqrt(np.sum(atoms.imag**2, axis=(1, 2))),
        ],
        axis=1,
    )
    return BasisSet(
        grid=grid,
        sigma=sigma,
        atoms=atoms,
        specs=tuple(specs),
        real_dof=real_dof,
        atom_norms=atom_norms,
        part_norms=part_norms,
        k_max=k_max,
    )


def dump_basis_csv(basis: BasisSet, path: str | Path) -> None:
    """Write all atom samples as CSV rows (j, k, row, col, re, im)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["j", "k", "row", "col", "re", "im"])
        for q, spec in enumerate(basis.specs):
            atom = basis.atoms[q]
            for row in range(basis.size):
                for col in range(basis.size):
                    writer.writerow(
                        [
                            spec.j,
                            spec.k,
                            row,
                            col,
                            f"{atom[row, col].real:.12g}",
                            f"{atom[row, col].imag:.12g}",
                        ]
                    )


def dump_basis_pgm(basis: BasisSet, out_dir: str | Path) -> list[Path]:
    """Write one 8-bit binary PGM per atom part for visual inspection.

    Values are mapped symmetrically: the largest absolute sample of the part
    maps to 0/255 and zero maps to 127. Returns the written paths.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    for q, spec in enumerate(basis.specs):
        parts = [("re", basis.atoms[q].real)]
        if spec.k != 0:
            parts.append(("im", basis.atoms[q].imag))
        for tag, plane in parts:
            peak = float(np.max(np.abs(plane)))
            scale = 127.0 / peak if peak > 0 else 0.0
            img = np.clip(np.round(plane * scale + 127.0), 0, 255).astype(np.uint8)
            path = out_dir / f"atom_j{spec.j}_k{spec.k}_{tag}.pgm"
            with path.open("wb") as fh:
                fh.write(f"P5\n{basis.size} {basis.size}\n255\n".encode("ascii"))
                fh.write(img.tobytes())
            written.append(path)
    return written
