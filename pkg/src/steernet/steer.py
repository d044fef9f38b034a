"""Realize real convolution kernels from complex expansion coefficients.

A learned filter is ``Re sum_q w_q * psi_q`` over the circular-harmonic atoms.
Rotating it to orientation ``theta_l = 2*pi*l / Lambda`` multiplies each
coefficient by ``exp(-i*k_q*theta_l)``, so a whole bank of rotated kernels is
synthesized from one weight tensor and a precomputed phase table.  Group
kernels carry an extra orientation coordinate: the kernel applied between
input orientation ``phi`` and output orientation ``theta`` uses the weight
slice at index ``theta - phi`` (cyclically) together with the phase for
``phi``.

Coefficients are stored as two real planes (re, im); the imaginary plane of a
DC atom is structurally zero and receives zero gradient, so it never trains
away from zero.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .harmonics import BasisSet

__all__ = [
    "PhaseTable",
    "SteerableWeights",
    "FilterBank",
    "phase_table",
    "synthesize_input_bank",
    "synthesize_group_bank",
    "synthesis_backward",
]


@dataclass(frozen=True)
class PhaseTable:
    """Steering phases ``entries[l, q] = exp(-i * k_q * 2*pi*l / Lambda)``."""

    lambda_count: int
    entries: np.ndarray  # complex, [Lambda, Q]


@dataclass
class SteerableWeights:
    """Complex expansion coefficients of one layer, stored as real planes.

    ``kind`` is "input" (planes shaped [C_out, C_in, Q]) or "group" (planes
    shaped [C_out, C_in, Lambda, Q]; the third axis is the kernel's own
    orientation coordinate).
    """

    kind: str
    re: np.ndarray
    im: np.ndarray
    basis_key: tuple

    def __post_init__(self):
        if self.kind not in ("input", "group"):
            raise ConfigError(f"unknown weight kind {self.kind!r}")
        if self.re.shape != self.im.shape:
            raise ConfigError(
                f"re/im plane shapes differ: {self.re.shape} vs {self.im.shape}"
            )
        want = 3 if self.kind == "input" else 4
        if self.re.ndim != want:
            raise ConfigError(
                f"{self.kind} weights must have {want} axes, got {self.re.ndim}"
            )


@dataclass(frozen=True)
class FilterBank:
    """Realized real kernels.

    input: ``kernels[l, c_out, c_in, y, x]``.
    group: ``kernels[l_out, c_out, l_in, c_in, y, x]``.
    """

    kind: str
    kernels: np.ndarray


def phase_table(lambda_count: int, basis: BasisSet) -> PhaseTable:
    """Phase factors for all orientations and atoms of a basis."""
    if lambda_count < 1:
        raise ConfigError(f"lambda_count must be >= 1, got {lambda_count}")
    ks = basis.frequencies
    lams = np.arange(lambda_count)
    entries = np.exp(-2j * np.pi * np.outer(lams, ks) / lambda_count)
    return PhaseTable(lambda_count=lambda_count, entries=entries)


def _steered_planes(basis: BasisSet, phases: PhaseTable) -> tuple[np.ndarray, np.ndarray]:
    """Per-orientation real atom planes.

    Returns (re, im_neg), each [Lambda, Q, size*size], such that for a complex
    coefficient w = a + i*b the synthesized kernel pixel vector at orientation
    l is ``a @ re[l] + b @ im_neg[l]``.
    """
    steered = phases.entries[:, :, None, None] * basis.atoms[None, :, :, :]
    lam, q = phases.entries.shape
    p = basis.size * basis.size
    return (
        np.ascontiguousarray(steered.real.reshape(lam, q, p)),
        np.ascontiguousarray(-steered.imag.reshape(lam, q, p)),
    )


def _check_basis(w: SteerableWeights, basis: BasisSet, phases: PhaseTable) -> None:
    if w.basis_key != basis.key():
        raise ConfigError(
            f"weights were created for basis {w.basis_key}, got {basis.key()}"
        )
    if w.re.shape[-1] != basis.num_atoms:
        raise ConfigError(
            f"weights carry {w.re.shape[-1]} atoms, basis has {basis.num_atoms}"
        )
    if w.kind == "group" and w.re.shape[2] != phases.lambda_count:
        raise ConfigError(
            f"group weights have {w.re.shape[2]} orientation slices, "
            f"phase table has {phases.lambda_count}"
        )


def synthesize_input_bank(
    w: SteerableWeights, basis: BasisSet, phases: PhaseTable
) -> FilterBank:
    """Kernels for the image-to-group layer: one stack per orientation.

    ``kernels[l, co, ci] = Re sum_q w[co, ci, q] * phases[l, q] * atoms[q]``.
    """
    if w.kind != "input":
        raise ConfigError(f"expected input weights, got {w.kind!r}")
    _check_basis(w, basis, phases)
    a_re, a_im = _steered_planes(basis, phases)
    co, ci, q = w.re.shape
    s = basis.size
    w2_re = w.re.reshape(co * ci, q)
    w2_im = w.im.reshape(co * ci, q)
    # [Lambda, co*ci, s*s]
    flat = np.matmul(w2_re[None, :, :], a_re) + np.matmul(w2_im[None, :, :], a_im)
    kernels = flat.reshape(phases.lambda_count, co, ci, s, s)
    return FilterBank(kind="input", kernels=kernels)


def _delta_index(lam: int) -> tuple[np.ndarray, np.ndarray]:
    """(l_out - l_in) mod Lambda and l_in, both [Lambda, Lambda]."""
    lo = np.arange(lam)[:, None]
    li = np.arange(lam)[None, :]
    return (lo - li) % lam, np.broadcast_to(li, (lam, lam))


def synthesize_group_bank(
    w: SteerableWeights, basis: BasisSet, phases: PhaseTable
) -> FilterBank:
    """Kernels for group-convolutional layers.

    ``kernels[lo, co, li, ci] =
    Re sum_q w[co, ci, (lo - li) mod Lambda, q] * phases[li, q] * atoms[q]``.
    """
    if w.kind != "group":
        raise ConfigError(f"expected group weights, got {w.kind!r}")
    _check_basis(w, basis, phases)
    a_re, a_im = _steered_planes(basis, phases)
    co, ci, lam, q = w.re.shape
    s = basis.size
    # T[d, li, co*ci, s*s]: kernel for weight-slice d realized at input
    # orientation li.
    w3_re = np.ascontiguousarray(w.re.transpose(2, 0, 1, 3).reshape(lam, co * ci, q))
    w3_im = np.ascontiguousarray(w.im.transpose(2, 0, 1, 3).reshape(lam, co * ci, q))
    t = np.matmul(w3_re[:, None, :, :], a_re[None, :, :, :]) + np.matmul(
        w3_im[:, None, :, :], a_im[None, :, :, :]
    )
    d_idx, li_idx = _delta_index(lam)
    gathered = t[d_idx, li_idx]  # [lo, li, co*ci, s*s]
    kernels = gathered.reshape(lam, lam, co, ci, s, s).transpose(0, 2, 1, 3, 4, 5)
    return FilterBank(kind="group", kernels=np.ascontiguousarray(kernels))


def synthesis_backward(
    grad_kernels: np.ndarray, basis: BasisSet, phases: PhaseTable
) -> tuple[np.ndarray, np.ndarray]:
    """Exact adjoint of bank synthesis.

    Accepts the upstream gradient in the corresponding bank layout (5 axes
    for an input bank, 6 for a group bank) and returns gradients for the
    (re, im) coefficient planes.  Each complex coefficient is treated as two
    independent real parameters.
    """
    a_re, a_im = _steered_planes(basis, phases)
    lam = phases.lambda_count
    s = basis.size
    if grad_kernels.ndim == 5:
        l, co, ci, _, _ = grad_kernels.shape
        if l != lam:
            raise ConfigError(f"bank has {l} orientations, phase table {lam}")
        g = grad_kernels.reshape(lam, co * ci, s * s)
        grad_re = np.matmul(g, a_re.transpose(0, 2, 1)).sum(axis=0)
        grad_im = np.matmul(g, a_im.transpose(0, 2, 1)).sum(axis=0)
        return grad_re.reshape(co, ci, -1), grad_im.reshape(co, ci, -1)
    if grad_kernels.ndim == 6:
        lo, co, li, ci, _, _ = grad_kernels.shape
        if lo != lam or li != lam:
            raise ConfigError(
                f"bank has {lo}x{li} orientations, phase table {lam}"
            )
        g = grad_kernels.transpose(0, 2, 1, 3, 4, 5).reshape(lam, lam, co * ci, s * s)
        # For fixed li the map lo -> d = (lo - li) mod Lambda is a bijection,
        # so the adjoint is a gather: grad_T[d, li] = g[(d + li) mod Lambda, li].
        d = np.arange(lam)[:, None]
        li_idx = np.broadcast_to(np.arange(lam)[None, :], (lam, lam))
        grad_t = g[(d + li_idx) % lam, li_idx]  # [d, li, co*ci, s*s]
        grad_re = np.matmul(grad_t, a_re[None, :, :, :].transpose(0, 1, 3, 2)).sum(axis=1)
        grad_im = np.matmul(grad_t, a_im[None, :, :, :].transpose(0, 1, 3, 2)).sum(axis=1)
        q = basis.num_atoms
        grad_re = grad_re.reshape(lam, co, ci, q).transpose(1, 2, 0, 3)
        grad_im = grad_im.reshape(lam, co, ci, q).transpose(1, 2, 0, 3)
        return np.ascontiguousarray(grad_re), np.ascontiguousarray(grad_im)
    raise ConfigError(
        f"grad_kernels must have 5 or 6 axes, got {grad_kernels.ndim}"
    )
