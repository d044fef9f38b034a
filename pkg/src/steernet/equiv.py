"""Executable equivariance certificates, fault injection and rotation sweeps.

A certificate compares the two paths around a layer's commutative square:
transform-then-apply versus apply-then-transform.  For quarter-turn angles on
the pixel grid both paths are index permutations of identical arithmetic, so
the certificates assert tight tolerances; for intermediate angles the
comparison is reported on a centered crop but not asserted (resampling noise
is inherent there).

Certificates also include a structural check per steerable layer: realized
kernels must vanish outside the disk mask, the property that keeps the
kernel footprint rotation-consistent.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import steer
from .engine.tensor import Tensor, default_dtype
from .errors import ConfigError
from .harmonics import BasisSet, build_grid, normalize_atom, sample_atom
from .layers import (
    Ctx,
    GroupBatchNorm,
    GroupFeatureMap,
    Model,
    SteerableGroup,
    SteerableInput,
    group_action_array,
    rotate_image_array,
)

__all__ = [
    "CertEntry",
    "EquivarianceReport",
    "certify_layer",
    "certify_network",
    "rotgen_curve",
    "disk_probe_images",
    "plant_fault",
    "unmasked_basis",
    "FAULT_KINDS",
]

FAULT_KINDS = ("per_lambda_bias", "square_mask", "per_lambda_batchnorm", "noncyclic")


@dataclass
class CertEntry:
    layer: str
    m: int
    mode: str  # exact | interp | structural
    max_abs_diff: float
    mean_abs_diff: float
    crop_margin: int
    tol: float
    passed: bool | None  # None for reported-only (interp) entries
    applicable: bool = True
    note: str = ""


@dataclass
class EquivarianceReport:
    entries: list

    def passed(self) -> bool:
        return all(e.passed for e in self.entries if e.applicable and e.passed is not None)

    def failing_layers(self) -> list[str]:
        seen = []
        for e in self.entries:
            if e.applicable and e.passed is False and e.layer not in seen:
                seen.append(e.layer)
        return seen

    def write_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(
                ["layer", "m", "mode", "max_abs_diff", "mean_abs_diff", "crop_margin", "tol", "passed", "applicable", "note"]
            )
            for e in self.entries:
                w.writerow(
                    [
                        e.layer,
                        e.m,
                        e.mode,
                        f"{e.max_abs_diff:.6g}",
                        f"{e.mean_abs_diff:.6g}",
                        e.crop_margin,
                        f"{e.tol:.6g}",
                        {True: "pass", False: "FAIL", None: "reported"}[e.passed],
                        "yes" if e.applicable else "n/a",
                        e.note,
                    ]
                )

    def summary(self) -> str:
        lines = []
        for e in self.entries:
            status = {True: "pass", False: "FAIL", None: "reported"}[e.passed]
            if not e.applicable:
                status = "n/a"
            lines.append(
                f"{status:8s} {e.layer:28s} m={e.m} mode={e.mode:10s} "
                f"max|d|={e.max_abs_diff:.3e} tol={e.tol:.1e} {e.note}"
            )
        verdict = "ALL EXACT CERTIFICATES PASS" if self.passed() else (
            "FAILURES IN: " + ", ".join(self.failing_layers())
        )
        return "\n".join(lines + [verdict])


def disk_probe_images(n: int, channels: int, hw: int, rng: np.random.Generator) -> np.ndarray:
    """Random probe images masked to a centered disk.

    The mask removes corner content whose behavior under rotation is an
    artifact of the square canvas rather than of the layers.
    """
    imgs = rng.standard_normal((n, channels, hw, hw))
    rr, cc = np.meshgrid(np.arange(hw), np.arange(hw), indexing="ij")
    c = (hw - 1) / 2.0
    mask = np.hypot(rr - c, cc - c) <= hw / 2.0 - 1.0
    return (imgs * mask).astype(np.float64)


def _crop(arr: np.ndarray, margin: int) -> np.ndarray:
    if margin <= 0:
        return arr
    return arr[..., margin:-margin, margin:-margin]


def _apply_action(value, kind: str, m: int, lam: int, mode: str):
    """Transform a probe value according to its representation kind."""
    if kind == "image" or kind == "spatial":
        return rotate_image_array(value, m, lam, mode)
    if kind == "group":
        return group_action_array(value, m, mode)
    if kind == "vector":
        return value
    raise ConfigError(f"unknown value kind {kind!r}")


def _forward_data(layer, value: np.ndarray, lam: int, train: bool = False):
    ctx = Ctx(train=train)
    if layer.in_kind == "group":
        out = layer.forward(GroupFeatureMap(Tensor(value.astype(default_dtype())), lam), ctx)
    else:
        out = layer.forward(Tensor(value.astype(default_dtype())), ctx)
    return out.tensor.data if isinstance(out, GroupFeatureMap) else out.data


def certify_layer(
    layer,
    probe_value: np.ndarray,
    m: int,
    tol: float,
    lam: int,
    mode: str = "exact",
    crop_margin: int = 0,
) -> CertEntry:
    """One commutative-square check for one layer at orientation step m."""
    if layer.in_kind == "vector":
        return CertEntry(
            layer=layer.name, m=m, mode=mode, max_abs_diff=0.0, mean_abs_diff=0.0,
            crop_margin=0, tol=tol, passed=None, applicable=False,
            note="input is rotation-invariant here",
        )
    if lam == 1 and m % lam == 0 and mode == "exact" and m != 0:
        return CertEntry(
            layer=layer.name, m=m, mode=mode, max_abs_diff=0.0, mean_abs_diff=0.0,
            crop_margin=0, tol=tol, passed=None, applicable=False,
            note="vacuous for Lambda=1",
        )
    out_ref = _forward_data(layer, probe_value, lam)
    out_of_rotated = _forward_data(layer, _apply_action(probe_value, layer.in_kind, m, lam, mode), lam)
    rotated_out = _apply_action(out_ref, layer.out_kind, m, lam, mode)
    diff = np.abs(_crop(out_of_rotated, crop_margin) - _crop(rotated_out, crop_margin))
    entry = CertEntry(
        layer=layer.name,
        m=m,
        mode=mode,
        max_abs_diff=float(diff.max()) if diff.size else 0.0,
        mean_abs_diff=float(diff.mean()) if diff.size else 0.0,
        crop_margin=crop_margin,
        tol=tol,
        passed=None,
    )
    if mode == "exact":
        entry.passed = entry.max_abs_diff < tol
    return entry


def _structural_entry(layer, tol: float = 0.0) -> CertEntry:
    """Kernels must vanish outside the disk mask of their basis grid."""
    mask = build_grid(layer.size).mask
    if isinstance(layer, SteerableInput):
        w = steer.SteerableWeights("input", layer.w_re.data, layer.w_im.data, layer.basis.key())
        kernels = steer.synthesize_input_bank(w, layer.basis, layer.phases).kernels
        if layer._fault == "square_mask":
            from .layers import _unmasked_bank

            kernels = _unmasked_bank(layer, kernels)
    else:
        w = steer.SteerableWeights("group", layer.w_re.data, layer.w_im.data, layer.basis.key())
        kernels = steer.synthesize_group_bank(w, layer.basis, layer.phases).kernels
        if layer._fault == "square_mask":
            from .layers import _unmasked_bank

            kernels = _unmasked_bank(layer, kernels)
    leak = float(np.abs(kernels[..., ~mask]).max()) if (~mask).any() else 0.0
    return CertEntry(
        layer=layer.name, m=0, mode="structural", max_abs_diff=leak, mean_abs_diff=leak,
        crop_margin=0, tol=1e-12, passed=leak <= 1e-12,
        note="kernel support restricted to the disk",
    )


def _warmup_images(n: int, channels: int, hw: int, rng: np.random.Generator) -> np.ndarray:
    """Oriented gratings plus noise: populates batchnorm running statistics
    with direction-dependent content so per-orientation defects surface."""
    cc = np.arange(hw)[None, :] * np.ones((hw, 1))
    grating = np.sin(2.0 * np.pi * cc / 7.0)
    base = disk_probe_images(n, channels, hw, rng)
    return base + 0.8 * grating[None, None, :, :]


def certify_network(
    model: Model,
    probe_images: np.ndarray,
    ms: list[int] | None = None,
    tol: float = 1e-4,
    mode: str = "exact",
    crop_margin: int = 0,
    warmup_batches: int = 2,
) -> EquivarianceReport:
    """Layerwise certificates plus end-to-end logit invariance.

    Batchnorm running statistics are first populated by a short train-mode
    warmup on oriented content, then all certificates run in eval mode.
    """
    lam = model.lambda_count
    if ms is None:
        ms = sorted({m % lam for m in (0, lam // 4, lam // 2, 3 * lam // 4)} if lam >= 4 else {0})
    rng = np.random.default_rng(7)
    has_bn = any(isinstance(l, GroupBatchNorm) for l in model.layers)
    if has_bn and warmup_batches:
        hw = probe_images.shape[-1]
        for _ in range(warmup_batches):
            x = _warmup_images(probe_images.shape[0], probe_images.shape[1], hw, rng)
            model.forward(Tensor(x.astype(default_dtype())), train=True)

    entries: list[CertEntry] = []
    for layer in model.layers:
        if isinstance(layer, (SteerableInput, SteerableGroup)):
            entries.append(_structural_entry(layer))

    # walk the stack once, certifying each layer on its actual input
    for m in ms:
        value = probe_images
        for layer in model.layers:
            entries.append(
                certify_layer(layer, value, m, tol, lam, mode=mode, crop_margin=crop_margin)
            )
            value = _forward_data(layer, value, lam)
        # end-to-end invariance of the logits
        if mode == "exact":
            logits_ref = _model_logits(model, probe_images)
            logits_rot = _model_logits(model, rotate_image_array(probe_images, m, lam, mode))
            diff = float(np.abs(logits_rot - logits_ref).max())
            entries.append(
                CertEntry(
                    layer="end_to_end", m=m, mode=mode, max_abs_diff=diff,
                    mean_abs_diff=float(np.abs(logits_rot - logits_ref).mean()),
                    crop_margin=0, tol=tol,
                    passed=(diff < tol) if (lam > 1 or m == 0) else None,
                    applicable=lam > 1 or m == 0,
                    note="logit invariance",
                )
            )
    return EquivarianceReport(entries=entries)


def _model_logits(model: Model, images: np.ndarray) -> np.ndarray:
    return model.forward(Tensor(images.astype(default_dtype())), train=False).data


def rotgen_curve(
    model: Model, images: np.ndarray, labels: np.ndarray, angles: np.ndarray
) -> list[tuple[float, float]]:
    """Classification error on rotated copies of an upright test set."""
    from .data import rotate_batch

    rows = []
    for angle in angles:
        rotated = rotate_batch(images, np.full(images.shape[0], float(angle)))
        rows.append((float(angle), model.error_rate(rotated, labels)))
    return rows


# ---------------------------------------------------------------------------
# fault injection


def unmasked_basis(basis: BasisSet) -> BasisSet:
    """Defective copy of a basis sampled on the full square support."""
    grid = build_grid(basis.size)
    full = grid.__class__(
        size=grid.size,
        radius=grid.radius,
        angle=grid.angle,
        mask=np.ones_like(grid.mask),
    )
    atoms = np.zeros_like(basis.atoms)
    for q, spec in enumerate(basis.specs):
        atoms[q] = normalize_atom(sample_atom(spec, full, basis.sigma), spec.k)
    part_norms = np.stack(
        [
            np.sqrt(np.sum(atoms.real**2, axis=(1, 2))),
            np.sqrt(np.sum(atoms.imag**2, axis=(1, 2))),
        ],
        axis=1,
    )
    return BasisSet(
        grid=full,
        sigma=basis.sigma,
        atoms=atoms,
        specs=basis.specs,
        real_dof=basis.real_dof,
        atom_norms=np.sqrt(np.sum(np.abs(atoms) ** 2, axis=(1, 2))),
        part_norms=part_norms,
        k_max=basis.k_max,
    )


def plant_fault(model: Model, kind: str) -> str:
    """Mutate one layer of a model with a known equivariance-breaking defect.

    Returns the name of the defective layer so tests can verify attribution.
    """
    if kind not in FAULT_KINDS:
        raise ConfigError(f"unknown fault kind {kind!r}; choose from {FAULT_KINDS}")
    if kind == "per_lambda_bias":
        for layer in model.layers:
            if isinstance(layer, (SteerableInput, SteerableGroup)):
                layer._fault = "per_lambda_bias"
                return layer.name
    if kind == "square_mask":
        for layer in model.layers:
            if isinstance(layer, (SteerableInput, SteerableGroup)):
                layer._fault = "square_mask"
                return layer.name
    if kind == "per_lambda_batchnorm":
        for layer in model.layers:
            if isinstance(layer, GroupBatchNorm):
                layer._fault = "per_lambda_stats"
                return layer.name
        raise ConfigError("model has no group batchnorm layer to corrupt")
    if kind == "noncyclic":
        for layer in model.layers:
            if isinstance(layer, SteerableGroup):
                layer._fault = "noncyclic"
                return layer.name
        raise ConfigError("model has no group-convolutional layer to corrupt")
    raise ConfigError(f"could not plant fault {kind!r}")
