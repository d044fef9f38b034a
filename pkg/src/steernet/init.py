"""Variance-calibrated initialization for expansion-coefficient weights.

Filters are linear combinations ``sum_q w_q psi_q`` rather than pixel grids,
so the classic fan-based schemes are generalized: each real coefficient plane
gets variance ``2 / (fan_eff * Q_r * ||psi_plane||^2)`` where ``Q_r`` counts
real degrees of freedom (one per DC atom, two per non-DC atom) and the norm
weighting counterbalances unequal plane energies on the sampled grid.  With a
Dirac pixel basis this reduces exactly to ``2 / (fan * s^2)``.

Group-convolutional layers see their input orientation channels as ordinary
channels, hence ``fan_eff`` carries an extra factor Lambda.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .engine.tensor import Tensor, default_dtype
from .errors import ConfigError

__all__ = [
    "InitSpec",
    "coeff_variance",
    "init_weights",
    "init_steerable",
    "variance_probe",
    "ProbeReport",
]

# planes whose sampled norm is below this are structurally dead (the DC
# imaginary plane, and ring-Nyquist aliased planes on tiny grids); they are
# frozen at zero instead of rejected
DEAD_PLANE_TOL = 1e-9


@dataclass
class InitSpec:
    """Everything the variance formulas need, independent of layer classes.

    ``part_norms[q, 0/1]`` are the L2 norms of the real/imaginary plane of
    atom ``q`` after basis normalization; a Dirac pixel basis is expressed as
    ``s*s`` atoms with part_norms [[1, 0], ...].
    """

    mode: str  # coeff_forward | coeff_backward | he_pixel
    fan_in: int  # effective: includes Lambda for group layers
    fan_out: int
    kernel_size: int
    part_norms: np.ndarray  # [Q, 2]
    distribution: str = "uniform"

    def __post_init__(self):
        if self.mode not in ("coeff_forward", "coeff_backward", "he_pixel"):
            raise ConfigError(f"unknown init mode {self.mode!r}")
        if self.distribution not in ("uniform", "gaussian"):
            raise ConfigError(f"unknown init distribution {self.distribution!r}")
        if self.fan_in < 1 or self.fan_out < 1:
            raise ConfigError("fan_in and fan_out must be >= 1")
        self.part_norms = np.asarray(self.part_norms, dtype=np.float64)
        if self.part_norms.ndim != 2 or self.part_norms.shape[1] != 2:
            raise ConfigError("part_norms must have shape [Q, 2]")

    @property
    def real_dof(self) -> int:
        live = self.part_norms > DEAD_PLANE_TOL
        return int(live.sum())


def coeff_variance(spec: InitSpec) -> np.ndarray:
    """Target variance per real coefficient plane, shape [Q, 2].

    Dead planes get zero variance; their coefficients stay frozen at zero.
    """
    live = spec.part_norms > DEAD_PLANE_TOL
    if not live.any():
        raise ConfigError("basis has no live planes: all norms are zero")
    var = np.zeros_like(spec.part_norms)
    if spec.mode == "he_pixel":
        # the literal pixel-basis rule applied to coefficients: ignore norms
        # and the atom count, use 2 / (fan_in * s^2)
        var[live] = 2.0 / (spec.fan_in * spec.kernel_size**2)
        return var
    fan = spec.fan_in if spec.mode == "coeff_forward" else spec.fan_out
    q_r = spec.real_dof
    var[live] = 2.0 / (fan * q_r * spec.part_norms[live] ** 2)
    return var


def init_weights(
    prefix_shape: tuple[int, ...], spec: InitSpec, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Draw (re, im) coefficient planes of shape ``prefix_shape + (Q,)``.

    Planes are drawn independently, zero-mean, with the per-plane variances
    from :func:`coeff_variance`.
    """
    var = coeff_variance(spec)
    q = var.shape[0]
    shape = tuple(prefix_shape) + (q,)
    planes = []
    for part in (0, 1):
        v = var[:, part]
        if spec.distribution == "uniform":
            limit = np.sqrt(3.0 * v)
            plane = rng.uniform(-1.0, 1.0, size=shape) * limit
        else:
            plane = rng.standard_normal(shape) * np.sqrt(v)
        planes.append(plane)
    return planes[0], planes[1]


def steering_plane_norms(basis) -> np.ndarray:
    """Per-plane norms as seen through steering, shape [Q, 2].

    Multiplying an atom by a unit phase redistributes energy between its real
    and imaginary planes; averaged over orientations each live plane of a
    non-DC atom carries exactly half of the complex energy.  With the complex
    modulus normalized to 1 (DC) or sqrt(2) (non-DC), every live plane has
    unit effective norm, which recovers the uniform 2/(fan * Q_r) rule.  The
    raw sampled phase-0 norms must NOT be used here: they can be wildly
    asymmetric for ring-Nyquist atoms and would destabilize deeper stacks.
    """
    ks = basis.frequencies
    norms = np.zeros((basis.num_atoms, 2))
    norms[:, 0] = np.where(ks == 0, basis.atom_norms, basis.atom_norms / np.sqrt(2.0))
    norms[:, 1] = np.where(ks == 0, 0.0, basis.atom_norms / np.sqrt(2.0))
    return norms


def init_steerable(layer, init_cfg: dict, rng: np.random.Generator) -> None:
    """Fill a steerable layer's coefficient planes in place; biases stay zero."""
    lam = layer.lambda_count
    if layer.w_re.data.ndim == 3:  # input layer
        fan_in, fan_out = layer.c_in, layer.c_out * lam
        prefix = (layer.c_out, layer.c_in)
    else:  # group layer: orientation channels count as fan
        fan_in, fan_out = layer.c_in * lam, layer.c_out * lam
        prefix = (layer.c_out, layer.c_in, lam)
    spec = InitSpec(
        mode=init_cfg["mode"],
        fan_in=fan_in,
        fan_out=fan_out,
        kernel_size=layer.size,
        part_norms=steering_plane_norms(layer.basis),
        distribution=init_cfg["distribution"],
    )
    re, im = init_weights(prefix, spec, rng)
    dt = default_dtype()
    layer.w_re.data = re.astype(dt)
    layer.w_im.data = im.astype(dt)


# ---------------------------------------------------------------------------
# empirical variance probe


@dataclass
class ProbeRow:
    layer: str
    fan_in: int
    target_var: float
    measured_var: float


@dataclass
class ProbeReport:
    rows: list

    @property
    def max_min_ratio(self) -> float:
        vs = [r.measured_var for r in self.rows]
        return max(vs) / min(vs) if vs else float("nan")

    def within(self, factor: float) -> bool:
        return self.max_min_ratio <= factor

    def write_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["layer", "fan_in", "target_var", "measured_var"])
            for r in self.rows:
                w.writerow([r.layer, r.fan_in, f"{r.target_var:.8g}", f"{r.measured_var:.8g}"])


def variance_probe(
    model,
    n_batches: int = 4,
    batch_size: int = 8,
    image_hw: int = 24,
    rng: np.random.Generator | None = None,
) -> ProbeReport:
    """Push standardized noise through a model and record per-steerable-layer
    pre-nonlinearity variance.

    With coefficient-calibrated initialization the measured variances should
    stay flat across depth (target 2x the input variance for every layer,
    from the ReLU factor built into the scheme).
    """
    rng = rng or np.random.default_rng(0)
    c_in = model.netspec["in_channels"]
    sums: dict[str, tuple[float, int]] = {}
    for _ in range(n_batches):
        x = rng.standard_normal((batch_size, c_in, image_hw, image_hw))
        collect: list = []
        model.forward(Tensor(x.astype(default_dtype())), train=False, collect=collect)
        for name, data in collect:
            s, n = sums.get(name, (0.0, 0))
            sums[name] = (s + float(np.var(data)), n + 1)
    fans = {}
    for layer in model.layers:
        if hasattr(layer, "w_re"):
            lam = layer.lambda_count
            fans[layer.name] = layer.c_in if layer.w_re.data.ndim == 3 else layer.c_in * lam
    rows = [
        ProbeRow(layer=name, fan_in=fans.get(name, 0), target_var=2.0, measured_var=s / n)
        for name, (s, n) in sums.items()
    ]
    return ProbeReport(rows=rows)
