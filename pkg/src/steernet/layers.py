"""Equivariant layer types and network assembly.

Feature maps of steerable stacks live on the group: a
:class:`GroupFeatureMap` wraps a tensor [N, C, Lambda, H, W] whose third axis
indexes filter orientations (index ``l`` corresponds to angle
``2*pi*l / Lambda``).  Rotating the network input acts on these maps through
:func:`group_action`: a spatial rotation combined with a cyclic shift of the
orientation axis.

Layers are assembled from a declarative NetSpec (JSON-compatible dict); see
docs/netspec.md for the schema.
"""
from __future__ import annotations

import numpy as np

from . import container, init as initmod, steer
from .engine import ops
from .engine.tensor import Parameter, Tensor, default_dtype
from .errors import ConfigError, ContractViolation
from .harmonics import BasisSet, build_basis

__all__ = [
    "GroupFeatureMap",
    "group_action",
    "validate_netspec",
    "build_network",
    "Model",
    "Ctx",
]


class GroupFeatureMap:
    """Activations indexed by (batch, channel, orientation, y, x)."""

    def __init__(self, tensor: Tensor, lambda_count: int):
        if tensor.ndim != 5 or tensor.shape[2] != lambda_count:
            raise ConfigError(
                f"group feature map needs [N, C, {lambda_count}, H, W], got {tensor.shape}"
            )
        self.tensor = tensor
        self.lambda_count = lambda_count

    @property
    def shape(self):
        return self.tensor.shape

    def to_flat(self) -> Tensor:
        """[N, C, L, H, W] -> [N, C*L, H, W]; lossless, (c, l) row-major."""
        n, c, lam, h, w = self.shape
        return ops.reshape(self.tensor, (n, c * lam, h, w))

    @staticmethod
    def from_flat(t: Tensor, lambda_count: int) -> "GroupFeatureMap":
        n, cl, h, w = t.shape
        if cl % lambda_count:
            raise ConfigError(f"cannot unflatten {cl} channels into Lambda={lambda_count}")
        return GroupFeatureMap(
            ops.reshape(t, (n, cl // lambda_count, lambda_count, h, w)), lambda_count
        )


def _rotate_planes_bilinear(arr: np.ndarray, angle: float) -> np.ndarray:
    from .data import rotate_image  # local import; data does not import layers

    flat = arr.reshape(-1, arr.shape[-2], arr.shape[-1])
    out = np.stack([rotate_image(p, angle) for p in flat])
    return out.reshape(arr.shape)


def group_action_array(arr: np.ndarray, m: int, mode: str = "exact") -> np.ndarray:
    """Apply R_phi with phi = 2*pi*m/Lambda to a [N, C, L, H, W] array.

    The spatial part rotates counterclockwise by phi; the orientation axis is
    cyclically shifted by m.  Exact mode requires phi to be a quarter-turn
    multiple (4*m == 0 mod Lambda) and is a pure index permutation.
    """
    if arr.ndim != 5:
        raise ConfigError(f"expected a 5-axis group array, got {arr.ndim} axes")
    lam = arr.shape[2]
    m = m % lam
    if mode == "exact":
        if (4 * m) % lam != 0:
            raise ContractViolation(
                f"exact group action needs 4*m divisible by Lambda, got m={m}, Lambda={lam}"
            )
        quarter_turns = (4 * m // lam) % 4
        spatial = np.rot90(arr, k=quarter_turns, axes=(-2, -1))
    elif mode == "interp":
        spatial = _rotate_planes_bilinear(arr, 2.0 * np.pi * m / lam)
    else:
        raise ConfigError(f"unknown group action mode {mode!r}")
    return np.roll(spatial, shift=m, axis=2)


def group_action(fmap: GroupFeatureMap, m: int, mode: str = "exact") -> GroupFeatureMap:
    """Group action on a feature map (non-differentiable; used for testing)."""
    data = group_action_array(fmap.tensor.data, m, mode)
    return GroupFeatureMap(Tensor(np.ascontiguousarray(data)), fmap.lambda_count)


def rotate_image_array(arr: np.ndarray, m: int, lam: int, mode: str = "exact") -> np.ndarray:
    """Spatial-only rotation of [N, C, H, W] input images by 2*pi*m/lam."""
    m = m % lam if lam > 0 else 0
    if mode == "exact":
        if (4 * m) % lam != 0:
            raise ContractViolation(
                f"exact rotation needs 4*m divisible by Lambda, got m={m}, Lambda={lam}"
            )
        return np.rot90(arr, k=(4 * m // lam) % 4, axes=(-2, -1)).copy()
    return _rotate_planes_bilinear(arr, 2.0 * np.pi * m / lam)


# ---------------------------------------------------------------------------
# differentiable kernel synthesis


def _synth_input_weight(layer: "SteerableInput") -> Tensor:
    """Conv weight [C_out*L, C_in, s, s] synthesized from coefficient planes."""
    w = steer.SteerableWeights(
        "input", layer.w_re.data, layer.w_im.data, layer.basis.key()
    )
    bank = steer.synthesize_input_bank(w, layer.basis, layer.phases)
    kernels = bank.kernels  # [L, co, ci, s, s]
    if layer._fault == "square_mask":
        kernels = _unmasked_bank(layer, kernels)
    lam, co, ci, s, _ = kernels.shape
    data = kernels.transpose(1, 0, 2, 3, 4).reshape(co * lam, ci, s, s)
    out = Tensor._from_op(
        np.ascontiguousarray(data.astype(default_dtype())), (layer.w_re, layer.w_im), "synth_input"
    )
    if out.requires_grad:

        def _bw(g: np.ndarray) -> None:
            gb = g.reshape(co, lam, ci, s, s).transpose(1, 0, 2, 3, 4)
            gre, gim = steer.synthesis_backward(gb.astype(np.float64), layer.basis, layer.phases)
            layer.w_re._accumulate(gre)
            layer.w_im._accumulate(gim)

        out._backward = _bw
    return out


def _synth_group_weight(layer: "SteerableGroup") -> Tensor:
    """Conv weight [C_out*L, C_in*L, s, s] from group coefficient planes."""
    w = steer.SteerableWeights(
        "group", layer.w_re.data, layer.w_im.data, layer.basis.key()
    )
    bank = steer.synthesize_group_bank(w, layer.basis, layer.phases)
    kernels = bank.kernels  # [lo, co, li, ci, s, s]
    lam = layer.lambda_count
    if layer._fault == "noncyclic":
        # emulate clipped (non-wrapping) weight indexing by reindexing the
        # correctly synthesized bank; forward-only testing hook
        lo = np.arange(lam)[:, None]
        li = np.arange(lam)[None, :]
        src = (np.clip(lo - li, 0, lam - 1) + li) % lam
        kernels = kernels.transpose(0, 2, 1, 3, 4, 5)[src, li][:, :].transpose(0, 2, 1, 3, 4, 5)
    if layer._fault == "square_mask":
        kernels = _unmasked_bank(layer, kernels)
    co, ci = kernels.shape[1], kernels.shape[3]
    s = kernels.shape[-1]
    data = kernels.transpose(1, 0, 3, 2, 4, 5).reshape(co * lam, ci * lam, s, s)
    out = Tensor._from_op(
        np.ascontiguousarray(data.astype(default_dtype())), (layer.w_re, layer.w_im), "synth_group"
    )
    if out.requires_grad:

        def _bw(g: np.ndarray) -> None:
            gb = g.reshape(co, lam, ci, lam, s, s).transpose(1, 0, 3, 2, 4, 5)
            gre, gim = steer.synthesis_backward(gb.astype(np.float64), layer.basis, layer.phases)
            layer.w_re._accumulate(gre)
            layer.w_im._accumulate(gim)

        out._backward = _bw
    return out


def _unmasked_bank(layer, kernels: np.ndarray) -> np.ndarray:
    """Fault-injection helper: re-synthesize on a square (unmasked) support."""
    from .equiv import unmasked_basis

    bad = unmasked_basis(layer.basis)
    w_kind = "input" if kernels.ndim == 5 else "group"
    w = steer.SteerableWeights(w_kind, layer.w_re.data, layer.w_im.data, bad.key())
    if w_kind == "input":
        return steer.synthesize_input_bank(w, bad, steer.phase_table(layer.lambda_count, bad)).kernels
    return steer.synthesize_group_bank(w, bad, steer.phase_table(layer.lambda_count, bad)).kernels


# ---------------------------------------------------------------------------
# layers


class Ctx:
    """Per-forward context: mode flag, rng for dropout, probe collector."""

    def __init__(self, train: bool = False, rng: np.random.Generator | None = None, collect=None):
        self.train = train
        self.rng = rng
        self.collect = collect


class SteerableInput:
    """Image -> group map: convolve with Lambda rotated copies of each filter."""

    in_kind, out_kind = "image", "group"

    def __init__(self, name, c_in, c_out, size, lambda_count, basis: BasisSet):
        self.name = name
        self.c_in, self.c_out = c_in, c_out
        self.size = size
        self.lambda_count = lambda_count
        self.basis = basis
        self.phases = steer.phase_table(lambda_count, basis)
        q = basis.num_atoms
        self.w_re = Parameter(np.zeros((c_out, c_in, q)), f"{name}/w_re", penalty="conv")
        self.w_im = Parameter(np.zeros((c_out, c_in, q)), f"{name}/w_im", penalty="conv")
        self.bias = Parameter(np.zeros(c_out), f"{name}/bias")
        self._fault = None

    def params(self):
        return [self.w_re, self.w_im, self.bias]

    def live_param_count(self):
        return self.c_out * self.c_in * self.basis.real_dof + self.c_out

    def forward(self, x: Tensor, ctx: Ctx) -> GroupFeatureMap:
        if x.ndim != 4 or x.shape[1] != self.c_in:
            raise ConfigError(f"{self.name}: expected [N, {self.c_in}, H, W], got {x.shape}")
        if x.shape[2] < self.size or x.shape[3] < self.size:
            raise ConfigError(f"{self.name}: image smaller than {self.size}x{self.size} kernel")
        weight = _synth_input_weight(self)
        y = ops.conv2d(x, weight, padding="same")
        n, _, h, w = y.shape
        y = ops.reshape(y, (n, self.c_out, self.lambda_count, h, w))
        y = ops.bias_add(y, self.bias, axis=1)
        if self._fault == "per_lambda_bias":
            offs = 0.05 * np.arange(self.lambda_count, dtype=y.dtype).reshape(1, 1, -1, 1, 1)
            y = Tensor(y.data + offs)  # forward-only testing hook
        if ctx.collect is not None:
            ctx.collect.append((self.name, y.data))
        return GroupFeatureMap(y, self.lambda_count)


class SteerableGroup:
    """Group map -> group map via group convolution with steered kernels."""

    in_kind, out_kind = "group", "group"

    def __init__(self, name, c_in, c_out, size, lambda_count, basis: BasisSet):
        self.name = name
        self.c_in, self.c_out = c_in, c_out
        self.size = size
        self.lambda_count = lambda_count
        self.basis = basis
        self.phases = steer.phase_table(lambda_count, basis)
        q = basis.num_atoms
        shape = (c_out, c_in, lambda_count, q)
        self.w_re = Parameter(np.zeros(shape), f"{name}/w_re", penalty="conv")
        self.w_im = Parameter(np.zeros(shape), f"{name}/w_im", penalty="conv")
        self.bias = Parameter(np.zeros(c_out), f"{name}/bias")
        self._fault = None

    def params(self):
        return [self.w_re, self.w_im, self.bias]

    def live_param_count(self):
        return (
            self.c_out * self.c_in * self.lambda_count * self.basis.real_dof + self.c_out
        )

    def forward(self, fmap: GroupFeatureMap, ctx: Ctx) -> GroupFeatureMap:
        if fmap.lambda_count != self.lambda_count:
            raise ConfigError(
                f"{self.name}: map has Lambda={fmap.lambda_count}, layer expects {self.lambda_count}"
            )
        weight = _synth_group_weight(self)
        y = ops.conv2d(fmap.to_flat(), weight, padding="same")
        n, _, h, w = y.shape
        y = ops.reshape(y, (n, self.c_out, self.lambda_count, h, w))
        y = ops.bias_add(y, self.bias, axis=1)
        if self._fault == "per_lambda_bias":
            offs = 0.05 * np.arange(self.lambda_count, dtype=y.dtype).reshape(1, 1, -1, 1, 1)
            y = Tensor(y.data + offs)  # forward-only testing hook
        if ctx.collect is not None:
            ctx.collect.append((self.name, y.data))
        return GroupFeatureMap(y, self.lambda_count)


class GroupReLU:
    in_kind, out_kind = "group", "group"

    def __init__(self, name):
        self.name = name

    def params(self):
        return []

    def live_param_count(self):
        return 0

    def forward(self, fmap: GroupFeatureMap, ctx: Ctx) -> GroupFeatureMap:
        return GroupFeatureMap(ops.relu(fmap.tensor), fmap.lambda_count)


class VectorReLU:
    in_kind, out_kind = "vector", "vector"

    def __init__(self, name):
        self.name = name

    def params(self):
        return []

    def live_param_count(self):
        return 0

    def forward(self, x: Tensor, ctx: Ctx) -> Tensor:
        return ops.relu(x)


class GroupMaxPool:
    """Spatial 2x2 max pooling applied per orientation channel."""

    in_kind, out_kind = "group", "group"

    def __init__(self, name):
        self.name = name

    def params(self):
        return []

    def live_param_count(self):
        return 0

    def forward(self, fmap: GroupFeatureMap, ctx: Ctx) -> GroupFeatureMap:
        return GroupFeatureMap.from_flat(ops.maxpool2x2(fmap.to_flat()), fmap.lambda_count)


class OrientationPool:
    """Max over the orientation axis; output transforms by plain rotation."""

    in_kind, out_kind = "group", "spatial"

    def __init__(self, name):
        self.name = name

    def params(self):
        return []

    def live_param_count(self):
        return 0

    def forward(self, fmap: GroupFeatureMap, ctx: Ctx) -> Tensor:
        return ops.max_over_axis(fmap.tensor, axis=2)


class GlobalAvgPool:
    in_kind, out_kind = "spatial", "vector"

    def __init__(self, name):
        self.name = name

    def params(self):
        return []

    def live_param_count(self):
        return 0

    def forward(self, x: Tensor, ctx: Ctx) -> Tensor:
        return ops.global_avgpool(x)


class GroupBatchNorm:
    """Batchnorm over (batch, orientation, spatial) axes, one stat per channel."""

    in_kind, out_kind = "group", "group"

    def __init__(self, name, channels, affine=True):
        self.name = name
        self.channels = channels
        self.affine = affine
        stat_shape = (1, channels, 1, 1, 1)
        self.gamma = Parameter(np.ones(stat_shape), f"{name}/gamma") if affine else None
        self.beta = Parameter(np.zeros(stat_shape), f"{name}/beta") if affine else None
        self.state = ops.BatchNormState(stat_shape, default_dtype())
        self._fault = None

    def params(self):
        return [p for p in (self.gamma, self.beta) if p is not None]

    def live_param_count(self):
        return 2 * self.channels if self.affine else 0

    def forward(self, fmap: GroupFeatureMap, ctx: Ctx) -> GroupFeatureMap:
        axes = (0, 2, 3, 4)
        if self._fault == "per_lambda_stats":
            # defective variant keeps separate statistics per orientation
            axes = (0, 3, 4)
            if self.state.running_mean.shape[2] != fmap.lambda_count:
                shape = (1, self.channels, fmap.lambda_count, 1, 1)
                self.state = ops.BatchNormState(shape, self.state.running_mean.dtype)
        out = ops.batchnorm_nd(
            fmap.tensor, self.gamma, self.beta, axes, self.state, train=ctx.train
        )
        return GroupFeatureMap(out, fmap.lambda_count)


class VectorBatchNorm:
    in_kind, out_kind = "vector", "vector"

    def __init__(self, name, features, affine=True):
        self.name = name
        self.features = features
        self.affine = affine
        stat_shape = (1, features)
        self.gamma = Parameter(np.ones(stat_shape), f"{name}/gamma") if affine else None
        self.beta = Parameter(np.zeros(stat_shape), f"{name}/beta") if affine else None
        self.state = ops.BatchNormState(stat_shape, default_dtype())

    def params(self):
        return [p for p in (self.gamma, self.beta) if p is not None]

    def live_param_count(self):
        return 2 * self.features if self.affine else 0

    def forward(self, x: Tensor, ctx: Ctx) -> Tensor:
        return ops.batchnorm_nd(x, self.gamma, self.beta, (0,), self.state, train=ctx.train)


class Dense:
    in_kind, out_kind = "vector", "vector"

    def __init__(self, name, n_in, n_out, rng: np.random.Generator):
        self.name = name
        self.n_in, self.n_out = n_in, n_out
        limit = np.sqrt(6.0 / n_in)  # He-uniform
        w = rng.uniform(-limit, limit, size=(n_in, n_out))
        self.weight = Parameter(w, f"{name}/weight", penalty="fc")
        self.bias = Parameter(np.zeros(n_out), f"{name}/bias")

    def params(self):
        return [self.weight, self.bias]

    def live_param_count(self):
        return self.n_in * self.n_out + self.n_out

    def forward(self, x: Tensor, ctx: Ctx) -> Tensor:
        return ops.dense(x, self.weight, self.bias)


class Dropout:
    in_kind, out_kind = "vector", "vector"

    def __init__(self, name, p):
        self.name = name
        self.p = p

    def params(self):
        return []

    def live_param_count(self):
        return 0

    def forward(self, x: Tensor, ctx: Ctx) -> Tensor:
        rng = ctx.rng if ctx.rng is not None else np.random.default_rng(0)
        return ops.dropout(x, self.p, rng, train=ctx.train)


# ---------------------------------------------------------------------------
# NetSpec validation and network assembly

_STEERABLE_KINDS = ("input", "gconv")
_ALL_KINDS = ("input", "gconv", "maxpool", "orientation_pool", "dense", "batchnorm", "dropout")


def _err(path: str, msg: str):
    raise ConfigError(f"{path}: {msg}")


def validate_netspec(spec: dict) -> dict:
    """Validate and normalize a NetSpec dict; raises ConfigError with the
    offending field path."""
    if not isinstance(spec, dict):
        raise ConfigError("netspec: expected a JSON object")
    out = dict(spec)
    if out.get("version", 1) != 1:
        _err("version", f"unsupported netspec version {out.get('version')!r}")
    out["version"] = 1
    lam = out.get("lambda_count")
    if not isinstance(lam, int) or lam < 1:
        _err("lambda_count", f"must be an integer >= 1, got {lam!r}")
    out.setdefault("in_channels", 1)
    if not isinstance(out["in_channels"], int) or out["in_channels"] < 1:
        _err("in_channels", "must be a positive integer")
    out.setdefault("seed", 0)
    basis = dict(out.get("basis", {}))
    basis.setdefault("sigma", 0.5)
    basis.setdefault("k_max", None)
    if not (isinstance(basis["sigma"], (int, float)) and basis["sigma"] > 0):
        _err("basis.sigma", "must be a positive number")
    out["basis"] = basis
    ini = dict(out.get("init", {}))
    ini.setdefault("mode", "coeff_forward")
    ini.setdefault("distribution", "uniform")
    if ini["mode"] not in ("coeff_forward", "coeff_backward", "he_pixel"):
        _err("init.mode", f"unknown mode {ini['mode']!r}")
    if ini["distribution"] not in ("uniform", "gaussian"):
        _err("init.distribution", f"unknown distribution {ini['distribution']!r}")
    out["init"] = ini
    out.setdefault("batchnorm_affine", True)

    layers = out.get("layers")
    if not isinstance(layers, list) or not layers:
        _err("layers", "must be a non-empty list")
    stage = "image"  # image -> group -> spatial/vector
    n_orient_pool = 0
    norm_layers = []
    for i, entry in enumerate(layers):
        path = f"layers[{i}]"
        if not isinstance(entry, dict) or "kind" not in entry:
            _err(path, "each layer needs a 'kind' field")
        kind = entry["kind"]
        if kind not in _ALL_KINDS:
            _err(f"{path}.kind", f"unknown kind {kind!r}")
        e = dict(entry)
        if kind == "input":
            if i != 0:
                _err(path, "the steerable input layer must be first")
            stage = "group"
        if kind == "gconv":
            if stage != "group":
                _err(path, "gconv must come after the input layer and before orientation_pool")
        if kind in ("input", "gconv"):
            size = e.get("size")
            if not isinstance(size, int) or size < 3 or size % 2 == 0:
                _err(f"{path}.size", f"kernel size must be odd and >= 3, got {size!r}")
            ch = e.get("channels")
            if not isinstance(ch, int) or ch < 1:
                _err(f"{path}.channels", f"must be a positive integer, got {ch!r}")
            e.setdefault("activation", "none" if i == len(layers) - 1 else "relu")
        if kind == "maxpool" and stage != "group":
            _err(path, "maxpool is only supported inside the steerable stack")
        if kind == "orientation_pool":
            n_orient_pool += 1
            if stage != "group":
                _err(path, "orientation_pool must follow the steerable stack")
            stage = "vector"
        if kind == "dense":
            if stage != "vector":
                _err(path, "dense layers must come after orientation_pool")
            units = e.get("units")
            if not isinstance(units, int) or units < 1:
                _err(f"{path}.units", f"must be a positive integer, got {units!r}")
            e.setdefault("activation", "none" if i == len(layers) - 1 else "relu")
        if kind == "batchnorm":
            prev = layers[i - 1]["kind"] if i else None
            if prev not in ("input", "gconv", "dense"):
                _err(path, "batchnorm must immediately follow input, gconv or dense")
        if kind == "dropout":
            p = e.get("p", 0.3)
            if not (isinstance(p, (int, float)) and 0.0 <= p < 1.0):
                _err(f"{path}.p", f"must be in [0, 1), got {p!r}")
            e["p"] = float(p)
            if stage != "vector":
                _err(path, "dropout is only supported in the dense head")
        if i == 0 and kind != "input":
            _err("layers[0]", "the first layer must be the steerable input layer")
        norm_layers.append(e)
    if n_orient_pool != 1:
        _err("layers", f"exactly one orientation_pool required, found {n_orient_pool}")
    if norm_layers[-1]["kind"] != "dense":
        _err("layers", "the last layer must be a dense classifier head")
    out["layers"] = norm_layers
    return out


class Model:
    """An assembled network: ordered layers plus bookkeeping for training."""

    def __init__(self, netspec: dict, layers: list, bases: dict):
        self.netspec = netspec
        self.layers = layers
        self.bases = bases
        self.lambda_count = netspec["lambda_count"]

    def parameters(self) -> list[Parameter]:
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out

    def parameter_count(self) -> int:
        """Live real degrees of freedom (DC imaginary planes do not count)."""
        return sum(layer.live_param_count() for layer in self.layers)

    def steerable_parameter_count(self) -> int:
        return sum(
            layer.live_param_count()
            for layer in self.layers
            if isinstance(layer, (SteerableInput, SteerableGroup))
        )

    def forward(self, x: Tensor, train: bool = False, rng=None, collect=None) -> Tensor:
        ctx = Ctx(train=train, rng=rng, collect=collect)
        value = x
        for layer in self.layers:
            value = layer.forward(value, ctx)
        return value

    def predict(self, images: np.ndarray, batch_size: int = 256) -> np.ndarray:
        """Class predictions for [N, C, H, W] images, in eval mode."""
        preds = []
        for i in range(0, images.shape[0], batch_size):
            batch = Tensor(images[i : i + batch_size].astype(default_dtype()))
            logits = self.forward(batch, train=False)
            preds.append(np.argmax(logits.data, axis=1))
        return np.concatenate(preds) if preds else np.zeros(0, dtype=np.int64)

    def error_rate(self, images: np.ndarray, labels: np.ndarray) -> float:
        return float(np.mean(self.predict(images) != labels))

    # -- persistence --------------------------------------------------------

    def state_tensors(self) -> dict[str, np.ndarray]:
        tensors: dict[str, np.ndarray] = {}
        for p in self.parameters():
            tensors[p.name] = p.data
        for layer in self.layers:
            state = getattr(layer, "state", None)
            if state is not None:
                tensors[f"{layer.name}/running_mean"] = state.running_mean
                tensors[f"{layer.name}/running_var"] = state.running_var
        return tensors

    def load_state_tensors(self, tensors: dict[str, np.ndarray]) -> None:
        dt = default_dtype()
        for p in self.parameters():
            if p.name not in tensors:
                raise ConfigError(f"checkpoint is missing tensor {p.name!r}")
            if tuple(tensors[p.name].shape) != p.shape:
                raise ConfigError(
                    f"checkpoint tensor {p.name!r} has shape {tensors[p.name].shape}, "
                    f"model expects {p.shape}"
                )
            p.data = tensors[p.name].astype(dt)
        for layer in self.layers:
            state = getattr(layer, "state", None)
            if state is not None:
                state.running_mean = tensors[f"{layer.name}/running_mean"].astype(dt)
                state.running_var = tensors[f"{layer.name}/running_var"].astype(dt)

    def save(self, path, extra_meta: dict | None = None, extra_tensors=None) -> None:
        meta = {"netspec": self.netspec}
        if extra_meta:
            meta.update(extra_meta)
        tensors = self.state_tensors()
        if extra_tensors:
            tensors.update(extra_tensors)
        container.write_container(path, meta, tensors)

    @classmethod
    def load(cls, path) -> tuple["Model", dict, dict]:
        """Rebuild a model from a checkpoint; returns (model, meta, tensors)."""
        meta, tensors = container.read_container(path)
        model = build_network(meta["netspec"])
        model.load_state_tensors(tensors)
        return model, meta, tensors


def build_network(spec: dict) -> Model:
    """Assemble and initialize a model from a NetSpec dict.

    ReLU placement: steerable and dense layers declare an ``activation``
    field (default relu, none on the final layer); when a batchnorm entry
    immediately follows the layer, the activation is applied after the
    normalization, matching conv -> norm -> relu ordering.
    """
    spec = validate_netspec(spec)
    lam = spec["lambda_count"]
    rng = np.random.default_rng([spec["seed"], 0])
    sigma, k_max = spec["basis"]["sigma"], spec["basis"]["k_max"]
    affine = spec["batchnorm_affine"]

    bases: dict[int, BasisSet] = {}

    def basis_for(size: int) -> BasisSet:
        if size not in bases:
            bases[size] = build_basis(size, sigma=sigma, k_max=k_max)
        return bases[size]

    layers: list = []
    channels = spec["in_channels"]
    stage = "image"
    pending_act: str | None = None
    declared = spec["layers"]

    for i, entry in enumerate(declared):
        kind = entry["kind"]
        name = f"{i:02d}_{kind}"
        nxt = declared[i + 1]["kind"] if i + 1 < len(declared) else None
        if kind == "input":
            basis = basis_for(entry["size"])
            layer = SteerableInput(name, channels, entry["channels"], entry["size"], lam, basis)
            initmod.init_steerable(layer, spec["init"], rng)
            layers.append(layer)
            channels = entry["channels"]
            stage = "group"
            pending_act = entry["activation"]
        elif kind == "gconv":
            basis = basis_for(entry["size"])
            layer = SteerableGroup(name, channels, entry["channels"], entry["size"], lam, basis)
            initmod.init_steerable(layer, spec["init"], rng)
            layers.append(layer)
            channels = entry["channels"]
            pending_act = entry["activation"]
        elif kind == "batchnorm":
            if stage == "group":
                layers.append(GroupBatchNorm(name, channels, affine=affine))
            else:
                layers.append(VectorBatchNorm(name, channels, affine=affine))
        elif kind == "maxpool":
            layers.append(GroupMaxPool(name))
        elif kind == "orientation_pool":
            layers.append(OrientationPool(name))
            layers.append(GlobalAvgPool(f"{i:02d}_global_avgpool"))
            stage = "vector"
        elif kind == "dense":
            layers.append(Dense(name, channels, entry["units"], rng))
            channels = entry["units"]
            pending_act = entry["activation"]
        elif kind == "dropout":
            layers.append(Dropout(name, entry["p"]))
        # flush the activation unless a batchnorm entry comes right next
        if pending_act and nxt != "batchnorm":
            if pending_act == "relu":
                if stage == "group":
                    layers.append(GroupReLU(f"{i:02d}_relu"))
                else:
                    layers.append(VectorReLU(f"{i:02d}_relu"))
            pending_act = None
        elif pending_act and nxt == "batchnorm":
            pass  # emitted after the upcoming batchnorm layer
        if kind == "batchnorm" and pending_act:
            if pending_act == "relu":
                if stage == "group":
                    layers.append(GroupReLU(f"{i:02d}_relu"))
                else:
                    layers.append(VectorReLU(f"{i:02d}_relu"))
            pending_act = None

    return Model(spec, layers, bases)
