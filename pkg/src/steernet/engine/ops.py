"""Differentiable operations on :class:`~steernet.engine.tensor.Tensor`.

Convolution uses cross-correlation semantics (the kernel is not flipped),
implemented as im2col plus one BLAS matmul.  A naive quadruple-loop reference
lives in the test suite and pins these semantics down.
"""
from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from .tensor import Tensor

__all__ = [
    "conv2d",
    "bias_add",
    "relu",
    "maxpool2x2",
    "max_over_axis",
    "global_avgpool",
    "dense",
    "dropout",
    "reshape",
    "transpose",
    "add",
    "scale",
    "BatchNormState",
    "batchnorm_nd",
    "softmax_cross_entropy",
    "sigmoid_binary_cross_entropy",
]


# ---------------------------------------------------------------------------
# convolution


def _im2col(x: np.ndarray, s: int, pad: int) -> np.ndarray:
    """Patch matrix [N*Ho*Wo, C*s*s] for an s x s kernel with zero padding."""
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    n, c = x.shape[:2]
    win = np.lib.stride_tricks.sliding_window_view(x, (s, s), axis=(2, 3))
    ho, wo = win.shape[2], win.shape[3]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * s * s)
    return np.ascontiguousarray(cols), ho, wo


def _col2im(gcols: np.ndarray, x_shape, s: int, pad: int, ho: int, wo: int) -> np.ndarray:
    """Adjoint of :func:`_im2col`: scatter-add patches back onto the image."""
    n, c, h, w = x_shape
    gx = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=gcols.dtype)
    patches = gcols.reshape(n, ho, wo, c, s, s).transpose(0, 3, 1, 2, 4, 5)
    for i in range(s):
        for j in range(s):
            gx[:, :, i : i + ho, j : j + wo] += patches[:, :, :, :, i, j]
    if pad:
        gx = gx[:, :, pad:-pad, pad:-pad]
    return np.ascontiguousarray(gx)


def conv2d(x: Tensor, weight: Tensor, padding: str = "same") -> Tensor:
    """2-D cross-correlation.

    Parameters
    ----------
    x : Tensor, [N, C_in, H, W]
    weight : Tensor, [C_out, C_in, s, s] with odd s
    padding : "same" (zero fill of (s-1)/2, output H x W) or "valid"
        (output (H-s+1) x (W-s+1)).
    """
    if x.ndim != 4 or weight.ndim != 4:
        raise ConfigError("conv2d expects 4-axis input and weight")
    co, ci, s, s2 = weight.shape
    if s != s2 or s % 2 == 0:
        raise ConfigError(f"kernel must be square with odd side, got {s}x{s2}")
    if x.shape[1] != ci:
        raise ConfigError(f"channel mismatch: input has {x.shape[1]}, weight expects {ci}")
    if padding not in ("same", "valid"):
        raise ConfigError(f"padding must be 'same' or 'valid', got {padding!r}")
    pad = (s - 1) // 2 if padding == "same" else 0
    if padding == "valid" and (x.shape[2] < s or x.shape[3] < s):
        raise ConfigError("input smaller than kernel under valid padding")

    n = x.shape[0]
    cols, ho, wo = _im2col(x.data, s, pad)
    wmat = weight.data.reshape(co, ci * s * s)
    out_data = (cols @ wmat.T).reshape(n, ho, wo, co).transpose(0, 3, 1, 2)
    out = Tensor._from_op(np.ascontiguousarray(out_data), (x, weight), "conv2d")
    if out.requires_grad:
        x_shape = x.shape

        def _bw(g: np.ndarray) -> None:
            gmat = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, co)
            if weight.requires_grad:
                weight._accumulate((gmat.T @ cols).reshape(weight.shape))
            if x.requires_grad:
                gcols = gmat @ wmat
                x._accumulate(_col2im(gcols, x_shape, s, pad, ho, wo))

        out._backward = _bw
    return out


# ---------------------------------------------------------------------------
# elementwise / structural


def bias_add(x: Tensor, b: Tensor, axis: int = 1) -> Tensor:
    """Add a vector along one axis (the channel axis by default)."""
    if b.ndim != 1 or x.shape[axis] != b.shape[0]:
        raise ConfigError(f"bias of shape {b.shape} does not fit axis {axis} of {x.shape}")
    shape = [1] * x.ndim
    shape[axis] = b.shape[0]
    out = Tensor._from_op(x.data + b.data.reshape(shape), (x, b), "bias_add")
    if out.requires_grad:
        reduce_axes = tuple(i for i in range(x.ndim) if i != axis)

        def _bw(g: np.ndarray) -> None:
            if x.requires_grad:
                x._accumulate(g)
            if b.requires_grad:
                b._accumulate(g.sum(axis=reduce_axes))

        out._backward = _bw
    return out


def relu(x: Tensor) -> Tensor:
    out = Tensor._from_op(np.maximum(x.data, 0), (x,), "relu")
    if out.requires_grad:
        mask = x.data > 0

        def _bw(g: np.ndarray) -> None:
            x._accumulate(g * mask)

        out._backward = _bw
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ConfigError(f"add needs matching shapes, got {a.shape} and {b.shape}")
    out = Tensor._from_op(a.data + b.data, (a, b), "add")
    if out.requires_grad:

        def _bw(g: np.ndarray) -> None:
            if a.requires_grad:
                a._accumulate(g)
            if b.requires_grad:
                b._accumulate(g)

        out._backward = _bw
    return out


def scale(x: Tensor, c: float) -> Tensor:
    out = Tensor._from_op(x.data * x.dtype.type(c), (x,), "scale")
    if out.requires_grad:

        def _bw(g: np.ndarray) -> None:
            x._accumulate(g * x.dtype.type(c))

        out._backward = _bw
    return out


def reshape(x: Tensor, shape) -> Tensor:
    out = Tensor._from_op(np.ascontiguousarray(x.data.reshape(shape)), (x,), "reshape")
    if out.requires_grad:
        orig = x.shape

        def _bw(g: np.ndarray) -> None:
            x._accumulate(g.reshape(orig))

        out._backward = _bw
    return out


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    out = Tensor._from_op(np.ascontiguousarray(x.data.transpose(axes)), (x,), "transpose")
    if out.requires_grad:
        inv = tuple(np.argsort(axes))

        def _bw(g: np.ndarray) -> None:
            x._accumulate(g.transpose(inv))

        out._backward = _bw
    return out


def dropout(x: Tensor, p: float, rng: np.random.Generator, train: bool) -> Tensor:
    """Inverted dropout: scales kept units by 1/(1-p) at train time."""
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout probability must be in [0, 1), got {p}")
    if not train or p == 0.0:
        return x
    keep = (rng.random(x.shape) >= p).astype(x.dtype) / x.dtype.type(1.0 - p)
    out = Tensor._from_op(x.data * keep, (x,), "dropout")
    if out.requires_grad:

        def _bw(g: np.ndarray) -> None:
            x._accumulate(g * keep)

        out._backward = _bw
    return out


# ---------------------------------------------------------------------------
# pooling


def maxpool2x2(x: Tensor) -> Tensor:
    """2x2 max pooling with stride 2. Requires even spatial extents."""
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ConfigError(f"maxpool2x2 needs even extents, got {h}x{w}")
    blocks = (
        x.data.reshape(n, c, h // 2, 2, w // 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, h // 2, w // 2, 4)
    )
    idx = np.argmax(blocks, axis=4)  # ties resolve to the first index in scan order
    out_data = np.take_along_axis(blocks, idx[..., None], axis=4)[..., 0]
    out = Tensor._from_op(np.ascontiguousarray(out_data), (x,), "maxpool2x2")
    if out.requires_grad:

        def _bw(g: np.ndarray) -> None:
            gb = np.zeros_like(blocks)
            np.put_along_axis(gb, idx[..., None], g[..., None], axis=4)
            gx = (
                gb.reshape(n, c, h // 2, w // 2, 2, 2)
                .transpose(0, 1, 2, 4, 3, 5)
                .reshape(n, c, h, w)
            )
            x._accumulate(gx)

        out._backward = _bw
    return out


def max_over_axis(x: Tensor, axis: int) -> Tensor:
    """Max-reduce one axis; gradient flows to the first argmax on ties."""
    idx = np.argmax(x.data, axis=axis)
    out_data = np.take_along_axis(x.data, np.expand_dims(idx, axis), axis=axis).squeeze(axis)
    out = Tensor._from_op(np.ascontiguousarray(out_data), (x,), "max_over_axis")
    if out.requires_grad:

        def _bw(g: np.ndarray) -> None:
            gx = np.zeros_like(x.data)
            np.put_along_axis(gx, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis=axis)
            x._accumulate(gx)

        out._backward = _bw
    return out


def global_avgpool(x: Tensor) -> Tensor:
    """Mean over the two trailing spatial axes: [N, C, H, W] -> [N, C]."""
    if x.ndim != 4:
        raise ConfigError("global_avgpool expects a 4-axis tensor")
    n, c, h, w = x.shape
    out = Tensor._from_op(x.data.mean(axis=(2, 3)), (x,), "global_avgpool")
    if out.requires_grad:

        def _bw(g: np.ndarray) -> None:
            x._accumulate(np.broadcast_to(g[:, :, None, None], x.shape) / x.dtype.type(h * w))

        out._backward = _bw
    return out


# ---------------------------------------------------------------------------
# dense


def dense(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map [N, F] @ [F, U] (+ bias)."""
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise ConfigError(f"dense shapes do not agree: {x.shape} @ {weight.shape}")
    out_data = x.data @ weight.data
    if bias is not None:
        out_data = out_data + bias.data
    parents = (x, weight) if bias is None else (x, weight, bias)
    out = Tensor._from_op(out_data, parents, "dense")
    if out.requires_grad:

        def _bw(g: np.ndarray) -> None:
            if x.requires_grad:
                x._accumulate(g @ weight.data.T)
            if weight.requires_grad:
                weight._accumulate(x.data.T @ g)
            if bias is not None and bias.requires_grad:
                bias._accumulate(g.sum(axis=0))

        out._backward = _bw
    return out


# ---------------------------------------------------------------------------
# batch normalization


class BatchNormState:
    """Running statistics of one batchnorm layer, stored in reduced shape."""

    def __init__(self, stat_shape: tuple[int, ...], dtype):
        self.running_mean = np.zeros(stat_shape, dtype=dtype)
        self.running_var = np.ones(stat_shape, dtype=dtype)

    def astype(self, dtype) -> None:
        self.running_mean = self.running_mean.astype(dtype)
        self.running_var = self.running_var.astype(dtype)


def batchnorm_nd(
    x: Tensor,
    gamma: Tensor | None,
    beta: Tensor | None,
    axes: tuple[int, ...],
    state: BatchNormState,
    train: bool,
    eps: float = 1e-5,
    momentum: float = 0.9,
) -> Tensor:
    """Normalize over ``axes`` (batch + spatial, optionally + orientation).

    Train mode standardizes with batch statistics and updates the running
    buffers with decay ``momentum``; eval mode uses the running buffers.
    ``gamma``/``beta`` are optional affine parameters in reduced shape.
    """
    axes = tuple(sorted(axes))
    m = int(np.prod([x.shape[a] for a in axes]))
    if train:
        mu = x.data.mean(axis=axes, keepdims=True)
        var = x.data.var(axis=axes, keepdims=True)
        state.running_mean = momentum * state.running_mean + (1.0 - momentum) * mu
        state.running_var = momentum * state.running_var + (1.0 - momentum) * var
    else:
        mu = state.running_mean
        var = state.running_var
    inv_std = 1.0 / np.sqrt(var + x.dtype.type(eps))
    xhat = (x.data - mu) * inv_std
    out_data = xhat
    if gamma is not None:
        out_data = out_data * gamma.data
    if beta is not None:
        out_data = out_data + beta.data

    parents = tuple(t for t in (x, gamma, beta) if t is not None)
    out = Tensor._from_op(np.ascontiguousarray(out_data), parents, "batchnorm")
    if out.requires_grad:

        def _bw(g: np.ndarray) -> None:
            if beta is not None and beta.requires_grad:
                beta._accumulate(g.sum(axis=axes, keepdims=True))
            if gamma is not None and gamma.requires_grad:
                gamma._accumulate((g * xhat).sum(axis=axes, keepdims=True))
            if not x.requires_grad:
                return
            gxhat = g * gamma.data if gamma is not None else g
            if not train:
                x._accumulate(gxhat * inv_std)
                return
            # Batch statistics depend on x, so fold their gradients back in.
            gvar = (gxhat * (x.data - mu)).sum(axis=axes, keepdims=True) * (-0.5) * inv_std**3
            gmu = (-gxhat * inv_std).sum(axis=axes, keepdims=True) + gvar * (
                -2.0 / m
            ) * (x.data - mu).sum(axis=axes, keepdims=True)
            gx = gxhat * inv_std + gvar * (2.0 / m) * (x.data - mu) + gmu / m
            x._accumulate(gx)

        out._backward = _bw
    return out


# ---------------------------------------------------------------------------
# losses


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy of integer labels under a softmax over axis 1."""
    if logits.ndim != 2:
        raise ConfigError("softmax_cross_entropy expects [N, num_classes] logits")
    labels = np.asarray(labels)
    n = logits.shape[0]
    if labels.shape != (n,):
        raise ConfigError(f"labels must have shape ({n},), got {labels.shape}")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - logsum
    loss = -logp[np.arange(n), labels].mean()
    out = Tensor._from_op(np.asarray(loss, dtype=logits.dtype), (logits,), "softmax_ce")
    if out.requires_grad:
        probs = np.exp(logp)

        def _bw(g: np.ndarray) -> None:
            gl = probs.copy()
            gl[np.arange(n), labels] -= 1.0
            logits._accumulate(gl * (g / n))

        out._backward = _bw
    return out


def sigmoid_binary_cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean elementwise binary cross-entropy on sigmoid logits (stable form)."""
    targets = np.asarray(targets, dtype=logits.dtype)
    if targets.shape != logits.shape:
        raise ConfigError("targets must match logits shape")
    z = logits.data
    loss = np.maximum(z, 0) - z * targets + np.log1p(np.exp(-np.abs(z)))
    out = Tensor._from_op(np.asarray(loss.mean(), dtype=logits.dtype), (logits,), "sigmoid_bce")
    if out.requires_grad:
        size = z.size

        def _bw(g: np.ndarray) -> None:
            sig = 1.0 / (1.0 + np.exp(-z))
            logits._accumulate((sig - targets) * (g / size))

        out._backward = _bw
    return out
