"""Differentiable primitives.

Each function computes its forward value with numpy and hands ``record`` a
closure that maps the upstream gradient to one gradient per parent. Only the
broadcasting forms listed here are supported: bias over a batch, a
single-channel mask over colour channels, and per-channel input statistics.
"""

from typing import Optional, Sequence

import numpy as np

from ..errors import ShapeError, ValidationError
from .tensor import Tensor, as_tensor, record

NORM_EPS = 1e-5
L2_EPS = 1e-8


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(op, a.shape, b.shape)


# -- elementwise -------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    return record(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("sub", a, b)
    return record(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("mul", a, b)
    a_data, b_data = a.data, b.data
    return record(a_data * b_data, (a, b), lambda g: (g * b_data, g * a_data), "mul")


def scale(x: Tensor, factor: float, shift: float = 0.0) -> Tensor:
    """``factor * x + shift`` for Python scalars."""
    out = x.data * x.data.dtype.type(factor)
    if shift:
        out = out + x.data.dtype.type(shift)
    return record(out, (x,), lambda g: (g * x.data.dtype.type(factor),), "scale")


def neg(x: Tensor) -> Tensor:
    return scale(x, -1.0)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ValidationError("concat needs at least one tensor")
    ndim = tensors[0].ndim
    axis = axis % ndim
    for t in tensors[1:]:
        other = [d for i, d in enumerate(t.shape) if i != axis]
        first = [d for i, d in enumerate(tensors[0].shape) if i != axis]
        if t.ndim != ndim or other != first:
            raise ShapeError("concat", tensors[0].shape, t.shape, detail=f"axis={axis}")
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def backward(g):
        return np.split(g, bounds, axis=axis)

    return record(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward, "concat")


def sum(x: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    shape = x.shape

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return record(np.asarray(x.data.sum(axis=axis, keepdims=keepdims)), (x,), backward, "sum")


def mean(x: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    count = x.size if axis is None else x.shape[axis]
    return scale(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def abs_mean(x: Tensor) -> Tensor:
    """Mean absolute value; the subgradient at zero is zero."""
    sign = np.sign(x.data)
    count = x.size
    out = np.asarray(np.abs(x.data).mean(dtype=x.data.dtype))
    return record(out, (x,), lambda g: (sign * (g / count),), "abs_mean")


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    original = x.shape
    return record(x.data.reshape(shape), (x,), lambda g: (g.reshape(original),), "reshape")


def transpose(x: Tensor) -> Tensor:
    if x.ndim != 2:
        raise ShapeError("transpose", x.shape, detail="expects a matrix")
    return record(x.data.T.copy(), (x,), lambda g: (g.T,), "transpose")


# -- linear ------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    a_data, b_data = a.data, b.data
    return record(a_data @ b_data, (a, b), lambda g: (g @ b_data.T, a_data.T @ g), "matmul")


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """``x @ w + b`` with ``b`` broadcast over the batch."""
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeError("affine", x.shape, w.shape, detail="inner extents differ")
    if b.shape != (w.shape[1],):
        raise ShapeError("affine", w.shape, b.shape, detail="bias must match output width")
    x_data, w_data = x.data, w.data

    def backward(g):
        return g @ w_data.T, x_data.T @ g, g.sum(axis=0)

    return record(x_data @ w_data + b.data, (x, w, b), backward, "affine")


def conv2d(x: Tensor, k: Tensor, bias: Optional[Tensor] = None, stride: int = 1, pad: int = 0) -> Tensor:
    """Cross-correlation of ``x[B,C,H,W]`` with ``k[F,C,kh,kw]`` and zero padding.

    Accumulates one tensordot per kernel offset over strided windows, so memory
    stays at one window instead of a full im2col matrix.
    """
    if x.ndim != 4 or k.ndim != 4 or k.shape[1] != x.shape[1]:
        raise ShapeError("conv2d", x.shape, k.shape, detail="channel extents differ")
    if stride < 1 or pad < 0:
        raise ValidationError(f"conv2d: stride must be >= 1 and pad >= 0 (got stride={stride}, pad={pad})")
    batch, channels, height, width = x.shape
    filters, _, kh, kw = k.shape
    padded_h, padded_w = height + 2 * pad, width + 2 * pad
    if kh > padded_h or kw > padded_w:
        raise ShapeError("conv2d", x.shape, k.shape, detail="kernel larger than padded input")
    out_h = (padded_h - kh) // stride + 1
    out_w = (padded_w - kw) // stride + 1

    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    kernel = k.data

    def window(i, j):
        return (slice(None), slice(None),
                slice(i, i + stride * (out_h - 1) + 1, stride),
                slice(j, j + stride * (out_w - 1) + 1, stride))

    out = np.zeros((batch, out_h, out_w, filters), dtype=xp.dtype)
    for i in range(kh):
        for j in range(kw):
            out += np.tensordot(xp[window(i, j)], kernel[:, :, i, j], axes=([1], [1]))
    out = out.transpose(0, 3, 1, 2)
    if bias is not None:
        if bias.shape != (filters,):
            raise ShapeError("conv2d", k.shape, bias.shape, detail="bias must match filter count")
        out = out + bias.data[None, :, None, None]

    def backward(g):
        g_last = g.transpose(0, 2, 3, 1)
        dxp = np.zeros_like(xp)
        dk = np.zeros_like(kernel)
        for i in range(kh):
            for j in range(kw):
                region = window(i, j)
                dk[:, :, i, j] = np.tensordot(g_last, xp[region], axes=([0, 1, 2], [0, 2, 3]))
                dxp[region] += np.tensordot(g_last, kernel[:, :, i, j], axes=([3], [0])).transpose(0, 3, 1, 2)
        dx = dxp[:, :, pad:pad + height, pad:pad + width]
        if bias is None:
            return dx, dk
        return dx, dk, g.sum(axis=(0, 2, 3))

    parents = (x, k) if bias is None else (x, k, bias)
    return record(np.ascontiguousarray(out), parents, backward, "conv2d")


def nearest_upsample(x: Tensor, factor: int = 2) -> Tensor:
    if x.ndim != 4:
        raise ShapeError("nearest_upsample", x.shape, detail="expects B,C,H,W")
    if factor < 1:
        raise ValidationError(f"nearest_upsample: factor must be >= 1 (got {factor})")
    batch, channels, height, width = x.shape
    out = x.data.repeat(factor, axis=2).repeat(factor, axis=3)

    def backward(g):
        return (g.reshape(batch, channels, height, factor, width, factor).sum(axis=(3, 5)),)

    return record(out, (x,), backward, "nearest_upsample")


# -- nonlinearities ----------------------------------------------------------

def sigmoid(x: Tensor) -> Tensor:
    s = np.exp(-np.logaddexp(0, -x.data)).astype(x.data.dtype, copy=False)
    return record(s, (x,), lambda g: (g * s * (1 - s),), "sigmoid")


def relu(x: Tensor) -> Tensor:
    active = x.data > 0
    return record(np.where(active, x.data, 0).astype(x.data.dtype), (x,), lambda g: (g * active,), "relu")


def activation(x: Tensor, kind: str) -> Tensor:
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "relu":
        return relu(x)
    raise ValidationError(f"Unknown activation '{kind}' (expected sigmoid or relu)")


# -- normalization -----------------------------------------------------------

def _standardize(grouped: np.ndarray, eps: float):
    centered = grouped - grouped.mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt((centered ** 2).mean(axis=-1, keepdims=True) + eps)
    return centered * inv_std, inv_std


def _standardize_grad(d_hat: np.ndarray, x_hat: np.ndarray, inv_std: np.ndarray) -> np.ndarray:
    return inv_std * (d_hat - d_hat.mean(axis=-1, keepdims=True)
                      - x_hat * (d_hat * x_hat).mean(axis=-1, keepdims=True))


def _normalize(x: Tensor, grouped_shape, affine_shape, gamma, beta, op, reduce_axes):
    x_hat_g, inv_std = _standardize(x.data.reshape(grouped_shape), NORM_EPS)
    x_hat = x_hat_g.reshape(x.shape).astype(x.data.dtype, copy=False)
    gamma_b = None if gamma is None else gamma.data.reshape(affine_shape)
    out = x_hat if gamma_b is None else x_hat * gamma_b
    if beta is not None:
        out = out + beta.data.reshape(affine_shape)

    def backward(g):
        d_hat = g if gamma_b is None else g * gamma_b
        dx = _standardize_grad(d_hat.reshape(grouped_shape), x_hat_g, inv_std).reshape(x.shape)
        grads = [dx]
        if gamma is not None:
            grads.append((g * x_hat).sum(axis=reduce_axes))
        if beta is not None:
            grads.append(g.sum(axis=reduce_axes))
        return grads

    parents = [x] + [p for p in (gamma, beta) if p is not None]
    return record(out, tuple(parents), backward, op)


def group_norm(x: Tensor, groups: int, gamma: Optional[Tensor] = None, beta: Optional[Tensor] = None) -> Tensor:
    if x.ndim != 4:
        raise ShapeError("group_norm", x.shape, detail="expects B,C,H,W")
    batch, channels = x.shape[:2]
    if groups < 1 or channels % groups:
        raise ValidationError(f"group_norm: {groups} groups do not divide {channels} channels")
    return _normalize(x, (batch, groups, -1), (1, channels, 1, 1), gamma, beta, "group_norm", (0, 2, 3))


def layer_norm(x: Tensor, gamma: Optional[Tensor] = None, beta: Optional[Tensor] = None) -> Tensor:
    if x.ndim != 2:
        raise ShapeError("layer_norm", x.shape, detail="expects B,D")
    return _normalize(x, x.shape, (1, x.shape[1]), gamma, beta, "layer_norm", (0,))


def normalize(x: Tensor, kind: str, gamma: Optional[Tensor] = None, beta: Optional[Tensor] = None,
              groups: int = 1) -> Tensor:
    if kind == "group":
        return group_norm(x, groups, gamma, beta)
    if kind == "layer":
        return layer_norm(x, gamma, beta)
    raise ValidationError(f"Unknown normalization '{kind}' (expected group or layer)")


def standardize_channels(x: Tensor, channel_mean: np.ndarray, channel_std: np.ndarray) -> Tensor:
    """``(x - mean[c]) / std[c]`` with constant per-channel statistics."""
    if x.ndim != 4 or channel_mean.shape != (x.shape[1],) or channel_std.shape != (x.shape[1],):
        raise ShapeError("standardize_channels", x.shape, channel_mean.shape, channel_std.shape)
    dtype = x.data.dtype
    inv = (1.0 / channel_std).astype(dtype).reshape(1, -1, 1, 1)
    shift = channel_mean.astype(dtype).reshape(1, -1, 1, 1)
    return record((x.data - shift) * inv, (x,), lambda g: (g * inv,), "standardize_channels")


def l2_normalize(x: Tensor, eps: float = L2_EPS) -> Tensor:
    """Row-wise ``x / (|x| + eps)`` for a B,D matrix."""
    if x.ndim != 2:
        raise ShapeError("l2_normalize", x.shape, detail="expects B,D")
    norm = np.sqrt((x.data ** 2).sum(axis=1, keepdims=True))
    denom = norm + eps
    out = x.data / denom

    def backward(g):
        projection = (g * x.data).sum(axis=1, keepdims=True)
        return (g / denom - x.data * projection / (denom ** 2 * np.maximum(norm, np.finfo(x.data.dtype).tiny)),)

    return record(out, (x,), backward, "l2_normalize")


# -- graph control -----------------------------------------------------------

def stop_gradient(x: Tensor) -> Tensor:
    """Forward identity; the result is a constant leaf."""
    return Tensor(x.data.copy())


# -- reductions and indexing -------------------------------------------------

def logsumexp(x: Tensor, axis: int = 1) -> Tensor:
    peak = x.data.max(axis=axis, keepdims=True)
    shifted = np.exp(x.data - peak)
    total = shifted.sum(axis=axis, keepdims=True)
    out = np.squeeze(peak + np.log(total), axis=axis)
    softmax = shifted / total
    return record(out, (x,), lambda g: (np.expand_dims(g, axis) * softmax,), "logsumexp")


def gather_cols(x: Tensor, index: np.ndarray) -> Tensor:
    """Pick ``x[b, index[b, j]]`` into a B,K matrix."""
    index = np.asarray(index, dtype=np.int64)
    if x.ndim != 2 or index.ndim != 2 or index.shape[0] != x.shape[0]:
        raise ShapeError("gather_cols", x.shape, index.shape)
    if index.size and (index.min() < 0 or index.max() >= x.shape[1]):
        raise ValidationError(f"gather_cols: column index out of range [0, {x.shape[1]})")
    rows = np.arange(x.shape[0])[:, None]

    def backward(g):
        dx = np.zeros_like(x.data)
        np.add.at(dx, (np.broadcast_to(rows, index.shape), index), g)
        return (dx,)

    return record(x.data[rows, index], (x,), backward, "gather_cols")


def take_rows(x: Tensor, order: np.ndarray) -> Tensor:
    """Reorder the leading axis; gradients follow the permutation back."""
    order = np.asarray(order, dtype=np.int64)
    if order.shape != (x.shape[0],):
        raise ShapeError("take_rows", x.shape, order.shape)

    def backward(g):
        dx = np.zeros_like(x.data)
        np.add.at(dx, order, g)
        return (dx,)

    return record(x.data[order], (x,), backward, "take_rows")


def broadcast_channels(mask: Tensor, channels: int) -> Tensor:
    if mask.ndim != 4 or mask.shape[1] != 1:
        raise ShapeError("broadcast_channels", mask.shape, detail="expects B,1,H,W")
    out = np.repeat(mask.data, channels, axis=1)
    return record(out, (mask,), lambda g: (g.sum(axis=1, keepdims=True),), "broadcast_channels")


def convex_mix(x: Tensor, mask: Tensor, noise: Tensor) -> Tensor:
    """``mask * x + (1 - mask) * noise`` with ``noise`` held constant.

    ``mask`` either matches ``x`` or is B,1,H,W against a B,C,H,W input.
    """
    if noise.shape != x.shape:
        raise ShapeError("convex_mix", x.shape, noise.shape, detail="noise must match input")
    channel_broadcast = x.ndim == 4 and mask.shape == (x.shape[0], 1) + x.shape[2:]
    if mask.shape != x.shape and not channel_broadcast:
        raise ShapeError("convex_mix", x.shape, mask.shape, detail="mask must match input or be single-channel")
    m, xd, nd = mask.data, x.data, noise.data
    out = m * xd + (1 - m) * nd

    def backward(g):
        dm = g * (xd - nd)
        if channel_broadcast:
            dm = dm.sum(axis=1, keepdims=True)
        return g * m, dm

    return record(out, (x, mask), backward, "convex_mix")


def one_hot(labels: np.ndarray, depth: int) -> Tensor:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= depth):
        raise ValidationError(f"Action id out of range [0, {depth}): {labels.min()}..{labels.max()}")
    out = np.zeros((labels.shape[0], depth))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return as_tensor(out)
