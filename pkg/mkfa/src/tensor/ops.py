"""
Differentiable ops over N×C×H×W tensors

Each op validates shapes, computes its value with numpy and registers a
vector-Jacobian product through `record_op`. Reductions accumulate in float64
and are rounded once to the storage dtype.
"""
import math
from typing import List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import as_strided
from scipy.special import expit, ndtr

from ..utils.errors import ShapeError
from .core import Tensor, record_op

Pair = Union[int, Tuple[int, int]]
ActivationKind = Literal['silu', 'gelu', 'sigmoid', 'relu']
ElementwiseKind = Literal['add', 'sub', 'mul']

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _pair(value: Pair, name: str) -> Tuple[int, int]:
    if isinstance(value, int):
        return value, value
    if len(value) != 2:
        raise ShapeError(f"{name} must be an int or a pair, got {value!r}")
    return int(value[0]), int(value[1])


def _require_rank(x: Tensor, rank: int, what: str) -> None:
    if x.ndim != rank:
        raise ShapeError(f"{what}: expected rank {rank}, got shape {x.shape}")


def conv_output_size(size: int, kernel: int, stride: int, padding: int, dilation: int) -> int:
    return (size + 2 * padding - dilation * (kernel - 1) - 1) // stride + 1


def _patches(xp: np.ndarray, kh: int, kw: int, ho: int, wo: int,
             stride: Tuple[int, int], dilation: Tuple[int, int]) -> np.ndarray:
    """Read-only N×C×Ho×Wo×Kh×Kw window view of a padded input"""
    n, c = xp.shape[:2]
    s_n, s_c, s_h, s_w = xp.strides
    return as_strided(
        xp,
        shape=(n, c, ho, wo, kh, kw),
        strides=(s_n, s_c, stride[0] * s_h, stride[1] * s_w, dilation[0] * s_h, dilation[1] * s_w),
        writeable=False,
    )


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    stride: Pair = 1,
    padding: Pair = 0,
    dilation: Pair = 1,
    groups: int = 1,
) -> Tensor:
    """
    2-D cross-correlation with grouped channels

    Args:
        x: N×Cin×H×W input
        weight: Cout×(Cin/groups)×Kh×Kw
        bias: optional Cout vector
        groups: groups=Cin gives a depthwise conv

    Returns:
        N×Cout×Ho×Wo tensor
    """
    sh, sw = _pair(stride, "stride")
    ph, pw = _pair(padding, "padding")
    dh, dw = _pair(dilation, "dilation")
    _require_rank(x, 4, "conv2d input")
    _require_rank(weight, 4, "conv2d weight")
    n, c_in, h, w = x.shape
    c_out, c_group, kh, kw = weight.shape

    if groups < 1:
        raise ShapeError(f"conv2d: groups must be positive, got {groups}")
    if c_in % groups:
        raise ShapeError(f"conv2d: input channels {c_in} not divisible by groups={groups}")
    if c_out % groups:
        raise ShapeError(f"conv2d: output channels {c_out} not divisible by groups={groups}")
    if c_group != c_in // groups:
        raise ShapeError(
            f"conv2d: weight expects {c_group} input channels per group, input provides {c_in // groups}"
        )
    if bias is not None and bias.shape != (c_out,):
        raise ShapeError(f"conv2d: bias shape {bias.shape} does not match output channels {c_out}")
    if min(sh, sw) < 1:
        raise ShapeError(f"conv2d: stride must be positive, got {(sh, sw)}")
    if min(dh, dw) < 1:
        raise ShapeError(f"conv2d: dilation must be positive, got {(dh, dw)}")
    if min(ph, pw) < 0:
        raise ShapeError(f"conv2d: padding must be non-negative, got {(ph, pw)}")

    ho = conv_output_size(h, kh, sh, ph, dh)
    wo = conv_output_size(w, kw, sw, pw, dw)
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} (dilation {(dh, dw)}) does not fit input {h}x{w}")

    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x.data
    cols = _patches(xp, kh, kw, ho, wo, (sh, sw), (dh, dw))
    wd = weight.data
    c_out_group = c_out // groups

    if groups == 1:
        out = np.tensordot(cols, wd, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    else:
        cols_g = cols.reshape(n, groups, c_group, ho, wo, kh, kw)
        w_g = wd.reshape(groups, c_out_group, c_group, kh, kw)
        out = np.einsum('ngchwkl,gockl->ngohw', cols_g, w_g).reshape(n, c_out, ho, wo)
    if bias is not None:
        out = out + bias.data.reshape(1, c_out, 1, 1)

    def vjp(g: np.ndarray):
        if groups == 1:
            grad_w = np.tensordot(g, cols, axes=([0, 2, 3], [0, 2, 3]))
            grad_cols = np.tensordot(g, wd, axes=([1], [0])).transpose(0, 3, 1, 2, 4, 5)
        else:
            g_g = g.reshape(n, groups, c_out_group, ho, wo)
            grad_w = np.einsum('ngohw,ngchwkl->gockl', g_g, cols_g).reshape(wd.shape)
            grad_cols = np.einsum('ngohw,gockl->ngchwkl', g_g, w_g).reshape(n, c_in, ho, wo, kh, kw)

        grad_xp = np.zeros(xp.shape, dtype=g.dtype)
        for i in range(kh):
            for j in range(kw):
                top, left = i * dh, j * dw
                grad_xp[:, :, top:top + sh * (ho - 1) + 1:sh, left:left + sw * (wo - 1) + 1:sw] += grad_cols[..., i, j]
        grad_x = grad_xp[:, :, ph:ph + h, pw:pw + w]

        if bias is None:
            return grad_x, grad_w
        return grad_x, grad_w, g.sum(axis=(0, 2, 3))

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return record_op('conv2d', inputs, out, vjp)


def activation(kind: ActivationKind, x: Tensor) -> Tensor:
    """Elementwise nonlinearity; GELU is the exact x·Φ(x)"""
    v = x.data
    if kind == 'relu':
        out = np.maximum(v, 0)
        deriv = (v > 0).astype(v.dtype)
    elif kind == 'sigmoid':
        s = expit(v)
        out = s
        deriv = s * (1 - s)
    elif kind == 'silu':
        s = expit(v)
        out = v * s
        deriv = s + v * s * (1 - s)
    elif kind == 'gelu':
        cdf = ndtr(v)
        out = v * cdf
        deriv = cdf + v * np.exp(-0.5 * v * v) * _INV_SQRT_2PI
    else:
        raise ValueError(f"unknown activation '{kind}'")

    return record_op(kind, (x,), out, lambda g: (g * deriv,))


def norm_channels(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-6) -> Tensor:
    """Standardize across C at every (n, h, w), then apply a per-channel affine"""
    if eps <= 0:
        raise ValueError(f"norm_channels: eps must be positive, got {eps}")
    _require_rank(x, 4, "norm_channels input")
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(
            f"norm_channels: gamma {gamma.shape} / beta {beta.shape} must both have length C={c}"
        )

    v = x.data.astype(np.float64)
    centered = v - v.mean(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=1, keepdims=True) + eps)
    xhat = centered * inv_std
    g4 = gamma.data.astype(np.float64).reshape(1, c, 1, 1)
    out = xhat * g4 + beta.data.astype(np.float64).reshape(1, c, 1, 1)

    def vjp(g: np.ndarray):
        g64 = g.astype(np.float64)
        gh = g64 * g4
        grad_x = inv_std * (
            gh - gh.mean(axis=1, keepdims=True) - xhat * (gh * xhat).mean(axis=1, keepdims=True)
        )
        return grad_x, (g64 * xhat).sum(axis=(0, 2, 3)), g64.sum(axis=(0, 2, 3))

    return record_op('norm_channels', (x, gamma, beta), out, vjp)


def split_channels(x: Tensor, sizes: Sequence[int]) -> List[Tensor]:
    """Contiguous channel slabs, in order"""
    _require_rank(x, 4, "split_channels input")
    c = x.shape[1]
    if any(s <= 0 for s in sizes):
        raise ShapeError(f"split_channels: sizes must be positive, got {list(sizes)}")
    if sum(sizes) != c:
        raise ShapeError(f"split_channels: sizes {list(sizes)} sum to {sum(sizes)}, input has C={c}")

    parts = []
    start = 0
    for size in sizes:
        stop = start + size

        def vjp(g: np.ndarray, start=start, stop=stop):
            grad = np.zeros(x.shape, dtype=g.dtype)
            grad[:, start:stop] = g
            return (grad,)

        parts.append(record_op('split_channels', (x,), x.data[:, start:stop], vjp))
        start = stop
    return parts


def concat_channels(parts: Sequence[Tensor]) -> Tensor:
    if not parts:
        raise ShapeError("concat_channels: no parts given")
    for part in parts:
        _require_rank(part, 4, "concat_channels part")
    first = parts[0].shape
    for index, part in enumerate(parts[1:], start=1):
        if (part.shape[0], part.shape[2], part.shape[3]) != (first[0], first[2], first[3]):
            raise ShapeError(
                f"concat_channels: part {index} has N×H×W {part.shape[0]}×{part.shape[2]}×{part.shape[3]}, "
                f"expected {first[0]}×{first[2]}×{first[3]}"
            )

    bounds = np.cumsum([0] + [p.shape[1] for p in parts])
    out = np.concatenate([p.data for p in parts], axis=1)

    def vjp(g: np.ndarray):
        return tuple(g[:, bounds[i]:bounds[i + 1]] for i in range(len(parts)))

    return record_op('concat_channels', tuple(parts), out, vjp)


def spatial_mean(x: Tensor) -> Tensor:
    """Per-(n, c) mean over H×W, shape N×C×1×1"""
    _require_rank(x, 4, "spatial_mean input")
    n, c, h, w = x.shape
    if h * w < 1:
        raise ShapeError(f"spatial_mean: empty spatial extent {h}x{w}")
    out = x.data.astype(np.float64).mean(axis=(2, 3), keepdims=True)

    def vjp(g: np.ndarray):
        return (np.broadcast_to(g / (h * w), x.shape).copy(),)

    return record_op('spatial_mean', (x,), out, vjp)


def _broadcastable(a_shape: Tuple[int, ...], b_shape: Tuple[int, ...]) -> bool:
    if a_shape == b_shape:
        return True
    if len(a_shape) != 4 or len(b_shape) != 4:
        return False
    n, c = a_shape[:2]
    return b_shape in ((n, c, 1, 1), (1, c, 1, 1))


def _reduce_to(g: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    return g.sum(axis=axes, keepdims=True)


def elementwise(kind: ElementwiseKind, a: Tensor, b: Tensor) -> Tensor:
    """a (op) b with b equal-shaped or a per-channel N×C×1×1 / 1×C×1×1 map"""
    if not _broadcastable(a.shape, b.shape):
        raise ShapeError(f"elementwise {kind}: incompatible shapes {a.shape} and {b.shape}")
    av, bv = a.data, b.data

    if kind == 'add':
        out = av + bv

        def vjp(g):
            return g, _reduce_to(g, b.shape)
    elif kind == 'sub':
        out = av - bv

        def vjp(g):
            return g, -_reduce_to(g, b.shape)
    elif kind == 'mul':
        out = av * bv

        def vjp(g):
            return g * bv, _reduce_to(g * av, b.shape)
    else:
        raise ValueError(f"unknown elementwise kind '{kind}'")

    return record_op(kind, (a, b), out, vjp)


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Flatten x to N×F and apply x @ W + b with W of shape F×K"""
    n = x.shape[0]
    flat = x.data.reshape(n, -1)
    _require_rank(weight, 2, "linear weight")
    f, k = weight.shape
    if flat.shape[1] != f:
        raise ShapeError(f"linear: input has {flat.shape[1]} features, weight expects F={f}")
    if bias.shape != (k,):
        raise ShapeError(f"linear: bias shape {bias.shape} does not match K={k}")
    out = flat @ weight.data + bias.data

    def vjp(g: np.ndarray):
        return (g @ weight.data.T).reshape(x.shape), flat.T @ g, g.sum(axis=0)

    return record_op('linear', (x, weight, bias), out, vjp)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits.astype(np.float64)
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits.astype(np.float64)
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy_smoothed(logits: Tensor, labels: Sequence[int], epsilon: float = 0.0) -> Tensor:
    """Mean smoothed NLL with target (1-ε)·onehot + ε/K"""
    _require_rank(logits, 2, "cross_entropy_smoothed logits")
    n, k = logits.shape
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (n,):
        raise ShapeError(f"cross_entropy_smoothed: {labels.shape[0] if labels.ndim else 0} labels for {n} rows")
    if not 0.0 <= epsilon < 1.0:
        raise ValueError(f"cross_entropy_smoothed: epsilon must be in [0, 1), got {epsilon}")
    bad = np.flatnonzero((labels < 0) | (labels >= k))
    if bad.size:
        raise ValueError(f"cross_entropy_smoothed: label {labels[bad[0]]} at row {bad[0]} outside [0, {k})")

    logp = log_softmax(logits.data)
    target = np.full((n, k), epsilon / k)
    target[np.arange(n), labels] += 1.0 - epsilon
    loss = -(target * logp).sum() / n

    def vjp(g: np.ndarray):
        return (g * (np.exp(logp) - target) / n,)

    return record_op('cross_entropy_smoothed', (logits,), np.asarray(loss), vjp)


def sum_all(x: Tensor) -> Tensor:
    out = np.asarray(x.data.sum(dtype=np.float64))
    return record_op('sum_all', (x,), out, lambda g: (np.full(x.shape, g, dtype=g.dtype),))


def select_logit(logits: Tensor, k: int) -> Tensor:
    """Σ_n logits[n, k], the scalar head used for class-gradient maps"""
    _require_rank(logits, 2, "select_logit logits")
    if not 0 <= k < logits.shape[1]:
        raise ShapeError(f"select_logit: class {k} outside [0, {logits.shape[1]})")
    out = np.asarray(logits.data[:, k].sum(dtype=np.float64))

    def vjp(g: np.ndarray):
        grad = np.zeros(logits.shape, dtype=g.dtype)
        grad[:, k] = g
        return (grad,)

    return record_op('select_logit', (logits,), out, vjp)
