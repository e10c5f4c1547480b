"""Differentiable primitives over rank-4 tensors.

Each primitive computes its forward value with numpy and registers a backward
rule on the active tape. Backward rules work on raw ndarrays and must never
invoke other primitives, so replaying a tape cannot re-record.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from ..errors import ContractError, DimensionError
from .tensor import Tensor, active_tape, record_op

# Floor applied inside arccos' derivative; keeps the composite color-angle
# gradient bounded as the two vectors align (where d(dot)/dx -> 0 anyway).
_ACOS_GRAD_FLOOR = 1e-12


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient down to ``shape``, undoing numpy broadcasting over size-1 axes."""
    if grad.shape == shape:
        return grad
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    return grad.sum(axis=axes, keepdims=True)


def _check_broadcastable(a: Tensor, b: Tensor, op: str) -> None:
    for da, db in zip(a.shape, b.shape):
        if da != db and da != 1 and db != 1:
            raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} are not broadcast-compatible")


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcastable(a, b, "add")
    out = Tensor(a.data + b.data, dtype=np.result_type(a.data, b.data))
    return record_op("add", out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcastable(a, b, "sub")
    out = Tensor(a.data - b.data, dtype=np.result_type(a.data, b.data))
    return record_op("sub", out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcastable(a, b, "mul")
    out = Tensor(a.data * b.data, dtype=np.result_type(a.data, b.data))
    return record_op(
        "mul", out, (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def div(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcastable(a, b, "div")
    out = Tensor(a.data / b.data, dtype=np.result_type(a.data, b.data))
    return record_op(
        "div", out, (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        ),
    )


def scale(x: Tensor, c: float) -> Tensor:
    out = Tensor(x.data * c, dtype=x.data.dtype)
    return record_op("scale", out, (x,), lambda g: (g * c,))


def add_scalar(x: Tensor, c: float) -> Tensor:
    out = Tensor(x.data + c, dtype=x.data.dtype)
    return record_op("add_scalar", out, (x,), lambda g: (g,))


def pow_elementwise(base: Tensor, exponent: Tensor) -> Tensor:
    """base ** exponent, elementwise. Base must be strictly positive so the
    exponent gradient base**e * ln(base) is finite; callers clamp first."""
    _check_broadcastable(base, exponent, "pow_elementwise")
    out_data = np.power(base.data, exponent.data)
    out = Tensor(out_data, dtype=np.result_type(base.data, exponent.data))

    def grad_fn(g):
        gb = _unbroadcast(g * exponent.data * np.power(base.data, exponent.data - 1.0), base.shape)
        ge = _unbroadcast(g * out_data * np.log(base.data), exponent.shape)
        return gb, ge

    return record_op("pow", out, (base, exponent), grad_fn)


def absolute(x: Tensor) -> Tensor:
    out = Tensor(np.abs(x.data), dtype=x.data.dtype)
    return record_op("abs", out, (x,), lambda g: (g * np.sign(x.data),))


def sqrt(x: Tensor) -> Tensor:
    out_data = np.sqrt(x.data)
    out = Tensor(out_data, dtype=x.data.dtype)
    return record_op("sqrt", out, (x,), lambda g: (g / (2.0 * out_data),))


def clamp(x: Tensor, lo: float | None = None, hi: float | None = None) -> Tensor:
    out = Tensor(np.clip(x.data, lo, hi), dtype=x.data.dtype)
    inside = np.ones_like(x.data, dtype=bool)
    if lo is not None:
        inside &= x.data >= lo
    if hi is not None:
        inside &= x.data <= hi
    return record_op("clamp", out, (x,), lambda g: (np.where(inside, g, 0.0),))


def arccos(x: Tensor) -> Tensor:
    """arccos with the input clipped into [-1, 1] before evaluation."""
    v = np.clip(x.data, -1.0, 1.0)
    out = Tensor(np.arccos(v), dtype=x.data.dtype)

    def grad_fn(g):
        denom = np.sqrt(np.maximum(1.0 - v * v, _ACOS_GRAD_FLOOR))
        return (-g / denom,)

    return record_op("arccos", out, (x,), grad_fn)


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------

def sigmoid(x: Tensor) -> Tensor:
    s = expit(x.data)
    out = Tensor(s, dtype=x.data.dtype)
    return record_op("sigmoid", out, (x,), lambda g: (g * s * (1.0 - s),))


def lrelu(x: Tensor, slope: float = 0.2) -> Tensor:
    pos = x.data >= 0
    out = Tensor(np.where(pos, x.data, slope * x.data), dtype=x.data.dtype)
    return record_op("lrelu", out, (x,), lambda g: (np.where(pos, g, slope * g),))


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------

def mean(x: Tensor) -> Tensor:
    out = Tensor(np.full((1, 1, 1, 1), x.data.mean(), dtype=x.data.dtype), dtype=x.data.dtype)
    n = x.data.size
    return record_op("mean", out, (x,), lambda g: (np.broadcast_to(g / n, x.shape).copy(),))


def sum_sq_norm(x: Tensor) -> Tensor:
    """Sum of squared entries, as a scalar tensor."""
    val = np.square(x.data).sum()
    out = Tensor(np.full((1, 1, 1, 1), val, dtype=x.data.dtype), dtype=x.data.dtype)
    return record_op("sum_sq_norm", out, (x,), lambda g: (2.0 * g * x.data,))


def sum_channels(x: Tensor) -> Tensor:
    """Reduce the channel axis, keeping it as size 1."""
    out = Tensor(x.data.sum(axis=1, keepdims=True), dtype=x.data.dtype)
    return record_op(
        "sum_channels", out, (x,),
        lambda g: (np.broadcast_to(g, x.shape).copy(),),
    )


# ---------------------------------------------------------------------------
# structure
# ---------------------------------------------------------------------------

def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise DimensionError(f"concat_channels: non-channel dims differ, {a.shape} vs {b.shape}")
    out = Tensor(np.concatenate([a.data, b.data], axis=1), dtype=np.result_type(a.data, b.data))
    ca = a.shape[1]
    return record_op("concat", out, (a, b), lambda g: (g[:, :ca], g[:, ca:]))


def avgpool2(x: Tensor) -> Tensor:
    B, C, H, W = x.shape
    if H % 2 or W % 2:
        raise DimensionError(f"avgpool2 needs even spatial extents, got {H}x{W}")
    out = Tensor(x.data.reshape(B, C, H // 2, 2, W // 2, 2).mean(axis=(3, 5)), dtype=x.data.dtype)

    def grad_fn(g):
        gx = np.repeat(np.repeat(g, 2, axis=2), 2, axis=3)
        return (gx * 0.25,)

    return record_op("avgpool2", out, (x,), grad_fn)


def resize_nearest2x(x: Tensor) -> Tensor:
    out = Tensor(np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3), dtype=x.data.dtype)
    B, C, H, W = x.shape

    def grad_fn(g):
        return (g.reshape(B, C, H, 2, W, 2).sum(axis=(3, 5)),)

    return record_op("resize2x", out, (x,), grad_fn)


def forward_diff_x(x: Tensor) -> Tensor:
    """Forward difference along width; the last column is zero-padded."""
    d = np.zeros_like(x.data)
    d[..., :-1] = x.data[..., 1:] - x.data[..., :-1]
    out = Tensor(d, dtype=x.data.dtype)

    def grad_fn(g):
        gx = np.zeros_like(x.data)
        gx[..., 1:] += g[..., :-1]
        gx[..., :-1] -= g[..., :-1]
        return (gx,)

    return record_op("dx", out, (x,), grad_fn)


def forward_diff_y(x: Tensor) -> Tensor:
    """Forward difference along height; the last row is zero-padded."""
    d = np.zeros_like(x.data)
    d[..., :-1, :] = x.data[..., 1:, :] - x.data[..., :-1, :]
    out = Tensor(d, dtype=x.data.dtype)

    def grad_fn(g):
        gx = np.zeros_like(x.data)
        gx[..., 1:, :] += g[..., :-1, :]
        gx[..., :-1, :] -= g[..., :-1, :]
        return (gx,)

    return record_op("dy", out, (x,), grad_fn)


def layer_norm(x: Tensor, scale_p: Tensor, shift_p: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each batch element over (C, H, W), then apply a per-channel
    affine. Scale and shift are shaped (1, C, 1, 1)."""
    C = x.shape[1]
    if scale_p.shape != (1, C, 1, 1) or shift_p.shape != (1, C, 1, 1):
        raise DimensionError(
            f"layer_norm affine must be (1,{C},1,1); got {scale_p.shape} and {shift_p.shape}"
        )
    axes = (1, 2, 3)
    mu = x.data.mean(axis=axes, keepdims=True)
    var = x.data.var(axis=axes, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv_std
    out = Tensor(xhat * scale_p.data + shift_p.data, dtype=x.data.dtype)

    def grad_fn(g):
        dshift = g.sum(axis=(0, 2, 3), keepdims=True)
        dscale = (g * xhat).sum(axis=(0, 2, 3), keepdims=True)
        dxhat = g * scale_p.data
        m1 = dxhat.mean(axis=axes, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=axes, keepdims=True)
        dx = inv_std * (dxhat - m1 - xhat * m2)
        return dx, dscale, dshift

    return record_op("layer_norm", out, (x, scale_p, shift_p), grad_fn)


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

def conv2d(x: Tensor, weights: Tensor, bias: Tensor, stride: int = 1, padding: int = 1) -> Tensor:
    """2-D cross-correlation over (B, C, H, W) with kernel (O, C, kh, kw).

    Bias is shaped (1, O, 1, 1). Implemented as im2col plus one matmul; the
    backward pass reuses the gathered columns.
    """
    B, C, H, W = x.shape
    O, Cw, kh, kw = weights.shape
    if Cw != C:
        raise DimensionError(f"conv2d: input has {C} channels but kernel expects {Cw}")
    if bias.shape != (1, O, 1, 1):
        raise DimensionError(f"conv2d: bias must be (1,{O},1,1), got {bias.shape}")
    if stride < 1:
        raise ContractError(f"conv2d: stride must be >= 1, got {stride}")
    if kh > H + 2 * padding or kw > W + 2 * padding:
        raise DimensionError(
            f"conv2d: kernel {kh}x{kw} exceeds padded input {H + 2 * padding}x{W + 2 * padding}"
        )
    OH = (H + 2 * padding - kh) // stride + 1
    OW = (W + 2 * padding - kw) // stride + 1

    if padding:
        xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    else:
        xp = x.data
    cols = np.empty((B, C, kh, kw, OH, OW), dtype=x.data.dtype)
    for ki in range(kh):
        for kj in range(kw):
            cols[:, :, ki, kj] = xp[:, :, ki : ki + stride * OH : stride, kj : kj + stride * OW : stride]
    cols2 = cols.reshape(B, C * kh * kw, OH * OW)
    w2 = weights.data.reshape(O, C * kh * kw)
    out_data = np.matmul(w2[None], cols2).reshape(B, O, OH, OW) + bias.data
    out = Tensor(out_data, dtype=np.result_type(x.data, weights.data))

    # Skip gradient paths nobody can consume (e.g. frozen kernels): the
    # weight gradient's matmul dominates backward cost.
    tape = active_tape()
    need_x = x.requires_grad or (tape is not None and tape.tracks(x))
    need_w = weights.requires_grad or (tape is not None and tape.tracks(weights))
    need_b = bias.requires_grad or (tape is not None and tape.tracks(bias))

    def grad_fn(g):
        g2 = g.reshape(B, O, OH * OW)
        db = g.sum(axis=(0, 2, 3)).reshape(1, O, 1, 1) if need_b else None
        dw = (
            np.matmul(g2, cols2.transpose(0, 2, 1)).sum(axis=0).reshape(weights.shape)
            if need_w
            else None
        )
        dx = None
        if need_x:
            dcols = np.matmul(w2.T[None], g2).reshape(B, C, kh, kw, OH, OW)
            dxp = np.zeros_like(xp)
            for ki in range(kh):
                for kj in range(kw):
                    dxp[:, :, ki : ki + stride * OH : stride, kj : kj + stride * OW : stride] += dcols[:, :, ki, kj]
            dx = dxp[:, :, padding : padding + H, padding : padding + W] if padding else dxp
        return dx, dw, db

    return record_op("conv2d", out, (x, weights, bias), grad_fn)
