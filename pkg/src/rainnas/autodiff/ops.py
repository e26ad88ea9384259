"""Differentiable operations on :class:`~rainnas.autodiff.tensor.Tensor`.

Conventions:

* convolution is cross-correlation (no kernel flip),
* maxpool breaks ties toward the first index in row-major window order,
* broadcasting is limited to operands of equal rank whose mismatched axes
  have extent 1 on one side (plus plain Python scalars); anything richer
  must be spelled out with explicit reshapes.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, make_tensor

__all__ = [
    "add", "sub", "mul_elem", "div", "neg", "clamp",
    "relu", "sigmoid", "mean_all", "sum_all", "mse_loss",
    "spatial_mean", "spatial_sum", "channel_mean", "channel_max",
    "concat_channels", "reshape", "stack_last",
    "conv2d", "linear", "maxpool2d", "adaptive_avgpool2d",
    "batchnorm2d", "BatchNormState",
]


def _lift(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=np.float64))


def _check_broadcast(sa: tuple[int, ...], sb: tuple[int, ...]) -> None:
    if sa == sb or sa == () or sb == ():
        return
    if len(sa) != len(sb):
        raise ValueError(f"non-broadcastable shapes {sa} and {sb} (rank mismatch)")
    for da, db in zip(sa, sb):
        if da != db and da != 1 and db != 1:
            raise ValueError(f"non-broadcastable shapes {sa} and {sb}")


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of the broadcast above)."""
    if grad.shape == shape:
        return grad
    if shape == ():
        return np.asarray(grad.sum())
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    return grad.sum(axis=axes, keepdims=True)


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_broadcast(a.shape, b.shape)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return make_tensor(a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_broadcast(a.shape, b.shape)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return make_tensor(a.data - b.data, (a, b), backward)


def mul_elem(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_broadcast(a.shape, b.shape)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return make_tensor(a.data * b.data, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_broadcast(a.shape, b.shape)

    def backward(g):
        da = _unbroadcast(g / b.data, a.shape)
        db = _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
        return da, db

    return make_tensor(a.data / b.data, (a, b), backward)


def neg(a) -> Tensor:
    a = _lift(a)
    return make_tensor(-a.data, (a,), lambda g: (-g,))


def pow_scalar(a, exponent: float) -> Tensor:
    a = _lift(a)
    e = float(exponent)

    def backward(g):
        return (g * e * np.power(a.data, e - 1.0),)

    return make_tensor(np.power(a.data, e), (a,), backward)


def clamp(a, lo: float, hi: float) -> Tensor:
    """Clip values; gradient passes only through the strictly interior region."""
    a = _lift(a)
    inside = (a.data > lo) & (a.data < hi)

    def backward(g):
        return (g * inside,)

    return make_tensor(np.clip(a.data, lo, hi), (a,), backward)


# ---------------------------------------------------------------------------
# nonlinearities and reductions
# ---------------------------------------------------------------------------

def relu(a) -> Tensor:
    a = _lift(a)
    mask = a.data > 0.0

    def backward(g):
        return (g * mask,)

    return make_tensor(np.where(mask, a.data, 0.0), (a,), backward)


def sigmoid(a) -> Tensor:
    a = _lift(a)
    x = a.data
    s = np.where(x >= 0.0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                 np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def backward(g):
        return (g * s * (1.0 - s),)

    return make_tensor(s, (a,), backward)


def mean_all(a) -> Tensor:
    a = _lift(a)
    if a.size == 0:
        raise ValueError("mean_all on empty tensor")
    n = a.size

    def backward(g):
        return (np.full(a.shape, float(g) / n),)

    return make_tensor(np.asarray(a.data.mean()), (a,), backward)


def sum_all(a) -> Tensor:
    a = _lift(a)

    def backward(g):
        return (np.full(a.shape, float(g)),)

    return make_tensor(np.asarray(a.data.sum()), (a,), backward)


def mse_loss(pred, target) -> Tensor:
    """Mean of squared differences over all elements."""
    pred, target = _lift(pred), _lift(target)
    if pred.shape != target.shape:
        raise ValueError(f"mse_loss shapes differ: {pred.shape} vs {target.shape}")
    if pred.size == 0:
        raise ValueError("mse_loss on empty tensors")
    diff = pred.data - target.data
    n = pred.size

    def backward(g):
        scale = 2.0 * float(g) / n
        return scale * diff, -scale * diff

    return make_tensor(np.asarray(np.mean(diff * diff)), (pred, target), backward)


def spatial_mean(a) -> Tensor:
    """Mean over the (H, W) plane of an NCHW tensor, keeping dims."""
    a = _lift(a)
    if a.data.ndim != 4:
        raise ValueError(f"spatial_mean expects NCHW, got shape {a.shape}")
    m = a.shape[2] * a.shape[3]

    def backward(g):
        return (np.broadcast_to(g / m, a.shape).copy(),)

    return make_tensor(a.data.mean(axis=(2, 3), keepdims=True), (a,), backward)


def spatial_sum(a) -> Tensor:
    a = _lift(a)
    if a.data.ndim != 4:
        raise ValueError(f"spatial_sum expects NCHW, got shape {a.shape}")

    def backward(g):
        return (np.broadcast_to(g, a.shape).copy(),)

    return make_tensor(a.data.sum(axis=(2, 3), keepdims=True), (a,), backward)


def channel_mean(a) -> Tensor:
    a = _lift(a)
    if a.data.ndim != 4:
        raise ValueError(f"channel_mean expects NCHW, got shape {a.shape}")
    c = a.shape[1]

    def backward(g):
        return (np.broadcast_to(g / c, a.shape).copy(),)

    return make_tensor(a.data.mean(axis=1, keepdims=True), (a,), backward)


def channel_max(a) -> Tensor:
    """Max over channels; gradient goes to the first maximal channel."""
    a = _lift(a)
    if a.data.ndim != 4:
        raise ValueError(f"channel_max expects NCHW, got shape {a.shape}")
    idx = a.data.argmax(axis=1, keepdims=True)

    def backward(g):
        dx = np.zeros(a.shape)
        np.put_along_axis(dx, idx, g, axis=1)
        return (dx,)

    return make_tensor(np.take_along_axis(a.data, idx, axis=1), (a,), backward)


def concat_channels(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    if a.data.ndim != 4 or b.data.ndim != 4:
        raise ValueError("concat_channels expects NCHW operands")
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ValueError(f"concat_channels shapes differ: {a.shape} vs {b.shape}")
    ca = a.shape[1]

    def backward(g):
        return g[:, :ca], g[:, ca:]

    return make_tensor(np.concatenate([a.data, b.data], axis=1), (a, b), backward)


def reshape(a, shape) -> Tensor:
    a = _lift(a)
    old = a.shape

    def backward(g):
        return (g.reshape(old),)

    return make_tensor(a.data.reshape(shape), (a,), backward)


def stack_last(parts) -> Tensor:
    """Stack same-shaped tensors along a new trailing axis."""
    parts = [_lift(p) for p in parts]
    if not parts:
        raise ValueError("stack_last needs at least one tensor")
    shape = parts[0].shape
    for p in parts[1:]:
        if p.shape != shape:
            raise ValueError(f"stack_last shapes differ: {shape} vs {p.shape}")

    def backward(g):
        return tuple(g[..., k] for k in range(len(parts)))

    return make_tensor(np.stack([p.data for p in parts], axis=-1), tuple(parts), backward)


# ---------------------------------------------------------------------------
# layers
# ---------------------------------------------------------------------------

def conv2d(x, weight, bias, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation with per-output-channel bias.

    ``x`` is NCHW, ``weight`` is (C_out, C_in, kh, kw) with odd kh/kw,
    ``bias`` is (C_out,).  Output extent is (H + 2*padding - kh)/stride + 1,
    which must be a positive integer.
    """
    x, weight, bias = _lift(x), _lift(weight), _lift(bias)
    if x.data.ndim != 4 or weight.data.ndim != 4:
        raise ValueError(f"conv2d expects NCHW input and OIHW weight, got {x.shape} and {weight.shape}")
    n, c_in, h, w = x.shape
    c_out, c_in_w, kh, kw = weight.shape
    if c_in != c_in_w:
        raise ValueError(f"conv2d channel mismatch: input {x.shape} vs weight {weight.shape}")
    if bias.shape != (c_out,):
        raise ValueError(f"conv2d bias shape {bias.shape} does not match {c_out} output channels")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError(f"conv2d kernel extents must be odd, got {kh}x{kw}")
    if padding < 0 or stride < 1:
        raise ValueError(f"conv2d needs padding >= 0 and stride >= 1, got {padding}, {stride}")
    if (h + 2 * padding - kh) % stride or (w + 2 * padding - kw) % stride:
        raise ValueError(f"conv2d output extent not integral for input {x.shape}, "
                         f"kernel {kh}x{kw}, stride {stride}, padding {padding}")
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    if oh < 1 or ow < 1:
        raise ValueError(f"conv2d output would be empty for input {x.shape} and kernel {kh}x{kw}")

    # one flat GEMM per call: rows are output pixels, columns are patch taps;
    # channels-last staging keeps every copy contiguous on the channel axis
    xl = np.ascontiguousarray(x.data.transpose(0, 2, 3, 1))
    if padding:
        xl = np.pad(xl, ((0, 0), (padding, padding), (padding, padding), (0, 0)))
    cols = np.empty((n, oh, ow, kh, kw, c_in))
    for i in range(kh):
        for j in range(kw):
            cols[:, :, :, i, j, :] = xl[:, i:i + stride * oh:stride, j:j + stride * ow:stride, :]
    colmat = cols.reshape(n * oh * ow, kh * kw * c_in)
    wmat = np.ascontiguousarray(weight.data.transpose(0, 2, 3, 1)).reshape(c_out, -1)
    out = colmat @ wmat.T
    out += bias.data
    out = np.ascontiguousarray(out.reshape(n, oh, ow, c_out).transpose(0, 3, 1, 2))

    def backward(g):
        gmat = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(n * oh * ow, c_out)
        dw = db = dx = None
        if weight.requires_grad:
            dw = (gmat.T @ colmat).reshape(c_out, kh, kw, c_in).transpose(0, 3, 1, 2)
        if bias.requires_grad:
            db = gmat.sum(axis=0)
        if x.requires_grad:
            dcols = (gmat @ wmat).reshape(n, oh, ow, kh, kw, c_in)
            dxl = np.zeros_like(xl)
            for i in range(kh):
                for j in range(kw):
                    dxl[:, i:i + stride * oh:stride, j:j + stride * ow:stride, :] += dcols[:, :, :, i, j, :]
            if padding:
                dxl = dxl[:, padding:padding + h, padding:padding + w, :]
            dx = np.ascontiguousarray(dxl.transpose(0, 3, 1, 2))
        return dx, dw, db

    return make_tensor(out, (x, weight, bias), backward)


def linear(x, weight, bias) -> Tensor:
    """Affine map: (N, D) @ (D, E) + (E,)."""
    x, weight, bias = _lift(x), _lift(weight), _lift(bias)
    if x.data.ndim != 2 or weight.data.ndim != 2:
        raise ValueError(f"linear expects 2-D input and weight, got {x.shape} and {weight.shape}")
    if x.shape[1] != weight.shape[0]:
        raise ValueError(f"linear shape mismatch: input {x.shape} vs weight {weight.shape}")
    if bias.shape != (weight.shape[1],):
        raise ValueError(f"linear bias shape {bias.shape} does not match weight {weight.shape}")

    def backward(g):
        return g @ weight.data.T, x.data.T @ g, g.sum(axis=0)

    return make_tensor(x.data @ weight.data + bias.data, (x, weight, bias), backward)


def maxpool2d(x, kernel: int, stride: int) -> Tensor:
    """Max pooling with floor output size; ties go to the first window cell."""
    x = _lift(x)
    if x.data.ndim != 4:
        raise ValueError(f"maxpool2d expects NCHW, got shape {x.shape}")
    n, c, h, w = x.shape
    if kernel < 1 or stride < 1:
        raise ValueError(f"maxpool2d needs kernel, stride >= 1, got {kernel}, {stride}")
    oh = (h - kernel) // stride + 1
    ow = (w - kernel) // stride + 1
    if oh < 1 or ow < 1:
        raise ValueError(f"maxpool2d window {kernel} exceeds input {x.shape}")

    windows = np.stack([
        x.data[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride]
        for i in range(kernel) for j in range(kernel)
    ])
    idx = windows.argmax(axis=0)
    out = np.take_along_axis(windows, idx[None], axis=0)[0]

    def backward(g):
        dx = np.zeros(x.shape)
        cell = 0
        for i in range(kernel):
            for j in range(kernel):
                view = dx[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride]
                view += np.where(idx == cell, g, 0.0)
                cell += 1
        return (dx,)

    return make_tensor(out, (x,), backward)


def adaptive_avgpool2d(x, out_h: int, out_w: int) -> Tensor:
    """Average pooling onto an (out_h, out_w) grid of near-equal cells."""
    x = _lift(x)
    if x.data.ndim != 4:
        raise ValueError(f"adaptive_avgpool2d expects NCHW, got shape {x.shape}")
    n, c, h, w = x.shape
    if out_h < 1 or out_w < 1 or out_h > h or out_w > w:
        raise ValueError(f"adaptive_avgpool2d target {out_h}x{out_w} invalid for input {x.shape}")

    def bounds(size, out):
        return [(i * size // out, -((-(i + 1) * size) // out)) for i in range(out)]

    hb, wb = bounds(h, out_h), bounds(w, out_w)
    out = np.empty((n, c, out_h, out_w))
    for i, (h0, h1) in enumerate(hb):
        for j, (w0, w1) in enumerate(wb):
            out[:, :, i, j] = x.data[:, :, h0:h1, w0:w1].mean(axis=(2, 3))

    def backward(g):
        dx = np.zeros(x.shape)
        for i, (h0, h1) in enumerate(hb):
            for j, (w0, w1) in enumerate(wb):
                dx[:, :, h0:h1, w0:w1] += g[:, :, i:i + 1, j:j + 1] / ((h1 - h0) * (w1 - w0))
        return (dx,)

    return make_tensor(out, (x,), backward)


class BatchNormState:
    """Running first/second moments consumed by eval-mode batchnorm."""

    def __init__(self, channels: int):
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)


def batchnorm2d(x, gamma, beta, state: BatchNormState, training: bool,
                eps: float = 1e-5, momentum: float = 0.1,
                update_running: bool = True) -> Tensor:
    """Per-channel batch normalization over (batch, H, W).

    Training mode normalizes by the batch moments and, unless
    ``update_running`` is off, folds them into ``state`` with the given
    momentum (unbiased variance).  Eval mode normalizes by ``state``.
    """
    x, gamma, beta = _lift(x), _lift(gamma), _lift(beta)
    if x.data.ndim != 4:
        raise ValueError(f"batchnorm2d expects NCHW, got shape {x.shape}")
    n, c, h, w = x.shape
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ValueError(f"batchnorm2d affine shapes {gamma.shape}/{beta.shape} do not match {c} channels")
    if eps <= 0:
        raise ValueError(f"batchnorm2d needs eps > 0, got {eps}")

    if training:
        m = n * h * w
        if m <= 1:
            raise ValueError("batchnorm2d in train mode needs more than one value per channel")
        mean = x.data.mean(axis=(0, 2, 3))
        xhat = x.data - mean[None, :, None, None]
        var = np.einsum("nchw,nchw->c", xhat, xhat) / m
        if update_running:
            state.running_mean = (1.0 - momentum) * state.running_mean + momentum * mean
            state.running_var = (1.0 - momentum) * state.running_var + momentum * var * m / (m - 1)
        inv = 1.0 / np.sqrt(var + eps)
        xhat *= inv[None, :, None, None]
        out = gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None]

        def backward(g):
            dbeta = g.sum(axis=(0, 2, 3))
            dgamma = np.einsum("nchw,nchw->c", g, xhat)
            dx = None
            if x.requires_grad:
                # dx = gamma*inv/m * (m*g - dbeta - xhat*dgamma), few temporaries
                dx = g - (dbeta / m)[None, :, None, None]
                dx -= xhat * (dgamma / m)[None, :, None, None]
                dx *= (gamma.data * inv)[None, :, None, None]
            return (dx,
                    dgamma if gamma.requires_grad else None,
                    dbeta if beta.requires_grad else None)

        return make_tensor(out, (x, gamma, beta), backward)

    inv = 1.0 / np.sqrt(state.running_var + eps)
    xhat = (x.data - state.running_mean[None, :, None, None]) * inv[None, :, None, None]
    out = gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None]

    def backward(g):
        dbeta = g.sum(axis=(0, 2, 3))
        dgamma = (g * xhat).sum(axis=(0, 2, 3))
        dx = g * (gamma.data * inv)[None, :, None, None]
        return dx, dgamma, dbeta

    return make_tensor(out, (x, gamma, beta), backward)


# ---------------------------------------------------------------------------
# operator sugar on Tensor
# ---------------------------------------------------------------------------

Tensor.__add__ = add
Tensor.__radd__ = lambda self, other: add(other, self)
Tensor.__sub__ = sub
Tensor.__rsub__ = lambda self, other: sub(other, self)
Tensor.__mul__ = mul_elem
Tensor.__rmul__ = lambda self, other: mul_elem(other, self)
Tensor.__truediv__ = div
Tensor.__rtruediv__ = lambda self, other: div(other, self)
Tensor.__neg__ = neg
Tensor.__pow__ = pow_scalar
