"""Dense NCHW tensors and the stride-1 kernels every other module builds on.

All values are float32; tolerances quoted elsewhere assume that. Operations
are pure functions of their inputs. ``conv2d`` is the production im2col path;
``conv2d_reference`` is the direct-summation path it must agree with.

The ``*_raw`` helpers operate on bare ndarrays of any float dtype so that the
differentiation layer can reuse them (including in float64 shadow runs).
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, DimensionError


@dataclass(frozen=True)
class Tensor:
    """A rank-4 (batch, channels, rows, cols) array of 32-bit reals."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.ndim != 4:
            raise DimensionError(f"tensor must be rank 4 (n,c,h,w), got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise DimensionError(f"all tensor dims must be >= 1, got {arr.shape}")
        object.__setattr__(self, "data", arr)

    @property
    def dims(self):
        return self.data.shape

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def c(self):
        return self.data.shape[1]

    @property
    def h(self):
        return self.data.shape[2]

    @property
    def w(self):
        return self.data.shape[3]

    @staticmethod
    def zeros(n, c, h, w):
        return Tensor(np.zeros((n, c, h, w), dtype=np.float32))

    @staticmethod
    def full(n, c, h, w, value):
        return Tensor(np.full((n, c, h, w), value, dtype=np.float32))


def _shape_of(x):
    # works for ndarrays and for autodiff nodes, which expose .shape
    return tuple(x.shape)


@dataclass(frozen=True)
class ConvParams:
    """Weights of one convolution: weight (O,I,kh,kw), bias (O), zero padding.

    Kernel sides must be odd. ``padding`` is per spatial axis; use
    :meth:`same` for padding that preserves the spatial size. The weight and
    bias may be ndarrays (inference) or autodiff nodes (training).
    """

    weight: object
    bias: object
    padding: tuple = field(default=(0, 0))

    def __post_init__(self):
        w = self.weight
        if isinstance(w, np.ndarray):
            object.__setattr__(self, "weight", np.ascontiguousarray(w, dtype=np.float32))
        if isinstance(self.bias, np.ndarray):
            object.__setattr__(self, "bias", np.ascontiguousarray(self.bias, dtype=np.float32))
        shape = _shape_of(self.weight)
        if len(shape) != 4:
            raise DimensionError(f"conv weight must be rank 4 (O,I,kh,kw), got {shape}")
        o, i, kh, kw = shape
        if kh % 2 == 0 or kw % 2 == 0:
            raise ConfigError(f"kernel sides must be odd, got {kh}x{kw}")
        if _shape_of(self.bias) != (o,):
            raise DimensionError(f"bias shape {_shape_of(self.bias)} does not match {o} output channels")
        pad = self.padding
        if isinstance(pad, int):
            pad = (pad, pad)
        pad = (int(pad[0]), int(pad[1]))
        if pad[0] < 0 or pad[1] < 0:
            raise ConfigError(f"padding must be non-negative, got {pad}")
        object.__setattr__(self, "padding", pad)

    @property
    def out_ch(self):
        return _shape_of(self.weight)[0]

    @property
    def in_ch(self):
        return _shape_of(self.weight)[1]

    @property
    def kh(self):
        return _shape_of(self.weight)[2]

    @property
    def kw(self):
        return _shape_of(self.weight)[3]

    @classmethod
    def same(cls, weight, bias):
        """Conv params with padding that keeps the output spatial size equal."""
        kh, kw = _shape_of(weight)[2:]
        return cls(weight, bias, (kh // 2, kw // 2))


# ---------------------------------------------------------------------------
# raw ndarray kernels (dtype-preserving, shared with the autodiff layer)
# ---------------------------------------------------------------------------

def conv2d_raw(x, w, b, padding):
    """Stride-1 cross-correlation of (n,c,h,w) with (o,c,kh,kw) plus bias."""
    ph, pw = padding
    n, c, h, wid = x.shape
    o, _, kh, kw = w.shape
    oh = h + 2 * ph - kh + 1
    ow = wid + 2 * pw - kw + 1
    if oh < 1 or ow < 1:
        raise DimensionError(f"kernel {kh}x{kw} with padding {padding} exceeds input {h}x{wid}")
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))           # n,c,oh,ow,kh,kw
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * kh * kw)
    out = cols @ w.reshape(o, -1).T
    out = out.reshape(n, oh, ow, o).transpose(0, 3, 1, 2)
    return out + b.reshape(1, o, 1, 1)


def conv2d_input_grad_raw(grad_out, w, padding, in_hw):
    """Gradient of conv2d_raw w.r.t. its input (full correlation, flipped kernel)."""
    ph, pw = padding
    h, wid = in_hw
    o, c, kh, kw = w.shape
    w_t = w.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1]
    zero = np.zeros(c, dtype=grad_out.dtype)
    grad_padded = conv2d_raw(grad_out, np.ascontiguousarray(w_t), zero, (kh - 1, kw - 1))
    return grad_padded[:, :, ph:ph + h, pw:pw + wid]


def conv2d_weight_grad_raw(x, grad_out, padding, kernel_hw):
    """Gradient of conv2d_raw w.r.t. its weight."""
    ph, pw = padding
    kh, kw = kernel_hw
    oh, ow = grad_out.shape[2:]
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, :oh, :ow]
    return np.einsum("ncyxij,noyx->ocij", win, grad_out, optimize=True)


def pixel_shuffle_raw(x, r):
    n, c, h, w = x.shape
    c_out = c // (r * r)
    y = x.reshape(n, c_out, r, r, h, w)
    return np.ascontiguousarray(y.transpose(0, 1, 4, 2, 5, 3)).reshape(n, c_out, h * r, w * r)


def pixel_unshuffle_raw(y, r):
    """Exact inverse of pixel_shuffle_raw (used as its gradient permutation)."""
    n, c, hr, wr = y.shape
    h, w = hr // r, wr // r
    z = y.reshape(n, c, h, r, w, r)
    return np.ascontiguousarray(z.transpose(0, 1, 3, 5, 2, 4)).reshape(n, c * r * r, h, w)


def leaky_relu_raw(x, slope):
    return np.where(x >= 0, x, slope * x)


def diag_filter_raw(scale, base):
    """Depthwise fixed filter as a full (O,O,3,3) kernel: s[o]*base on the diagonal."""
    o = scale.shape[0]
    w = np.zeros((o, o) + base.shape, dtype=np.result_type(scale, base))
    w[np.arange(o), np.arange(o)] = scale[:, None, None] * base
    return w


# ---------------------------------------------------------------------------
# Tensor-level operations
# ---------------------------------------------------------------------------

def conv2d(x: Tensor, p: ConvParams) -> Tensor:
    """Stride-1 zero-padded convolution (cross-correlation) of x with p."""
    if x.c != p.in_ch:
        raise DimensionError(f"input has {x.c} channels but kernel expects {p.in_ch}")
    return Tensor(conv2d_raw(x.data, p.weight, p.bias, p.padding))


def conv2d_reference(x: Tensor, p: ConvParams) -> Tensor:
    """Direct-summation convolution; the correctness reference for conv2d."""
    if x.c != p.in_ch:
        raise DimensionError(f"input has {x.c} channels but kernel expects {p.in_ch}")
    ph, pw = p.padding
    n, c, h, w = x.dims
    o, _, kh, kw = p.weight.shape
    oh = h + 2 * ph - kh + 1
    ow = w + 2 * pw - kw + 1
    if oh < 1 or ow < 1:
        raise DimensionError(f"kernel {kh}x{kw} with padding {p.padding} exceeds input {h}x{w}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    out = np.empty((n, o, oh, ow), dtype=np.float32)
    for bi in range(n):
        for oi in range(o):
            for y in range(oh):
                for xq in range(ow):
                    patch = xp[bi, :, y:y + kh, xq:xq + kw]
                    out[bi, oi, y, xq] = np.sum(patch * p.weight[oi]) + p.bias[oi]
    return Tensor(out)


def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    """Rearrange r*r channel groups into an r-times upscaled spatial map."""
    r = int(r)
    if r < 1:
        raise ConfigError(f"upscale factor must be >= 1, got {r}")
    if x.c % (r * r) != 0:
        raise DimensionError(f"channels {x.c} not divisible by r^2 = {r * r}")
    return Tensor(pixel_shuffle_raw(x.data, r))


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.dims != b.dims:
        raise DimensionError(f"add requires equal dims, got {a.dims} vs {b.dims}")
    return Tensor(a.data + b.data)


def concat_channels(xs) -> Tensor:
    xs = list(xs)
    if not xs:
        raise DimensionError("concat of zero tensors")
    base = xs[0].dims
    for t in xs[1:]:
        if (t.n, t.h, t.w) != (base[0], base[2], base[3]):
            raise DimensionError(f"concat requires equal n,h,w: {t.dims} vs {base}")
    return Tensor(np.concatenate([t.data for t in xs], axis=1))


def slice_channels(x: Tensor, start: int, stop: int) -> Tensor:
    if not (0 <= start < stop <= x.c):
        raise DimensionError(f"channel slice [{start}:{stop}] out of range for {x.c} channels")
    return Tensor(x.data[:, start:stop].copy())


def leaky_relu(x: Tensor, slope: float) -> Tensor:
    return Tensor(leaky_relu_raw(x.data, np.float32(slope)))


def diag_filter(scale: np.ndarray, base: np.ndarray) -> np.ndarray:
    """Eager counterpart of the taped diag_filter op; returns a conv weight."""
    return diag_filter_raw(np.asarray(scale, dtype=np.float32), base)
