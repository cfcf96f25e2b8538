"""Reverse-mode differentiation over exactly the ops the networks and losses
use, plus the Adam optimizer and cosine learning-rate schedule.

The op functions mirror the eager tensor module's names and signatures, so the
forward wiring in `network` and `reparam` runs unchanged on either namespace:
eager Tensors for inference, Nodes here for training. Values keep whatever
float dtype they are given, which lets gradient checks run in a float64 shadow.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, InputError, UsageError
from .tensor import (
    conv2d_input_grad_raw,
    conv2d_raw,
    conv2d_weight_grad_raw,
    diag_filter_raw,
    leaky_relu_raw,
    pixel_shuffle_raw,
    pixel_unshuffle_raw,
)


class Node:
    """One recorded value: its ndarray, the parents it came from, and a
    closure that routes an incoming gradient back to those parents."""

    __slots__ = ("value", "parents", "grad", "_backward_fn")

    def __init__(self, value, parents=(), backward_fn=None):
        self.value = np.asarray(value)
        self.parents = tuple(parents)
        self.grad = None
        self._backward_fn = backward_fn

    @property
    def shape(self):
        return self.value.shape

    @property
    def dims(self):
        return self.value.shape


def param(value) -> Node:
    """A leaf node; dtype is preserved as given."""
    return Node(np.asarray(value))


def _accum(node: Node, g):
    if node.grad is None:
        node.grad = np.zeros_like(node.value)
    node.grad = node.grad + g


def _value(x):
    return x.value if isinstance(x, Node) else np.asarray(x)


def backward(root: Node):
    """Seed the (scalar) root with gradient 1 and sweep the graph once in
    reverse topological order; leaves end up with their gradients in .grad."""
    if root.value.size != 1:
        raise UsageError(f"backward needs a scalar root, got shape {root.value.shape}")
    topo, visited = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in reversed(node.parents):
            if id(parent) not in visited:
                stack.append((parent, False))
    root.grad = np.ones_like(root.value)
    for node in reversed(topo):
        if node._backward_fn is not None and node.grad is not None:
            node._backward_fn(node.grad)


# ---------------------------------------------------------------------------
# differentiable ops (signatures mirror the eager tensor module)
# ---------------------------------------------------------------------------

def conv2d(x: Node, p) -> Node:
    """Convolution whose weight/bias may be Nodes (trained) or ndarrays (fixed)."""
    xv, wv, bv = x.value, _value(p.weight), _value(p.bias)
    if xv.shape[1] != wv.shape[1]:
        raise DimensionError(f"input has {xv.shape[1]} channels, weight expects {wv.shape[1]}")
    out = conv2d_raw(xv, wv, bv, p.padding)
    parents = [x]
    if isinstance(p.weight, Node):
        parents.append(p.weight)
    if isinstance(p.bias, Node):
        parents.append(p.bias)

    def bw(g):
        _accum(x, conv2d_input_grad_raw(g, wv, p.padding, xv.shape[2:]))
        if isinstance(p.weight, Node):
            _accum(p.weight, conv2d_weight_grad_raw(xv, g, p.padding, wv.shape[2:]))
        if isinstance(p.bias, Node):
            _accum(p.bias, g.sum(axis=(0, 2, 3)))

    return Node(out, parents, bw)


def add(a: Node, b: Node) -> Node:
    if a.shape != b.shape:
        raise DimensionError(f"add shapes differ: {a.shape} vs {b.shape}")

    def bw(g):
        _accum(a, g)
        _accum(b, g)

    return Node(a.value + b.value, (a, b), bw)


def scale(x: Node, s: float) -> Node:
    s = float(s)

    def bw(g):
        _accum(x, s * g)

    return Node(s * x.value, (x,), bw)


def concat_channels(xs) -> Node:
    xs = list(xs)
    sizes = [n.shape[1] for n in xs]
    out = np.concatenate([n.value for n in xs], axis=1)

    def bw(g):
        start = 0
        for n, c in zip(xs, sizes):
            _accum(n, g[:, start:start + c])
            start += c

    return Node(out, tuple(xs), bw)


def slice_channels(x: Node, start: int, stop: int) -> Node:
    if not (0 <= start < stop <= x.shape[1]):
        raise DimensionError(f"channel slice [{start}:{stop}] out of range for {x.shape[1]}")

    def bw(g):
        full = np.zeros_like(x.value)
        full[:, start:stop] = g
        _accum(x, full)

    return Node(x.value[:, start:stop], (x,), bw)


def leaky_relu(x: Node, slope: float) -> Node:
    mask = x.value >= 0

    def bw(g):
        _accum(x, np.where(mask, g, slope * g))

    return Node(leaky_relu_raw(x.value, slope), (x,), bw)


def pixel_shuffle(x: Node, r: int) -> Node:
    if x.shape[1] % (r * r):
        raise DimensionError(f"{x.shape[1]} channels not divisible by {r}^2")

    def bw(g):
        _accum(x, pixel_unshuffle_raw(g, r))

    return Node(pixel_shuffle_raw(x.value, r), (x,), bw)


def diag_filter(scale_vec, base) -> Node:
    """Per-channel scaled copy of a fixed 3x3 filter on the kernel diagonal;
    differentiable in the scale vector."""
    sv = _value(scale_vec)
    base = np.asarray(base)
    out = diag_filter_raw(sv, base)
    if not isinstance(scale_vec, Node):
        return Node(out)
    o = sv.shape[0]

    def bw(g):
        diag = g[np.arange(o), np.arange(o)]
        _accum(scale_vec, (diag * base).sum(axis=(1, 2)))

    return Node(out, (scale_vec,), bw)


def crop_spatial(x: Node, y0: int, x0: int, h: int, w: int) -> Node:
    if y0 < 0 or x0 < 0 or y0 + h > x.shape[2] or x0 + w > x.shape[3]:
        raise DimensionError(f"crop {h}x{w}@({y0},{x0}) exceeds {x.shape[2]}x{x.shape[3]}")

    def bw(g):
        full = np.zeros_like(x.value)
        full[:, :, y0:y0 + h, x0:x0 + w] = g
        _accum(x, full)

    return Node(x.value[:, :, y0:y0 + h, x0:x0 + w], (x,), bw)


def patch_variance(x: Node, n: int) -> Node:
    """Unbiased per-patch variance over non-overlapping n-by-n tiles; spatial
    dims must already be divisible by n (crop first)."""
    b, c, h, w = x.shape
    if h % n or w % n:
        raise InputError(f"spatial dims {h}x{w} not divisible by patch side {n}")
    tiles = x.value.reshape(b, c, h // n, n, w // n, n)
    means = tiles.mean(axis=(3, 5), keepdims=True)
    centered = tiles - means
    out = (centered ** 2).sum(axis=(3, 5)) / (n * n - 1)

    def bw(g):
        gt = g.reshape(b, c, h // n, 1, w // n, 1)
        full = (2.0 / (n * n - 1)) * centered * gt
        _accum(x, full.reshape(b, c, h, w))

    return Node(out, (x,), bw)


def gv_distance(vs, vh) -> Node:
    """Batch mean of ||vh - vs||_2 / patch-count over per-image variance maps."""
    a, b = _value(vs), _value(vh)
    if a.shape != b.shape:
        raise DimensionError(f"variance map shapes differ: {a.shape} vs {b.shape}")
    bsz = a.shape[0]
    diff = (b - a).reshape(bsz, -1)
    patches = diff.shape[1]
    norms = np.sqrt((diff ** 2).sum(axis=1))
    out = np.asarray((norms / patches).mean(), dtype=a.dtype)
    parents = tuple(t for t in (vs, vh) if isinstance(t, Node))

    def bw(g):
        g = float(g)
        safe = np.where(norms > 0, norms, 1.0)
        unit = diff / safe[:, None]
        unit[norms == 0] = 0.0
        per = (g / (bsz * patches)) * unit
        if isinstance(vs, Node):
            _accum(vs, (-per).reshape(a.shape))
        if isinstance(vh, Node):
            _accum(vh, per.reshape(b.shape))

    return Node(out, parents, bw)


def l1_loss(x: Node, target) -> Node:
    tv = _value(target)
    diff = x.value - tv
    out = np.asarray(np.abs(diff).mean(), dtype=x.value.dtype)
    parents = (x, target) if isinstance(target, Node) else (x,)

    def bw(g):
        s = float(g) * np.sign(diff) / diff.size
        _accum(x, s)
        if isinstance(target, Node):
            _accum(target, -s)

    return Node(out, parents, bw)


def l2_loss(x: Node, target) -> Node:
    tv = _value(target)
    diff = x.value - tv
    out = np.asarray((diff ** 2).mean(), dtype=x.value.dtype)
    parents = (x, target) if isinstance(target, Node) else (x,)

    def bw(g):
        s = float(g) * 2.0 * diff / diff.size
        _accum(x, s)
        if isinstance(target, Node):
            _accum(target, -s)

    return Node(out, parents, bw)


def total_sum(x: Node) -> Node:
    def bw(g):
        _accum(x, float(g) * np.ones_like(x.value))

    return Node(np.asarray(x.value.sum(), dtype=x.value.dtype), (x,), bw)


# ---------------------------------------------------------------------------
# edge-enhanced loss as a taped graph
# ---------------------------------------------------------------------------

def eg_loss_graph(sr: Node, hr, cfg):
    """Build the edge-enhanced loss over the tape. `hr` is a constant array.

    Returns (total node, components dict of plain floats).
    """
    from .loss import GRADIENT_FILTERS, gradient_conv_params, gray_conv_params

    hrv = _value(hr)
    total = l1_loss(sr, hrv)
    comps = {"l1": float(total.value)}
    gray_p = gray_conv_params()
    sr_gray = conv2d(sr, gray_p)
    hr_gray = conv2d_raw(hrv, gray_p.weight.astype(hrv.dtype), np.zeros(1, dtype=hrv.dtype), (0, 0))
    lams = {"sobel_x": cfg.lambda_x, "sobel_y": cfg.lambda_y, "laplacian": cfg.lambda_l}
    n = cfg.patch
    for name in GRADIENT_FILTERS:
        gp = gradient_conv_params(name)
        gs = conv2d(sr_gray, gp)
        gh = conv2d_raw(hr_gray, gp.weight.astype(hrv.dtype), np.zeros(1, dtype=hrv.dtype), (1, 1))
        h, w = gs.shape[2:]
        hh, ww = (h // n) * n, (w // n) * n
        if hh == 0 or ww == 0:
            raise InputError(f"image {h}x{w} is smaller than the {n}x{n} patch")
        y0, x0 = (h - hh) // 2, (w - ww) // 2
        vs = patch_variance(crop_spatial(gs, y0, x0, hh, ww), n)
        gh_crop = gh[:, :, y0:y0 + hh, x0:x0 + ww]
        tiles = gh_crop.reshape(gh.shape[0], 1, hh // n, n, ww // n, n)
        vh = tiles.var(axis=(3, 5), ddof=1)
        term = gv_distance(vs, vh)
        comps[name] = float(term.value)
        total = add(total, scale(term, lams[name]))
    return total, comps


# ---------------------------------------------------------------------------
# optimizer and schedule
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    """First/second moment estimates per parameter name, plus the step count."""

    m: dict
    v: dict
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(params: dict) -> AdamState:
    return AdamState(m={k: np.zeros_like(v) for k, v in params.items()},
                     v={k: np.zeros_like(v) for k, v in params.items()})


def adam_step(params: dict, grads: dict, state: AdamState, lr: float) -> dict:
    """One bias-corrected Adam update; mutates the moment state, returns the
    updated parameter mapping (same names, new arrays)."""
    state.t += 1
    t = state.t
    out = {}
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            out[name] = p
            continue
        g = g.astype(p.dtype, copy=False)
        state.m[name] = state.beta1 * state.m[name] + (1 - state.beta1) * g
        state.v[name] = state.beta2 * state.v[name] + (1 - state.beta2) * (g * g)
        m_hat = state.m[name] / (1 - state.beta1 ** t)
        v_hat = state.v[name] / (1 - state.beta2 ** t)
        out[name] = (p - lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(p.dtype)
    return out


def cosine_lr(step: int, total: int, lr0: float, lr_min: float = 0.0) -> float:
    """lr(t) = lr_min + (lr0 - lr_min) * (1 + cos(pi t / T)) / 2, clamped to [0, T]."""
    if total < 1:
        raise UsageError("schedule length must be >= 1")
    t = min(max(step, 0), total)
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + np.cos(np.pi * t / total))


# ---------------------------------------------------------------------------
# parameter lifting
# ---------------------------------------------------------------------------

def lift(values: dict) -> dict:
    """Wrap a flat name->array mapping as leaf nodes (one fresh tape)."""
    return {name: param(arr) for name, arr in values.items()}


def gradients(leaves: dict) -> dict:
    """Collect accumulated gradients after backward; zeros where untouched."""
    return {name: (n.grad if n.grad is not None else np.zeros_like(n.value))
            for name, n in leaves.items()}
